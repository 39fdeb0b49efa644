"""Benchmark harness: synthetic/COCO-style layouts, method grid, CSV output.

One task is a (layout, seed) cell; every method in the grid consumes the
same initial latent for that cell, edited or biased per method.  Results are
folded in task order, so the CSV is byte-stable no matter how many workers
ran the grid.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .detect import EvalRecord, MetricsTable, detect, evaluate, summarize
from .editing import GuidanceItem, LayoutGuidance
from .errors import ConfigError, GuidanceError, IngestError, NoiseLoomError
from .latent import Region
from .masks import LogitBias, paint_bias, soft_bias
from .rng import uniforms
from .toy import ToyEngine, ToyModelParams

log = logging.getLogger(__name__)

METHODS = ("baseline", "swap", "paint", "soft", "paint+swap", "soft+swap")

VOCABULARY = ("dog", "cat", "car", "bus", "bird", "horse", "sheep", "boat")


@dataclass(frozen=True)
class LayoutSample:
    """A prompt plus the layout guidance evaluated against it."""

    categories: tuple[str, ...]
    guidance: LayoutGuidance


def _random_region(seed: int, tag: str, grid: tuple[int, int], max_fraction: float) -> Region:
    rows, cols = grid
    u = uniforms(seed, tag, np.arange(4, dtype=np.uint64))
    fraction = 0.02 + u[0] * (max_fraction - 0.02)
    aspect = 0.5 + u[1] * 1.5
    area = fraction * rows * cols
    height = int(np.clip(round(math.sqrt(area * aspect)), 1, rows))
    width = int(np.clip(round(math.sqrt(area / aspect)), 1, cols))
    top = int(u[2] * (rows - height + 1))
    left = int(u[3] * (cols - width + 1))
    return Region(top, left, top + height, left + width)


def synthetic_layouts(
    count: int,
    layout_seed: int,
    grid: tuple[int, int],
    vocab: tuple[str, ...] = VOCABULARY,
) -> list[LayoutSample]:
    """Seeded random layouts alternating single- and two-object guidance.

    Box area fractions fall in [0.02, 0.5] (capped at 0.25 each for pairs so
    disjoint placement always succeeds); categories are drawn without
    replacement from the vocabulary.
    """
    samples = []
    for i in range(count):
        picks = np.argsort(uniforms(layout_seed, f"layout:{i}:cats", np.arange(len(vocab), dtype=np.uint64)))
        if i % 2 == 0:
            region = _random_region(layout_seed, f"layout:{i}:box", grid, 0.5)
            cats = (vocab[int(picks[0])],)
            items = (GuidanceItem(region, cats[0]),)
        else:
            first = _random_region(layout_seed, f"layout:{i}:box1", grid, 0.25)
            second = None
            for attempt in range(1000):
                cand = _random_region(layout_seed, f"layout:{i}:box2:{attempt}", grid, 0.25)
                if not first.overlaps(cand):
                    second = cand
                    break
            if second is None:
                raise ConfigError(f"could not place disjoint boxes for layout {i}")
            cats = (vocab[int(picks[0])], vocab[int(picks[1])])
            items = (GuidanceItem(first, cats[0]), GuidanceItem(second, cats[1]))
        samples.append(LayoutSample(categories=cats, guidance=LayoutGuidance(items)))
    return samples


@dataclass(frozen=True)
class BenchmarkConfig:
    layouts: tuple[LayoutSample, ...]
    methods: tuple[str, ...] = METHODS
    seeds: int = 50
    base_seed: int = 1000
    sampler: str = "plms"
    mask_w_in: float = 1.0
    mask_w_out: float = -2.0
    min_detection_area: int = 2
    workers: int = 1
    params: ToyModelParams = field(default_factory=ToyModelParams)

    def validate(self) -> None:
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {METHODS}")
        if not self.layouts:
            raise ConfigError("benchmark needs at least one layout")
        if self.seeds < 1:
            raise ConfigError(f"seeds must be >= 1, got {self.seeds}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not (self.mask_w_in >= 0 >= self.mask_w_out):
            raise ConfigError(f"need w_in >= 0 >= w_out, got ({self.mask_w_in}, {self.mask_w_out})")
        grid = (self.params.block_rows, self.params.block_cols)
        for i, sample in enumerate(self.layouts):
            try:
                sample.guidance.validate(grid[0], grid[1], sample.categories)
            except NoiseLoomError as exc:
                raise ConfigError(f"layout {i} is invalid: {exc}") from exc


def _method_inputs(method: str) -> tuple[bool, str | None]:
    """(needs swap, mask kind) for one method name."""
    return ("swap" in method, "paint" if "paint" in method else "soft" if "soft" in method else None)


def _mask_for(kind: str | None, engine: ToyEngine, sample: LayoutSample, cfg: BenchmarkConfig) -> LogitBias | None:
    grid = (cfg.params.block_rows, cfg.params.block_cols)
    if kind == "paint":
        return paint_bias(sample.guidance, cfg.mask_w_in, grid, engine.tokens)
    if kind == "soft":
        return soft_bias(sample.guidance, cfg.mask_w_in, cfg.mask_w_out, grid, engine.tokens)
    return None


def run_cell(cfg: BenchmarkConfig, layout_index: int, rep: int) -> dict[str, list[EvalRecord]]:
    """Evaluate every method on one (layout, seed) cell from a shared latent."""
    sample = cfg.layouts[layout_index]
    engine = ToyEngine(sample.categories, cfg.params)
    z = engine.sample(cfg.base_seed + rep)
    pairing_seed = layout_index * 1_000_003 + rep
    grid_blocks = cfg.params.block_rows * cfg.params.block_cols
    swapped = None
    out: dict[str, list[EvalRecord]] = {}
    for method in cfg.methods:
        needs_swap, mask_kind = _method_inputs(method)
        start = z
        if needs_swap:
            if swapped is None:
                swapped, _ = engine.swap(z, sample.guidance, pairing_seed)
            start = swapped
        bias = _mask_for(mask_kind, engine, sample, cfg)
        result = engine.generate(start, cfg.sampler, extra_bias=bias)
        detections = detect(result.label_map, cfg.min_detection_area)
        out[method] = evaluate(detections, sample.guidance, grid_blocks)
    return out


def _run_cell_star(args) -> dict[str, list[EvalRecord]]:
    return run_cell(*args)


def run_benchmark(cfg: BenchmarkConfig) -> MetricsTable:
    """Full method x layout x seed grid, deterministically folded."""
    cfg.validate()
    tasks = [
        (cfg, layout_index, rep)
        for layout_index in range(len(cfg.layouts))
        for rep in range(cfg.seeds)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            cell_results = list(pool.map(_run_cell_star, tasks, chunksize=8))
    else:
        cell_results = [run_cell(*task) for task in tasks]
    per_method: dict[str, list[EvalRecord]] = {m: [] for m in cfg.methods}
    for cell in cell_results:  # task order == fold order
        for method in cfg.methods:
            per_method[method].extend(cell[method])
    return MetricsTable(rows=tuple(summarize(m, per_method[m]) for m in cfg.methods))


def load_benchmark_config(payload) -> BenchmarkConfig:
    """Benchmark config from JSON: methods, seeds, layout source, weights."""
    if isinstance(payload, (str, bytes)):
        try:
            payload = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"benchmark config is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("benchmark config must be a JSON object")
    params = ToyModelParams(**payload.get("toy", {}))
    layouts_spec = payload.get("layouts", {"kind": "synthetic", "count": 6, "seed": 17})
    kind = layouts_spec.get("kind", "synthetic")
    grid = (params.block_rows, params.block_cols)
    if kind == "synthetic":
        layouts = synthetic_layouts(
            int(layouts_spec.get("count", 6)), int(layouts_spec.get("seed", 17)), grid
        )
    elif kind == "coco":
        layouts = load_coco_layouts(layouts_spec["path"], grid)
        limit = layouts_spec.get("limit")
        if limit is not None:
            layouts = layouts[: int(limit)]
    elif kind == "inline":
        layouts = []
        for entry in layouts_spec["items"]:
            items = tuple(
                GuidanceItem(Region(*[int(v) for v in it["box"]]), str(it["category"]))
                for it in entry["guidance"]["items"]
            )
            layouts.append(
                LayoutSample(tuple(entry["categories"]), LayoutGuidance(items))
            )
    else:
        raise ConfigError(f"unknown layout source kind {kind!r}")
    mask = payload.get("mask", {})
    cfg = BenchmarkConfig(
        layouts=tuple(layouts),
        methods=tuple(payload.get("methods", METHODS)),
        seeds=int(payload.get("seeds", 50)),
        base_seed=int(payload.get("base_seed", 1000)),
        sampler=str(payload.get("sampler", "plms")),
        mask_w_in=float(mask.get("w_in", 1.0)),
        mask_w_out=float(mask.get("w_out", -2.0)),
        min_detection_area=int(payload.get("min_detection_area", 2)),
        workers=int(payload.get("workers", 1)),
        params=params,
    )
    cfg.validate()
    return cfg


def load_coco_layouts(path, grid: tuple[int, int], max_objects: int = 2) -> list[LayoutSample]:
    """COCO-style ingest: keep samples whose box categories all appear in a caption.

    Pixel boxes are scaled to the block grid rounding outward.  Samples are
    capped at ``max_objects`` annotations (taken in file order); samples
    whose kept annotations repeat a category or overlap after scaling are
    dropped, since the swap engine cannot serve them.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise IngestError(f"{path}: {exc}") from exc
    try:
        categories = {int(c["id"]): str(c["name"]) for c in payload.get("categories", [])}
        images = {int(im["id"]): (float(im["width"]), float(im["height"])) for im in payload.get("images", [])}
        captions: dict[int, list[str]] = {}
        for cap in payload.get("captions", []):
            captions.setdefault(int(cap["image_id"]), []).append(str(cap["caption"]))
        boxes: dict[int, list[tuple[list[float], str]]] = {}
        for ann in payload.get("annotations", []):
            if "caption" in ann:
                captions.setdefault(int(ann["image_id"]), []).append(str(ann["caption"]))
                continue
            if "bbox" not in ann:
                continue
            name = categories.get(int(ann["category_id"]))
            if name is None:
                raise IngestError(f"{path}: annotation references unknown category {ann['category_id']}")
            boxes.setdefault(int(ann["image_id"]), []).append(([float(v) for v in ann["bbox"]], name))
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestError(f"{path}: malformed COCO structure: {exc}") from exc

    rows, cols = grid
    samples: list[LayoutSample] = []
    for image_id, annotations in boxes.items():
        if image_id not in images:
            continue
        width, height = images[image_id]
        caption_text = " ".join(captions.get(image_id, [])).lower()
        kept = annotations[:max_objects]
        names = [name for _, name in kept]
        if not names or len(set(names)) != len(names):
            continue
        if not all(name.lower() in caption_text for name in names):
            continue
        items = []
        for (x, y, w, h), name in kept:
            if w <= 0 or h <= 0:
                items = []
                break
            left = max(0, math.floor(x * cols / width))
            top = max(0, math.floor(y * rows / height))
            right = min(cols, math.ceil((x + w) * cols / width))
            bottom = min(rows, math.ceil((y + h) * rows / height))
            if right <= left or bottom <= top:
                items = []
                break
            items.append(GuidanceItem(Region(top, left, bottom, right), name))
        if not items:
            continue
        guidance = LayoutGuidance(tuple(items))
        try:
            guidance.validate(rows, cols, names)
        except GuidanceError:
            continue  # overlapping boxes cannot be swap targets
        samples.append(LayoutSample(categories=tuple(names), guidance=guidance))
    if not samples:
        log.warning("%s: no usable layout samples after caption filtering", path)
    return samples


def mask_intersection_over_union(a: np.ndarray, b: np.ndarray) -> float | None:
    """IoU of two boolean block masks; None when both are empty."""
    union = np.logical_or(a, b).sum()
    if union == 0:
        return None
    return float(np.logical_and(a, b).sum() / union)


@dataclass(frozen=True)
class TendencyReport:
    """Same-latent versus fresh-latent mask agreement for shared categories."""

    same_seed_ious: tuple[float, ...]
    control_ious: tuple[float, ...]

    @property
    def same_seed_mean(self) -> float:
        return float(np.mean(self.same_seed_ious)) if self.same_seed_ious else float("nan")

    @property
    def control_mean(self) -> float:
        return float(np.mean(self.control_ious)) if self.control_ious else float("nan")

    @property
    def ratio(self) -> float:
        control = self.control_mean
        return self.same_seed_mean / control if control > 0 else float("inf")


def tendency_probe(
    seeds,
    prompt_pairs,
    params: ToyModelParams | None = None,
    sampler: str = "plms",
) -> TendencyReport:
    """Measure how much a shared category's mask follows the initial latent.

    For every seed and prompt pair, the shared category's label masks from
    the two prompts (same initial latent) are compared; the control arm
    compares generations started from different seeds.  Pairs where both
    masks are empty are skipped.
    """
    params = params or ToyModelParams()
    seeds = list(seeds)
    engines: dict[tuple[str, ...], ToyEngine] = {}

    def engine_for(prompt) -> ToyEngine:
        key = tuple(prompt)
        if key not in engines:
            engines[key] = ToyEngine(key, params)
        return engines[key]

    same_arm: list[float] = []
    control_arm: list[float] = []
    for first, second in prompt_pairs:
        shared = [c for c in first if c in second]
        if not shared:
            raise GuidanceError(f"prompt pair {first!r} / {second!r} shares no category")
        category = shared[0]
        eng_a, eng_b = engine_for(first), engine_for(second)
        masks_a, masks_b = [], []
        for seed in seeds:
            res_a = eng_a.generate(eng_a.sample(seed), sampler)
            res_b = eng_b.generate(eng_b.sample(seed), sampler)
            masks_a.append(res_a.label_map.mask(category))
            masks_b.append(res_b.label_map.mask(category))
        for i in range(len(seeds)):
            v = mask_intersection_over_union(masks_a[i], masks_b[i])
            if v is not None:
                same_arm.append(v)
            c = mask_intersection_over_union(masks_a[i], masks_b[(i + 1) % len(seeds)])
            if c is not None and len(seeds) > 1:
                control_arm.append(c)
    return TendencyReport(same_seed_ious=tuple(same_arm), control_ious=tuple(control_arm))
