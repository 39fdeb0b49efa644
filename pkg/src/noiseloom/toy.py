"""A small deterministic latent-diffusion stand-in built on the attention core.

The denoiser's target for every block is the attention-weighted mixture of
token content vectors, so denoising literally "adds the feature" where the
latent already resembles it.  With the aligned projection weights this loop
is self-reinforcing, which makes generation tendency, repainting locality
and swap efficacy measurable properties instead of anecdotes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .attention import (
    AttentionMap,
    ProjectionWeights,
    TokenSet,
    attention_values,
    block_features,
    cross_attention,
)
from .editing import LayoutGuidance, SwapList, layout_swap
from .errors import ConfigError, GeometryError
from .latent import LatentGrid, sample_latent
from .rng import normals
from .samplers import NoiseSchedule, default_schedule, run_sampler

BACKGROUND_TOKEN = "<background>"

# fixed label palette: background first, then up to 10 categories
_PALETTE = [
    (24, 24, 28),
    (230, 80, 60),
    (70, 150, 230),
    (90, 200, 110),
    (240, 190, 60),
    (170, 100, 220),
    (240, 130, 200),
    (110, 210, 220),
    (250, 150, 80),
    (150, 160, 170),
    (120, 120, 60),
]


@dataclass(frozen=True)
class ToyModelParams:
    """Frozen knobs of the toy generator; nothing here is ever trained."""

    height: int = 64
    width: int = 64
    channels: int = 12
    block_size: int = 4
    embed_dim: int = 16
    attention_strength: float = 1.0
    smoothing_radius: int = 1
    smoothing_center_weight: float = 6.0
    render_smoothing_radius: int = 0
    steps: int = 50
    background_threshold: float = 0.3
    background_bias: float = 1.35
    content_scale: float = 4.0
    logit_gain: float = 8.0
    engine_seed: int = 0
    vocab_seed: int = 0

    def __post_init__(self):
        if self.attention_strength <= 0:
            raise ConfigError(f"attention strength must be > 0, got {self.attention_strength}")
        if self.smoothing_radius < 0 or self.render_smoothing_radius < 0:
            raise ConfigError("smoothing radii must be >= 0")
        if self.smoothing_center_weight < 1.0:
            raise ConfigError("smoothing center weight must be >= 1")
        if not (0.0 < self.background_threshold < 1.0):
            raise ConfigError(
                f"background threshold must lie in (0,1), got {self.background_threshold}"
            )
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.background_bias < 0:
            raise ConfigError(f"background bias must be >= 0, got {self.background_bias}")

    @property
    def block_rows(self) -> int:
        return self.height // self.block_size

    @property
    def block_cols(self) -> int:
        return self.width // self.block_size


def content_direction(name: str, channels: int, vocab_seed: int) -> np.ndarray:
    """Unit channel-space direction a token's content converges to.

    The background token owns channel axis 0 outright; every category gets a
    name-keyed unit vector in the remaining channels, so background content
    is exactly orthogonal to every category regardless of the prompt.
    """
    if name == BACKGROUND_TOKEN:
        vec = np.zeros(channels, dtype=np.float64)
        vec[0] = 1.0
        return vec
    if channels < 2:
        raise ConfigError("need at least two channels to separate content from background")
    raw = normals(vocab_seed, f"content:{name}", np.arange(channels - 1, dtype=np.uint64))
    vec = np.zeros(channels, dtype=np.float64)
    vec[1:] = raw.astype(np.float64)
    return vec / np.linalg.norm(vec)


def build_projections(tokens: TokenSet, params: ToyModelParams) -> ProjectionWeights:
    """Solve for projections that couple each token to its content direction.

    ``w_v`` maps token embeddings exactly onto their content vectors
    (``content_scale`` times the unit direction) and ``w_q`` is the matching
    transpose scaled by ``logit_gain``, so a block's logit for a token is
    exactly proportional to how far the block already points along that
    token's content.  This is the closed loop that makes attention injection
    self-reinforcing.
    """
    emb = tokens.embeddings.astype(np.float64)  # (K, embed_dim)
    directions = np.stack(
        [content_direction(n, params.channels, params.vocab_seed) for n in tokens.names]
    )
    targets = params.content_scale * directions  # (K, channels)
    w_v = np.linalg.pinv(emb) @ targets  # least-norm exact solve: emb @ w_v == targets
    w_q = params.logit_gain * w_v.T
    return ProjectionWeights(
        w_q=w_q.astype(np.float32),
        w_k=np.eye(params.embed_dim, dtype=np.float32),
        w_v=w_v.astype(np.float32),
    )


@dataclass(frozen=True)
class LabelMap:
    """Per-block category assignment; -1 marks background."""

    labels: np.ndarray  # (block_rows, block_cols) int16
    names: tuple[str, ...]

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int16)
        if labels.min(initial=-1) < -1 or labels.max(initial=-1) >= len(self.names):
            raise GeometryError("label indices out of range")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    def mask(self, name: str) -> np.ndarray:
        return self.labels == self.names.index(name)


@dataclass(frozen=True)
class GenerationResult:
    final_latent: LatentGrid
    label_map: LabelMap
    step0_attention: AttentionMap
    provenance: dict
    attention_snapshots: tuple[tuple[int, AttentionMap], ...] = field(default_factory=tuple)


def box_smooth(grid: np.ndarray, radius: int, center_weight: float = 1.0) -> np.ndarray:
    """Edge-clipped weighted box mean over the (2r+1)^2 block neighborhood.

    ``center_weight`` re-weights a cell's own value against each neighbor,
    so a block's fate stays anchored to its own content while clusters still
    reinforce each other.  Implemented as shifted adds so each output cell
    only ever touches the values inside its own window; changing a far-away
    block cannot flip a single bit here.  (An integral-image version would
    break that.)
    """
    if radius == 0:
        return grid
    rows, cols = grid.shape[:2]
    acc = np.zeros_like(grid, dtype=np.float32)
    cnt = np.zeros((rows, cols) + (1,) * (grid.ndim - 2), dtype=np.float32)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            weight = np.float32(center_weight if (dy == 0 and dx == 0) else 1.0)
            dst_r = slice(max(0, -dy), rows - max(0, dy))
            src_r = slice(max(0, dy), rows - max(0, -dy))
            dst_c = slice(max(0, -dx), cols - max(0, dx))
            src_c = slice(max(0, dx), cols - max(0, -dx))
            acc[dst_r, dst_c] += weight * grid[src_r, src_c]
            cnt[dst_r, dst_c] += weight
    return acc / cnt


class ToyPredictor:
    """Deterministic noise estimator derived from the attention mixture.

    The per-block target is the attention-weighted sum of token content
    vectors; the returned estimate makes each DDIM step pull the latent
    toward that target.  With radius 0 every block's estimate depends only
    on that block's own pixels.
    """

    def __init__(
        self,
        tokens: TokenSet,
        weights: ProjectionWeights,
        params: ToyModelParams,
        sched: NoiseSchedule,
        bias: np.ndarray | None = None,
        record_attention: bool = False,
    ):
        self.tokens = tokens
        self.weights = weights
        self.params = params
        self.sched = sched
        self.bias = None if bias is None else np.asarray(getattr(bias, "values", bias), np.float32)
        self.record_attention = record_attention
        self.attention_log: list[tuple[int, AttentionMap]] = []
        self._values = weights.value_vectors(tokens)  # (K, channels)

    def target_blocks(self, z: LatentGrid) -> tuple[np.ndarray, np.ndarray]:
        feats = block_features(z.values, z.block_size)
        attn = attention_values(feats, self.tokens, self.weights, self.bias)
        target = np.einsum("hwk,kc->hwc", attn, self._values)
        target = target * np.float32(self.params.attention_strength)
        smoothed = box_smooth(
            target, self.params.smoothing_radius, self.params.smoothing_center_weight
        )
        return smoothed, attn

    def __call__(self, z: LatentGrid, t: int) -> np.ndarray:
        target, attn = self.target_blocks(z)
        if self.record_attention:
            self.attention_log.append((t, AttentionMap(values=attn, token_names=self.tokens.names)))
        b = z.block_size
        target_pixels = np.repeat(np.repeat(target, b, axis=0), b, axis=1)
        scale = np.float32(1.0 / np.sqrt(1.0 - self.sched.alpha_bar(t)))
        return (z.values - target_pixels) * scale


def render_label_map(
    z: LatentGrid,
    categories: TokenSet,
    weights: ProjectionWeights,
    threshold: float,
    smooth_radius: int = 0,
) -> LabelMap:
    """Label each block by cosine similarity to the token content vectors.

    A block is background when its best similarity falls below the
    threshold, or when its mean is (exactly) the zero vector.  A nonzero
    ``smooth_radius`` box-averages the block features once before labeling:
    stray single-block winners get diluted below the threshold while
    clusters keep their label, the block-grid equivalent of perceiving
    objects rather than specks.
    """
    feats = block_features(z.values, z.block_size)
    if smooth_radius > 0:
        feats = box_smooth(feats, smooth_radius)
    feats = feats.astype(np.float64)
    vecs = weights.value_vectors(categories).astype(np.float64)  # (K, C)
    if len(categories) == 0:
        return LabelMap(np.full((z.block_rows, z.block_cols), -1, np.int16), ())
    vec_norms = np.linalg.norm(vecs, axis=1)
    feat_norms = np.linalg.norm(feats, axis=2)
    sims = np.einsum("hwc,kc->hwk", feats, vecs)
    denom = feat_norms[:, :, None] * vec_norms[None, None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        cosine = np.where(denom > 0, sims / np.where(denom > 0, denom, 1.0), -1.0)
    best = np.argmax(cosine, axis=2)
    best_value = np.take_along_axis(cosine, best[:, :, None], axis=2)[:, :, 0]
    labels = np.where(best_value >= threshold, best, -1).astype(np.int16)
    return LabelMap(labels=labels, names=categories.names)


def generate(
    z_start: LatentGrid,
    tokens: TokenSet,
    weights: ProjectionWeights,
    params: ToyModelParams,
    sampler_kind: str = "plms",
    bias: np.ndarray | None = None,
    record_attention: bool = False,
    categories: TokenSet | None = None,
    provenance: dict | None = None,
) -> GenerationResult:
    """Run the deterministic sampler end to end and render the label map.

    ``tokens`` is the full conditioning set (background token included);
    ``categories`` defaults to every token except the background one and is
    what the label map is rendered against.
    """
    sched = default_schedule(params.steps)
    predictor = ToyPredictor(tokens, weights, params, sched, bias, record_attention)
    step0 = cross_attention(
        block_features(z_start.values, z_start.block_size), tokens, weights, predictor.bias
    )
    final = run_sampler(z_start, predictor, sched, sampler_kind)
    if categories is None:
        names = tuple(n for n in tokens.names if n != BACKGROUND_TOKEN)
        categories = TokenSet.from_names(names, params.vocab_seed, params.embed_dim)
    label_map = render_label_map(
        final, categories, weights, params.background_threshold, params.render_smoothing_radius
    )
    info = {
        "seed": int(z_start.seed),
        "prompt": [n for n in tokens.names if n != BACKGROUND_TOKEN],
        "sampler": sampler_kind,
        "steps": params.steps,
        "edits": [],
    }
    if provenance:
        info.update(provenance)
    return GenerationResult(
        final_latent=final,
        label_map=label_map,
        step0_attention=step0,
        provenance=info,
        attention_snapshots=tuple(predictor.attention_log),
    )


class ToyEngine:
    """Prompt-bound facade wiring tokens, projections and the bias prior.

    The background token competes with every prompt category and carries a
    constant logit prior, so categories only win blocks whose initial values
    genuinely lean their way; that sparsity is what makes objects local.
    """

    def __init__(self, prompt: Sequence[str], params: ToyModelParams | None = None):
        self.params = params or ToyModelParams()
        if BACKGROUND_TOKEN in prompt:
            raise ConfigError(f"{BACKGROUND_TOKEN!r} is reserved")
        if len(set(prompt)) != len(tuple(prompt)):
            raise ConfigError(f"duplicate prompt categories in {tuple(prompt)}")
        self.prompt = tuple(prompt)
        self.tokens = TokenSet.from_names(
            (*self.prompt, BACKGROUND_TOKEN), self.params.vocab_seed, self.params.embed_dim
        )
        self.categories = TokenSet.from_names(
            self.prompt, self.params.vocab_seed, self.params.embed_dim
        )
        self.weights = build_projections(self.tokens, self.params)
        prior = np.zeros(
            (self.params.block_rows, self.params.block_cols, len(self.tokens)), np.float32
        )
        prior[:, :, len(self.prompt)] = np.float32(self.params.background_bias)
        self.prior_bias = prior

    def sample(self, seed: int) -> LatentGrid:
        return sample_latent(
            self.params.height,
            self.params.width,
            self.params.channels,
            seed,
            self.params.block_size,
        )

    def _combined_bias(self, extra_bias) -> np.ndarray:
        if extra_bias is None:
            return self.prior_bias
        extra = np.asarray(getattr(extra_bias, "values", extra_bias), np.float32)
        if extra.shape[2] == len(self.prompt):
            # bias built over the category tokens only; background gets zero
            padded = np.zeros_like(self.prior_bias)
            padded[:, :, : len(self.prompt)] = extra
            extra = padded
        return self.prior_bias + extra

    def attention(self, z: LatentGrid, extra_bias=None) -> AttentionMap:
        feats = block_features(z.values, z.block_size)
        return cross_attention(feats, self.tokens, self.weights, self._combined_bias(extra_bias))

    def generate(
        self,
        z: LatentGrid,
        sampler_kind: str = "plms",
        extra_bias=None,
        record_attention: bool = False,
        provenance: dict | None = None,
    ) -> GenerationResult:
        return generate(
            z,
            self.tokens,
            self.weights,
            self.params,
            sampler_kind,
            self._combined_bias(extra_bias),
            record_attention,
            self.categories,
            provenance,
        )

    def swap(
        self, z: LatentGrid, guidance: LayoutGuidance, pairing_seed: int
    ) -> tuple[LatentGrid, list[SwapList]]:
        return layout_swap(z, self.tokens, self.weights, guidance, pairing_seed, self.prior_bias)

    def with_params(self, **changes) -> "ToyEngine":
        return ToyEngine(self.prompt, replace(self.params, **changes))


def label_map_to_pgm(label_map: LabelMap) -> bytes:
    """Binary PGM; background is 0, category i maps to (i+1)*255/K."""
    k = max(len(label_map.names), 1)
    step = 255.0 / k
    pixels = np.where(
        label_map.labels < 0, 0, np.rint((label_map.labels + 1) * step)
    ).astype(np.uint8)
    rows, cols = label_map.labels.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pixels.tobytes()


def label_map_to_png(label_map: LabelMap, scale: int = 16) -> bytes:
    """Palette PNG, one tile per block, fixed deterministic colors."""
    from io import BytesIO

    from PIL import Image

    idx = (label_map.labels + 1).astype(np.uint8)
    idx = np.repeat(np.repeat(idx, scale, axis=0), scale, axis=1)
    img = Image.fromarray(idx, mode="P")
    palette = []
    for color in _PALETTE[: len(label_map.names) + 1]:
        palette.extend(color)
    img.putpalette(palette)
    buf = BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
