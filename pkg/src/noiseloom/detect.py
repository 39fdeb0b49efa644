"""Detection and layout metrics: connected components, IoU, success rates.

The detector is deliberately simple: the toy generator's output already is a
label map, so detection reduces to 4-connected component labeling plus tight
bounding boxes.  Absolute scores are therefore not comparable to any real
detector pipeline; only orderings between methods are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .editing import LayoutGuidance
from .latent import Region
from .toy import LabelMap

# size subset boundaries: 150^2 and 300^2 pixel areas on a 512^2 image,
# expressed as fractions of the full area
SMALL_MAX_FRACTION = (150 / 512) ** 2
LARGE_MIN_FRACTION = (300 / 512) ** 2

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class Detection:
    category: str
    box: Region
    area_fraction: float  # component blocks over grid blocks


@dataclass(frozen=True)
class EvalRecord:
    category: str
    guidance_box: Region
    best_iou: float
    success: bool
    size_class: str

    def __post_init__(self):
        assert self.success == (self.best_iou > 0.5)


def detect(label_map: LabelMap, min_area: int = 1) -> list[Detection]:
    """Tight bounding boxes of each category's 4-connected components."""
    detections: list[Detection] = []
    total = label_map.labels.size
    for index, name in enumerate(label_map.names):
        mask = label_map.labels == index
        if not mask.any():
            continue
        components, count = ndimage.label(mask, structure=_FOUR_CONNECTED)
        for comp in range(1, count + 1):
            rows, cols = np.nonzero(components == comp)
            if rows.size < min_area:
                continue
            box = Region(int(rows.min()), int(cols.min()), int(rows.max()) + 1, int(cols.max()) + 1)
            detections.append(
                Detection(category=name, box=box, area_fraction=rows.size / total)
            )
    return detections


def iou(a: Region, b: Region) -> float:
    """Intersection over union of two block rectangles."""
    inter_rows = min(a.bottom, b.bottom) - max(a.top, b.top)
    inter_cols = min(a.right, b.right) - max(a.left, b.left)
    inter = max(0, inter_rows) * max(0, inter_cols)
    union = a.area + b.area - inter
    return inter / union


def size_class(area_fraction: float) -> str:
    if area_fraction < SMALL_MAX_FRACTION:
        return "s"
    if area_fraction > LARGE_MIN_FRACTION:
        return "l"
    return "m"


def evaluate(
    detections: list[Detection], guidance: LayoutGuidance, grid_blocks: int
) -> list[EvalRecord]:
    """Best same-category IoU per guidance item; success means IoU > 0.5."""
    records = []
    for item in guidance.items:
        candidates = [iou(d.box, item.region) for d in detections if d.category == item.category]
        best = max(candidates, default=0.0)
        records.append(
            EvalRecord(
                category=item.category,
                guidance_box=item.region,
                best_iou=best,
                success=best > 0.5,
                size_class=size_class(item.region.area / grid_blocks),
            )
        )
    return records


@dataclass(frozen=True)
class MetricsRow:
    method: str
    count: int
    iou_mean: float
    iou_by_size: dict[str, float]  # nan where the subset is empty
    rsuc: float  # percent
    rsuc_by_size: dict[str, float]
    count_by_size: dict[str, int]


@dataclass(frozen=True)
class MetricsTable:
    rows: tuple[MetricsRow, ...]

    CSV_HEADER = "method,n,iou_mean,iou_s,iou_m,iou_l,rsuc,rsuc_s,rsuc_m,rsuc_l"

    def row(self, method: str) -> MetricsRow:
        for row in self.rows:
            if row.method == method:
                return row
        raise KeyError(method)

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            cells = [
                r.method,
                str(r.count),
                f"{r.iou_mean:.4f}",
                f"{r.iou_by_size['s']:.4f}",
                f"{r.iou_by_size['m']:.4f}",
                f"{r.iou_by_size['l']:.4f}",
                f"{r.rsuc:.2f}",
                f"{r.rsuc_by_size['s']:.2f}",
                f"{r.rsuc_by_size['m']:.2f}",
                f"{r.rsuc_by_size['l']:.2f}",
            ]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def summarize(method: str, records: list[EvalRecord]) -> MetricsRow:
    """Fold evaluation records into one table row; subsets must tile the set."""
    ious = np.array([r.best_iou for r in records], dtype=np.float64)
    succ = np.array([r.success for r in records], dtype=np.float64)
    sizes = [r.size_class for r in records]
    iou_by, rsuc_by, n_by = {}, {}, {}
    for cls in ("s", "m", "l"):
        idx = [i for i, s in enumerate(sizes) if s == cls]
        n_by[cls] = len(idx)
        iou_by[cls] = float(ious[idx].mean()) if idx else float("nan")
        rsuc_by[cls] = float(100.0 * succ[idx].mean()) if idx else float("nan")
    assert sum(n_by.values()) == len(records)
    return MetricsRow(
        method=method,
        count=len(records),
        iou_mean=float(ious.mean()) if records else float("nan"),
        iou_by_size=iou_by,
        rsuc=float(100.0 * succ.mean()) if records else float("nan"),
        rsuc_by_size=rsuc_by,
        count_by_size=n_by,
    )
