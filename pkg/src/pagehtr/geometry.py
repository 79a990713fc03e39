"""Page-normalised box arithmetic, word-shaped anchors and non-maximum suppression.

All coordinates are fractions of the page: ``x``/``w`` of the page width,
``y``/``h`` of the page height, with ``(x, y)`` the top-left corner.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .errors import ValidationError

__all__ = [
    "BBox",
    "Detection",
    "AnchorSpec",
    "iou",
    "y_overlap",
    "enclosing_bbox",
    "nms",
    "generate_anchors",
    "read_detections",
    "write_detections",
    "detection_to_dict",
    "detection_from_dict",
]


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValidationError(f"BBox.{name} must be a finite number, got {value!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"degenerate box: w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def y_mid(self) -> float:
        return self.y + self.h / 2.0


@dataclass(frozen=True)
class Detection:
    box: BBox
    score: float = 1.0
    label: str = "handwriting"

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"detection score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class AnchorSpec:
    """Uniform grid of anchor centres; each centre gets every size x ratio combination.

    Ratios are width:height and must be >= 1 so anchors are squares or wide
    rectangles, the shape of written words.
    """

    grid_rows: int
    grid_cols: int
    sizes: tuple[float, ...] = (0.1,)
    ratios: tuple[float, ...] = (1.0, 2.0, 4.0)
    clip: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(self.sizes))
        object.__setattr__(self, "ratios", tuple(self.ratios))
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValidationError("anchor grid dimensions must be positive")
        if not self.sizes or not self.ratios:
            raise ValidationError("anchor spec needs at least one size and one ratio")
        for s in self.sizes:
            if not (0.0 < s <= 1.0):
                raise ValidationError(f"anchor size must lie in (0, 1], got {s}")
        for r in self.ratios:
            if not r >= 1.0:
                raise ValidationError(f"anchor ratio must be >= 1 (width >= height), got {r}")


def _intersection(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when they do not overlap."""
    inter = _intersection(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def y_overlap(a: BBox, b: BBox) -> float:
    """Vertical overlap of two boxes as a fraction of the shorter box's height.

    A short word sitting entirely within the vertical extent of a taller one
    scores 1.0.
    """
    inter = min(a.y2, b.y2) - max(a.y, b.y)
    if inter <= 0:
        return 0.0
    return min(1.0, inter / min(a.h, b.h))


def enclosing_bbox(boxes: Iterable[BBox]) -> BBox:
    boxes = list(boxes)
    if not boxes:
        raise ValidationError("no boxes to enclose")
    if len(boxes) == 1:
        return boxes[0]
    x1 = min(b.x for b in boxes)
    y1 = min(b.y for b in boxes)
    x2 = max(b.x2 for b in boxes)
    y2 = max(b.y2 for b in boxes)
    return BBox(x1, y1, x2 - x1, y2 - y1)


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression.

    Detections are visited in descending score order (equal scores keep their
    input order) and a detection is dropped when its IoU with any already kept
    detection exceeds ``iou_threshold``. The result is in descending score order.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValidationError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    kept: list[Detection] = []
    for i in order:
        cand = dets[i]
        if all(iou(cand.box, k.box) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


def generate_anchors(spec: AnchorSpec) -> list[BBox]:
    """Anchor boxes centred on a uniform grid, row-major, then size, then ratio.

    Each anchor keeps the area of ``size**2``: width ``size*sqrt(ratio)``,
    height ``size/sqrt(ratio)``. With ``spec.clip`` boxes are clipped to the
    unit page. An anchor that clipping leaves narrower than tall (possible at
    the left and right edges) becomes a square of the clipped height, shifted
    inside the page.
    """
    anchors = []
    for r in range(spec.grid_rows):
        cy = (r + 0.5) / spec.grid_rows
        for c in range(spec.grid_cols):
            cx = (c + 0.5) / spec.grid_cols
            for size in spec.sizes:
                for ratio in spec.ratios:
                    root = math.sqrt(ratio)
                    w, h = size * root, size / root
                    x1, y1, x2, y2 = cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2
                    if spec.clip:
                        x1, y1 = max(0.0, x1), max(0.0, y1)
                        x2, y2 = min(1.0, x2), min(1.0, y2)
                        if x2 - x1 < y2 - y1:
                            side = y2 - y1
                            x1 = min(max(0.0, cx - side / 2), 1.0 - side)
                            x2 = x1 + side
                    anchors.append(BBox(x1, y1, x2 - x1, y2 - y1))
    return anchors


# -- JSON-lines interchange ---------------------------------------------------


def detection_to_dict(det: Detection) -> dict:
    b = det.box
    return {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "score": det.score, "label": det.label}


def detection_from_dict(obj: dict) -> Detection:
    try:
        box = BBox(float(obj["x"]), float(obj["y"]), float(obj["w"]), float(obj["h"]))
        return Detection(box, float(obj.get("score", 1.0)), str(obj.get("label", "handwriting")))
    except KeyError as exc:
        raise ValidationError(f"detection record missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad detection record: {exc}") from None


def read_detections(fp: IO[str]) -> list[Detection]:
    dets = []
    for lineno, line in enumerate(fp, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        try:
            dets.append(detection_from_dict(obj))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    return dets


def write_detections(dets: Iterable[Detection], fp: IO[str]) -> None:
    for det in dets:
        fp.write(json.dumps(detection_to_dict(det)) + "\n")
