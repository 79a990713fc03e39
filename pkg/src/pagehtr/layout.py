"""Group word detections into text lines and clean up the line proposals."""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, fields
from typing import IO, Iterable, Sequence

from .errors import ValidationError
from .geometry import BBox, Detection, enclosing_bbox, iou, y_overlap

__all__ = [
    "LineProposal",
    "HeuristicParams",
    "cluster_words_to_lines",
    "filter_lines",
    "pipeline_words_to_lines",
    "line_to_dict",
    "write_lines",
    "read_lines",
]

_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class LineProposal:
    box: BBox
    member_words: tuple[Detection, ...]

    def __post_init__(self):
        object.__setattr__(self, "member_words", tuple(self.member_words))
        if not self.member_words:
            raise ValidationError("a line proposal needs at least one member word")

    @classmethod
    def from_words(cls, words: Iterable[Detection]) -> "LineProposal":
        words = tuple(words)
        return cls(enclosing_bbox(w.box for w in words), words)


@dataclass(frozen=True)
class HeuristicParams:
    min_area: float = 0.0005
    max_right_edge: float = 1.0
    short_line_ratio: float = 0.5
    tall_line_ratio: float = 1.5
    start_deviation: float = 0.2
    overlap_removal: float = 0.4
    y_overlap_threshold: float = 0.4

    def __post_init__(self):
        if self.min_area < 0:
            raise ValidationError("min_area must be >= 0")
        if self.max_right_edge <= 0:
            raise ValidationError("max_right_edge must be > 0")
        if self.short_line_ratio <= 0 or self.tall_line_ratio <= 0 or self.start_deviation <= 0:
            raise ValidationError("line ratios and start_deviation must be > 0")
        for name in ("overlap_removal", "y_overlap_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_dict(cls, obj: dict) -> "HeuristicParams":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown heuristic parameters: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in obj.items()})

    def to_dict(self) -> dict:
        return asdict(self)


def _reading_key(det: Detection):
    b = det.box
    return (b.y, b.x, b.h, b.w, -det.score, det.label)


def cluster_words_to_lines(
    words: Sequence[Detection],
    y_overlap_threshold: float = 0.4,
    *,
    literal: bool = False,
) -> list[LineProposal]:
    """Greedy top-to-bottom clustering of words into lines.

    Words are sorted by ``y`` (ties by ``x``) and scanned in that order. A word
    whose vertical overlap with the previous word exceeds the threshold joins
    the current line; otherwise the current line is closed and a new one is
    started with that word.

    ``literal=True`` runs an uncorrected variant instead, in which the
    first word and every word that opens a new line are never added to any
    cluster. Clusters that end up empty are skipped. Only useful for studying
    how much the corrected version changes.
    """
    if not 0.0 <= y_overlap_threshold <= 1.0:
        raise ValidationError("y_overlap_threshold must lie in [0, 1]")
    ordered = sorted(words, key=_reading_key)
    clusters: list[list[Detection]] = []
    current: list[Detection] = []
    prev: Detection | None = None
    for det in ordered:
        if prev is None:
            if not literal:
                current.append(det)
        elif y_overlap(prev.box, det.box) > y_overlap_threshold:
            current.append(det)
        else:
            clusters.append(current)
            current = [] if literal else [det]
        prev = det
    clusters.append(current)
    return [LineProposal.from_words(c) for c in clusters if c]


def _y_order(lines: Iterable[LineProposal]) -> list[LineProposal]:
    return sorted(lines, key=lambda ln: (ln.box.y, ln.box.x, ln.box.h, ln.box.w))


def _drop_small(lines, params):
    return [ln for ln in lines if ln.box.area >= params.min_area]


def _drop_out_of_page(lines, params):
    keep = []
    for ln in lines:
        b = ln.box
        if b.x < -_EDGE_TOL or b.y < -_EDGE_TOL:
            continue
        if b.x2 > params.max_right_edge + _EDGE_TOL or b.y2 > 1.0 + _EDGE_TOL:
            continue
        keep.append(ln)
    return keep


def _drop_short(lines, params):
    if len(lines) < 2:
        return list(lines)
    ordered = _y_order(lines)
    last = ordered[-1]
    limit = params.short_line_ratio * statistics.median([ln.box.w for ln in lines])
    return [ln for ln in lines if ln is last or ln.box.w >= limit]


def _split_half(line: LineProposal) -> list[LineProposal]:
    b = line.box
    half = b.h / 2.0
    top = BBox(b.x, b.y, b.w, half)
    bottom = BBox(b.x, b.y + half, b.w, b.h - half)
    cut = b.y + half
    upper = [w for w in line.member_words if w.box.y_mid <= cut]
    lower = [w for w in line.member_words if w.box.y_mid > cut]
    # a half with no word centred in it inherits the words that reach into it
    if not upper:
        upper = [w for w in line.member_words if w.box.y < cut]
    if not lower:
        lower = [w for w in line.member_words if w.box.y2 > cut]
    return [LineProposal(top, upper), LineProposal(bottom, lower)]


def _split_tall(lines, params):
    if not lines:
        return []
    limit = params.tall_line_ratio * statistics.median([ln.box.h for ln in lines])
    out = []
    for ln in lines:
        if ln.box.h > limit:
            out.extend(_split_half(ln))
        else:
            out.append(ln)
    return out


def _drop_misaligned(lines, params):
    if not lines:
        return []
    start = statistics.median([ln.box.x for ln in lines])
    return [ln for ln in lines if abs(ln.box.x - start) <= params.start_deviation]


def _drop_overlapping(lines, params):
    ranked = sorted(
        lines, key=lambda ln: (-ln.box.area, ln.box.y, ln.box.x, ln.box.h, ln.box.w)
    )
    kept: list[LineProposal] = []
    for ln in ranked:
        if all(iou(ln.box, k.box) <= params.overlap_removal for k in kept):
            kept.append(ln)
    return kept


RULES = (
    ("min_area", _drop_small),
    ("page_bounds", _drop_out_of_page),
    ("short_width", _drop_short),
    ("split_tall", _split_tall),
    ("start_deviation", _drop_misaligned),
    ("overlap", _drop_overlapping),
)


def filter_lines(
    lines: Sequence[LineProposal], params: HeuristicParams | None = None
) -> list[LineProposal]:
    """Apply the line heuristics in a fixed order and return lines sorted by ``y``.

    1. drop lines smaller than ``min_area``;
    2. drop lines that leave the page (right edge beyond ``max_right_edge``);
    3. drop lines narrower than ``short_line_ratio`` x median width, except
       the bottom-most line;
    4. split lines taller than ``tall_line_ratio`` x median height into two
       stacked halves, sharing the member words by vertical centre;
    5. drop lines whose left edge is more than ``start_deviation`` from the
       median left edge;
    6. of any pair overlapping with IoU above ``overlap_removal``, drop the
       smaller one.

    Medians are recomputed from the lines that survived the preceding rules.
    """
    params = params or HeuristicParams()
    current = list(lines)
    for _, rule in RULES:
        current = rule(current, params)
    return _y_order(current)


def pipeline_words_to_lines(
    words: Sequence[Detection],
    params: HeuristicParams | None = None,
    *,
    apply_filter: bool = True,
) -> list[LineProposal]:
    params = params or HeuristicParams()
    lines = cluster_words_to_lines(words, params.y_overlap_threshold)
    if not apply_filter:
        return _y_order(lines)
    return filter_lines(lines, params)


# -- JSON-lines interchange ---------------------------------------------------


def line_to_dict(line: LineProposal, index: dict[int, int] | None = None) -> dict:
    """Serialise a line. With ``index`` (``id(detection) -> position``), member positions are recorded too."""
    b = line.box
    out = {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "member_count": len(line.member_words)}
    if index is not None:
        out["members"] = [index[id(w)] for w in line.member_words]
    return out


def write_lines(
    lines: Iterable[LineProposal], fp: IO[str], words: Sequence[Detection] | None = None
) -> None:
    index = {id(w): i for i, w in enumerate(words)} if words is not None else None
    for ln in lines:
        fp.write(json.dumps(line_to_dict(ln, index)) + "\n")


def read_lines(fp: IO[str], words: Sequence[Detection]) -> list[LineProposal]:
    """Rebuild line proposals from a lines file, resolving ``members`` against ``words``."""
    lines = []
    for lineno, raw in enumerate(fp, 1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            obj = json.loads(raw)
            box = BBox(float(obj["x"]), float(obj["y"]), float(obj["w"]), float(obj["h"]))
            members = obj["members"]
        except json.JSONDecodeError as exc:
            raise ValidationError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        except KeyError as exc:
            raise ValidationError(f"line {lineno}: missing field {exc.args[0]!r}") from None
        try:
            member_words = [words[int(i)] for i in members]
        except (IndexError, ValueError, TypeError):
            raise ValidationError(f"line {lineno}: member index out of range") from None
        lines.append(LineProposal(box, member_words))
    return lines
