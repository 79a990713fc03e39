"""Character alignment, CER scoring and a wall-clock benchmark harness."""

from __future__ import annotations

import gc
import statistics
import time
import tracemalloc
import unicodedata
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

from .errors import ValidationError

__all__ = [
    "AlignmentReport",
    "BenchmarkReport",
    "align",
    "normalize_text",
    "line_cers",
    "corpus_cer",
    "page_text",
    "page_alignment",
    "benchmark",
]

CORRECT, SUB, INS, DEL = "C", "S", "I", "D"


@dataclass(frozen=True)
class AlignmentReport:
    substitutions: int
    insertions: int
    deletions: int
    ref_length: int
    aligned_ops: tuple[tuple[str, str | None, str | None], ...] = field(repr=False, default=())

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def correct(self) -> int:
        return sum(1 for op, _, _ in self.aligned_ops if op == CORRECT)

    @property
    def cer(self) -> float:
        if self.ref_length == 0:
            return 0.0 if self.errors == 0 else float("inf")
        return self.errors / self.ref_length

    def to_dict(self) -> dict:
        return {
            "substitutions": self.substitutions,
            "insertions": self.insertions,
            "deletions": self.deletions,
            "ref_length": self.ref_length,
            "cer": self.cer,
        }

    def pretty(self) -> str:
        """Three-row sclite-style rendering: REF, HYP and the edit markers."""
        ref_row, hyp_row, eval_row = [], [], []
        for op, r, h in self.aligned_ops:
            r_disp = "*" if r is None else r
            h_disp = "*" if h is None else h
            ref_row.append(r_disp if op == CORRECT else r_disp.upper())
            hyp_row.append(h_disp if op == CORRECT else h_disp.upper())
            eval_row.append(" " if op == CORRECT else op)
        return "REF: " + "".join(ref_row) + "\nHYP: " + "".join(hyp_row) + "\nEval:" + "".join(eval_row)


def align(ref: str, hyp: str) -> AlignmentReport:
    """Minimum-edit character alignment of ``hyp`` against ``ref`` with unit costs.

    Among equal-cost alignments the backtrace, walking from the end, prefers
    a diagonal move (match or substitution), then an insertion, then a deletion.
    """
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, prev = cost[i], cost[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (ri != hyp[j - 1]), row[j - 1] + 1, prev[j] + 1)

    ops = []
    s = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = cost[i][j]
        if i > 0 and j > 0 and here == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            same = ref[i - 1] == hyp[j - 1]
            ops.append((CORRECT if same else SUB, ref[i - 1], hyp[j - 1]))
            s += not same
            i, j = i - 1, j - 1
        elif j > 0 and here == cost[i][j - 1] + 1:
            ops.append((INS, None, hyp[j - 1]))
            ins += 1
            j -= 1
        else:
            ops.append((DEL, ref[i - 1], None))
            dels += 1
            i -= 1
    ops.reverse()
    return AlignmentReport(s, ins, dels, n, tuple(ops))


def normalize_text(text: str, *, fold_case: bool = False, strip_punct: bool = False) -> str:
    if fold_case:
        text = text.casefold()
    if strip_punct:
        text = "".join(c for c in text if not unicodedata.category(c).startswith("P"))
    return text


def line_cers(pairs: Sequence[tuple[str, str]]) -> list[AlignmentReport]:
    if not pairs:
        raise ValidationError("no (ref, hyp) pairs to score")
    reports = []
    for i, (ref, hyp) in enumerate(pairs):
        if not ref:
            raise ValidationError(f"reference line {i + 1} is empty; CER is undefined")
        reports.append(align(ref, hyp))
    return reports


def corpus_cer(pairs: Sequence[tuple[str, str]], *, micro: bool = False) -> float:
    """Mean of per-line CERs; with ``micro=True``, total errors over total reference characters."""
    reports = line_cers(pairs)
    if micro:
        return sum(r.errors for r in reports) / sum(r.ref_length for r in reports)
    return statistics.fmean(r.cer for r in reports)


def page_text(lines: Sequence[str]) -> str:
    return "\n".join(lines)


def page_alignment(ref_lines: Sequence[str], hyp_lines: Sequence[str]) -> AlignmentReport:
    """Align whole pages (lines joined by newlines, top to bottom).

    Line counts need not match; a missing or spurious line surfaces as a run
    of deletions or insertions.
    """
    return align(page_text(ref_lines), page_text(hyp_lines))


@dataclass(frozen=True)
class BenchmarkReport:
    name: str
    mean_seconds: float
    std_seconds: float
    iterations: int
    peak_bytes: int | None = None
    samples: tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self, with_samples: bool = False) -> dict:
        d = asdict(self)
        if not with_samples:
            d.pop("samples")
        else:
            d["samples"] = list(self.samples)
        return d


def benchmark(
    task: Callable[[], object],
    iterations: int = 10,
    warmup: int = 1,
    *,
    name: str = "task",
    track_memory: bool = False,
) -> BenchmarkReport:
    """Time ``task`` for ``iterations`` runs after ``warmup`` discarded runs.

    Reports mean and sample standard deviation of wall-clock seconds per run.
    With ``track_memory`` the peak Python heap allocation across the measured
    runs is sampled with ``tracemalloc``, which itself slows the task down.
    Runs sequentially on the calling thread; do not run other load meanwhile.
    """
    if iterations < 1:
        raise ValidationError("iterations must be >= 1")
    if warmup < 0:
        raise ValidationError("warmup must be >= 0")

    def run(i: int):
        try:
            task()
        except Exception as exc:
            raise RuntimeError(f"benchmark {name!r} failed at iteration {i}: {exc}") from exc

    for i in range(warmup):
        run(-warmup + i)

    gc_was_enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    if track_memory:
        tracemalloc.start()
    samples = []
    try:
        for i in range(iterations):
            t0 = time.perf_counter()
            run(i)
            samples.append(time.perf_counter() - t0)
        peak = tracemalloc.get_traced_memory()[1] if track_memory else None
    finally:
        if track_memory:
            tracemalloc.stop()
        if gc_was_enabled:
            gc.enable()
    std = statistics.stdev(samples) if len(samples) > 1 else 0.0
    return BenchmarkReport(name, statistics.fmean(samples), std, iterations, peak, tuple(samples))
