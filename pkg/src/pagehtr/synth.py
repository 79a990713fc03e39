"""Synthetic pages: word detections, per-word emission grids and reference lines.

Stands in for the detector and line recogniser when exercising the pipeline.
Pages are built from well-separated horizontal bands of words spanning most
of the page width. Optional injections add the kinds of bad proposals the
line heuristics exist to remove:

``tiny``
    a minute detection in a gap between bands (a speck or dot);
``offpage``
    a word-sized detection in a gap that runs past the right page edge;
``double``
    one tall detection straddling two adjacent bands, which makes the
    clustering fuse both bands into a single double-height line.

Injected detections carry random junk text.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ctc import Alphabet, EmissionGrid, one_hot_grid, write_grid
from .geometry import BBox, Detection, write_detections

__all__ = ["DEFAULT_ALPHABET", "WORDS", "SyntheticPage", "make_page", "write_page", "grid_path"]

DEFAULT_ALPHABET = Alphabet.from_chars(" " + string.ascii_lowercase + ".,'")

WORDS = (
    "the of and to in a is that for it as was with be by on not he this are or his from at "
    "which but have an had they you were their one all we can her has there been if more when "
    "will would who so no she other its may these what them than some him time into only do "
    "could new about two then first also after any like should our over such where most well "
    "between very through those must page line hand written letter words north river house "
    "morning evening garden window winter summer quiet little great small long open story paper"
).split()

INJECTIONS = ("tiny", "offpage", "double")


@dataclass
class SyntheticPage:
    words: list[Detection]
    texts: list[str]
    grids: list[EmissionGrid]
    ref_lines: list[str]
    band_members: list[list[int]]
    injected: list[str] = field(default_factory=list)


def grid_path(grids_dir: Path, index: int) -> Path:
    return Path(grids_dir) / f"word_{index:04d}.csv"


def _junk(rng: np.random.Generator, lo: int = 2, hi: int = 7) -> str:
    letters = string.ascii_lowercase
    return "".join(letters[i] for i in rng.integers(0, len(letters), size=int(rng.integers(lo, hi + 1))))


def make_page(
    rng: np.random.Generator,
    n_bands: int | None = None,
    words_per_band: tuple[int, int] = (1, 12),
    inject: Sequence[str] = (),
    *,
    alphabet: Alphabet = DEFAULT_ALPHABET,
    vocab: Sequence[str] = WORDS,
    confidence: float = 1.0,
) -> SyntheticPage:
    """Random page with ``n_bands`` text lines (1-10 if not given)."""
    for kind in inject:
        if kind not in INJECTIONS:
            raise ValueError(f"unknown injection {kind!r}; choose from {INJECTIONS}")
    if n_bands is None:
        n_bands = int(rng.integers(1, 11))
    n_double = sum(k == "double" for k in inject)
    if n_double:
        # fused lines must stay a minority so they stand out against the median
        # height, and each needs its own pair of bands
        n_bands = max(n_bands, 3 * n_double + 2)

    top, bottom = 0.06, 0.86
    spacing = (bottom - top) / n_bands
    band_h = min(0.045, 0.45 * spacing)

    words: list[Detection] = []
    texts: list[str] = []
    ref_lines: list[str] = []
    band_members: list[list[int]] = []
    band_tops = []

    for b in range(n_bands):
        y0 = top + b * spacing + 0.5 * (spacing - band_h)
        band_tops.append(y0)
        n_words = int(rng.integers(words_per_band[0], words_per_band[1] + 1))
        tokens = [vocab[i] for i in rng.integers(0, len(vocab), size=n_words)]
        left = 0.05 + float(rng.uniform(0, 0.02))
        right = 0.86 + float(rng.uniform(0, 0.1))
        gap = 0.012
        usable = right - left - gap * (n_words - 1)
        lengths = np.array([len(t) for t in tokens], dtype=float)
        widths = usable * lengths / lengths.sum()
        x = left
        members = []
        for tok, w in zip(tokens, widths):
            h = band_h * float(rng.uniform(0.95, 1.05))
            y = y0 + float(rng.uniform(-0.04, 0.04)) * band_h
            score = float(rng.uniform(0.6, 1.0))
            members.append(len(words))
            words.append(Detection(BBox(x, y, float(w), h), score))
            texts.append(tok)
            x += w + gap
        ref_lines.append(" ".join(tokens))
        band_members.append(members)

    injected = []
    # gap i lies between band i and band i + 1; gap n_bands - 1 lies below the last band
    gaps = [(band_tops[i] + band_h * 1.1, band_tops[i + 1] - band_h * 0.1) for i in range(n_bands - 1)]
    gaps.append((band_tops[-1] + band_h * 1.1, 0.99))
    # double-line pairs are disjoint; strays avoid the gaps those pairs straddle
    starts = list(range(0, n_bands - 1, 2))
    pair_starts = sorted(rng.choice(starts, size=n_double, replace=False).tolist()) if n_double else []
    free = [g for g in range(len(gaps)) if g not in pair_starts]
    rng.shuffle(free)
    for kind in inject:
        if kind == "double":
            i = pair_starts.pop()
            # starts just below every word of band i so it sorts last among them
            y = band_tops[i] + 0.05 * band_h
            h = band_tops[i + 1] + band_h - y
            x = 0.3 + float(rng.uniform(0, 0.3))
            words.append(Detection(BBox(x, y, 0.06, h), float(rng.uniform(0.3, 0.6))))
        else:
            lo, hi = gaps[free.pop() if free else int(rng.integers(0, len(gaps)))]
            room = hi - lo
            if kind == "tiny":
                h = min(0.01, 0.5 * room)
                w = 0.015
                x = float(rng.uniform(0.1, 0.8))
            else:
                h = min(band_h, 0.6 * room)
                w = 0.35
                x = float(rng.uniform(0.7, 0.8))
            y = lo + float(rng.uniform(0, room - h))
            words.append(Detection(BBox(x, y, w, h), float(rng.uniform(0.3, 0.6))))
        texts.append(_junk(rng))
        injected.append(kind)

    grids = [one_hot_grid(t, alphabet, confidence=confidence) for t in texts]
    return SyntheticPage(words, texts, grids, ref_lines, band_members, injected)


def write_page(page: SyntheticPage, out_dir: Path) -> None:
    """Write ``words.jsonl``, ``ref.txt`` and ``grids/word_NNNN.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    (out_dir / "grids").mkdir(parents=True, exist_ok=True)
    with open(out_dir / "words.jsonl", "w", encoding="utf-8", newline="\n") as fp:
        write_detections(page.words, fp)
    with open(out_dir / "ref.txt", "w", encoding="utf-8", newline="\n") as fp:
        fp.writelines(line + "\n" for line in page.ref_lines)
    for i, grid in enumerate(page.grids):
        with open(grid_path(out_dir / "grids", i), "w", encoding="utf-8", newline="\n") as fp:
            write_grid(grid, fp)
