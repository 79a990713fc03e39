"""CTC decoding of per-timestep character distributions into strings."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import SearchSpaceTooLarge, ValidationError

__all__ = [
    "Alphabet",
    "EmissionGrid",
    "DecodeResult",
    "ctc_collapse",
    "greedy_decode",
    "beam_search_decode",
    "exhaustive_decode",
    "exhaustive_distribution",
    "one_hot_grid",
    "concat_grids",
    "read_grid",
    "write_grid",
    "EXHAUSTIVE_PATH_LIMIT",
]

EXHAUSTIVE_PATH_LIMIT = 10**7
ROW_SUM_TOL = 1e-6
_GRID_TAG = "#ctcgrid"


@dataclass(frozen=True)
class Alphabet:
    """Ordered output symbols of a recogniser; ``symbols[blank_index]`` is the CTC blank.

    The blank's symbol is only a placeholder and never appears in decoded text.
    Every other symbol is a single character.
    """

    symbols: tuple[str, ...]
    blank_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if len(set(self.symbols)) != len(self.symbols):
            raise ValidationError("alphabet symbols must be distinct")
        if not 0 <= self.blank_index < len(self.symbols):
            raise ValidationError(f"blank_index {self.blank_index} out of range")
        for i, s in enumerate(self.symbols):
            if i != self.blank_index and len(s) != 1:
                raise ValidationError(f"non-blank symbol {s!r} must be a single character")

    @classmethod
    def from_chars(cls, chars: Iterable[str], blank: str = "", blank_index: int = 0) -> "Alphabet":
        symbols = list(dict.fromkeys(chars))
        symbols.insert(blank_index, blank)
        return cls(tuple(symbols), blank_index)

    def __len__(self):
        return len(self.symbols)

    @property
    def chars(self) -> tuple[str, ...]:
        return tuple(s for i, s in enumerate(self.symbols) if i != self.blank_index)

    def index(self, char: str) -> int:
        for i, s in enumerate(self.symbols):
            if s == char and i != self.blank_index:
                return i
        raise ValidationError(f"character {char!r} not in alphabet")

    def text(self, labels: Iterable[int]) -> str:
        return "".join(self.symbols[i] for i in labels)


class EmissionGrid:
    """N x M matrix of per-timestep symbol probabilities, one row per timestep."""

    __slots__ = ("alphabet", "probs")

    def __init__(self, alphabet: Alphabet, probs, *, validate: bool = True):
        probs = np.array(probs, dtype=np.float64)
        if validate:
            if probs.ndim != 2:
                raise ValidationError(f"emission grid must be 2-D, got shape {probs.shape}")
            if probs.shape[0] < 1:
                raise ValidationError("emission grid needs at least one timestep")
            if probs.shape[1] != len(alphabet):
                raise ValidationError(
                    f"grid has {probs.shape[1]} columns but the alphabet has {len(alphabet)} symbols"
                )
            if not np.all(np.isfinite(probs)) or probs.min() < 0 or probs.max() > 1:
                raise ValidationError("grid entries must be probabilities in [0, 1]")
            sums = probs.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
            if bad.size:
                raise ValidationError(f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
        probs.setflags(write=False)
        self.alphabet = alphabet
        self.probs = probs

    @property
    def n_steps(self) -> int:
        return self.probs.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.probs.shape[1]

    def __repr__(self):
        return f"EmissionGrid(N={self.n_steps}, M={self.n_symbols})"


@dataclass(frozen=True)
class DecodeResult:
    text: str
    log_prob: float


def ctc_collapse(labels: Sequence[int], alphabet: Alphabet) -> str:
    """Merge adjacent repeated labels, then drop blanks."""
    out = []
    prev = None
    m = len(alphabet)
    for lab in labels:
        lab = int(lab)
        if not 0 <= lab < m:
            raise ValidationError(f"label {lab} outside alphabet of size {m}")
        if lab != prev and lab != alphabet.blank_index:
            out.append(alphabet.symbols[lab])
        prev = lab
    return "".join(out)


def greedy_decode(grid: EmissionGrid) -> DecodeResult:
    """Best-path decoding: argmax per timestep (lowest index on ties), then collapse."""
    best = np.argmax(grid.probs, axis=1)
    picked = grid.probs[np.arange(grid.n_steps), best]
    with np.errstate(divide="ignore"):
        log_prob = float(np.log(picked).sum())
    return DecodeResult(ctc_collapse(best.tolist(), grid.alphabet), log_prob)


def _log(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(probs)


def _rank(items):
    # total order: score descending, then label sequence for determinism
    return sorted(items, key=lambda kv: (-kv[1], kv[0]))


def beam_search_decode(
    grid: EmissionGrid,
    beam_width: int = 32,
    lm=None,
    lm_weight: float = 0.0,
    top_k: int = 1,
) -> list[DecodeResult]:
    """CTC prefix beam search.

    Each prefix carries two log masses: paths ending in blank and paths ending
    in its last character. Paths that collapse to the same prefix are merged
    with log-sum-exp. With ``lm`` given, extending a prefix by character ``c``
    adds ``lm_weight * log P_lm(c | prefix)``. After every timestep only the
    ``beam_width`` best prefixes by total mass survive (ties broken by label
    sequence). Returns up to ``top_k`` distinct strings, best first.

    Extensions that do not coincide with a surviving prefix have exactly one
    parent, so their scores are final before pruning; only the best
    ``beam_width`` of them are materialised.
    """
    if beam_width < 1:
        raise ValidationError("beam_width must be >= 1")
    if top_k < 1:
        raise ValidationError("top_k must be >= 1")
    if top_k > beam_width:
        raise ValidationError(f"top_k ({top_k}) exceeds beam_width ({beam_width})")
    if lm_weight < 0:
        raise ValidationError("lm_weight must be >= 0")

    alphabet = grid.alphabet
    blank = alphabet.blank_index
    logp = _log(grid.probs)
    m = grid.n_symbols
    use_lm = lm is not None and lm_weight > 0
    non_blank = np.array([i for i in range(m) if i != blank], dtype=np.int64)
    nb_chars = [alphabet.symbols[i] for i in non_blank]
    col_of = {int(lab): j for j, lab in enumerate(non_blank)}
    NEG = -np.inf

    # prefix (tuple of labels) -> (log mass ending in blank, log mass ending in non-blank)
    beam: dict[tuple[int, ...], tuple[float, float]] = {(): (0.0, NEG)}

    for t in range(grid.n_steps):
        row = logp[t]
        nxt: dict[tuple[int, ...], list[float]] = {}

        def add(prefix, pb, pnb):
            cur = nxt.get(prefix)
            if cur is None:
                nxt[prefix] = [pb, pnb]
            else:
                cur[0] = np.logaddexp(cur[0], pb)
                cur[1] = np.logaddexp(cur[1], pnb)

        prefixes = list(beam)
        fresh_scores = np.full((len(prefixes), non_blank.size), NEG)
        for r, prefix in enumerate(prefixes):
            pb, pnb = beam[prefix]
            total = np.logaddexp(pb, pnb)
            add(prefix, total + row[blank], NEG)
            last = prefix[-1] if prefix else -1
            if prefix:
                add(prefix, NEG, pnb + row[last])
            base = np.full(non_blank.size, total)
            if prefix:
                base[non_blank == last] = pb
            ext = base + row[non_blank]
            if use_lm:
                text = alphabet.text(prefix)
                ext = ext + lm_weight * lm.log_probs(lm.context(text), nb_chars)
            fresh_scores[r] = ext

        # an extension that is already in the beam merges into it; each prefix
        # has exactly one parent, so at most one such extension per prefix
        row_of = {p: r for r, p in enumerate(prefixes)}
        for prefix in prefixes:
            if not prefix:
                continue
            r = row_of.get(prefix[:-1])
            if r is not None:
                j = col_of[prefix[-1]]
                add(prefix, NEG, fresh_scores[r, j])
                fresh_scores[r, j] = NEG

        merged = [(p, float(np.logaddexp(*v))) for p, v in nxt.items()]
        merged = [kv for kv in merged if kv[1] > NEG]
        flat = fresh_scores.ravel()
        finite = np.flatnonzero(flat > NEG)
        if finite.size > beam_width:
            kth = np.partition(flat[finite], finite.size - beam_width)[finite.size - beam_width]
            finite = finite[flat[finite] >= kth]
        fresh = []
        for idx in finite:
            r, j = divmod(int(idx), non_blank.size)
            fresh.append((prefixes[r] + (int(non_blank[j]),), float(flat[idx])))
        ranked = _rank(merged + fresh)[:beam_width]
        fresh_set = {p for p, _ in fresh}
        beam = {}
        for p, score in ranked:
            if p in fresh_set:
                beam[p] = (NEG, score)
            else:
                pb, pnb = nxt[p]
                beam[p] = (float(pb), float(pnb))

    final = _rank((p, float(np.logaddexp(*v))) for p, v in beam.items())
    return [DecodeResult(alphabet.text(p), score) for p, score in final[:top_k]]


def exhaustive_distribution(grid: EmissionGrid) -> dict[str, float]:
    """Probability of every collapsed string with nonzero mass, by enumerating all M**N paths.

    Intended as a test oracle; refuses grids with more than
    ``EXHAUSTIVE_PATH_LIMIT`` paths.
    """
    n, m = grid.probs.shape
    paths = m**n
    if paths > EXHAUSTIVE_PATH_LIMIT:
        raise SearchSpaceTooLarge(paths, EXHAUSTIVE_PATH_LIMIT)
    probs = grid.probs.tolist()
    mass: dict[str, float] = {}
    for path in itertools.product(range(m), repeat=n):
        p = 1.0
        for t, lab in enumerate(path):
            p *= probs[t][lab]
        if p == 0.0:
            continue
        text = ctc_collapse(path, grid.alphabet)
        mass[text] = mass.get(text, 0.0) + p
    return mass


def exhaustive_decode(grid: EmissionGrid, top_k: int = 1) -> list[DecodeResult]:
    """Top ``top_k`` strings by exact total probability (see ``exhaustive_distribution``)."""
    if top_k < 1:
        raise ValidationError("top_k must be >= 1")
    mass = exhaustive_distribution(grid)
    ranked = sorted(mass.items(), key=lambda kv: (-kv[1], kv[0]))
    return [DecodeResult(text, math.log(p)) for text, p in ranked[:top_k]]


def one_hot_grid(
    text: str, alphabet: Alphabet, *, confidence: float = 1.0, repeat: int = 1
) -> EmissionGrid:
    """Grid whose best path spells ``text``: each character held for ``repeat``
    steps and followed by a blank step.

    With ``confidence < 1`` the remaining mass is spread evenly over the other
    symbols, so the argmax is unchanged.
    """
    m = len(alphabet)
    if not 1.0 / m < confidence <= 1.0 and m > 1:
        raise ValidationError("confidence must exceed 1/M so the intended symbol stays the argmax")
    labels = []
    for ch in text:
        labels.extend([alphabet.index(ch)] * repeat)
        labels.append(alphabet.blank_index)
    if not labels:
        labels = [alphabet.blank_index]
    rest = (1.0 - confidence) / (m - 1) if m > 1 else 0.0
    probs = np.full((len(labels), m), rest)
    probs[np.arange(len(labels)), labels] = confidence
    return EmissionGrid(alphabet, probs)


def concat_grids(grids: Sequence[EmissionGrid], separator: str | None = " ") -> EmissionGrid:
    """Stack grids in time, inserting a one-hot ``separator`` step between them.

    If the separator is ``None`` or not in the alphabet, a one-hot blank step
    is inserted instead so that adjacent grids never merge characters.
    """
    if not grids:
        raise ValidationError("no grids to concatenate")
    alphabet = grids[0].alphabet
    for g in grids[1:]:
        if g.alphabet != alphabet:
            raise ValidationError("grids to concatenate must share one alphabet")
    sep_index = alphabet.blank_index
    if separator is not None and separator in alphabet.chars:
        sep_index = alphabet.index(separator)
    sep = np.zeros((1, len(alphabet)))
    sep[0, sep_index] = 1.0
    blank = np.zeros((1, len(alphabet)))
    blank[0, alphabet.blank_index] = 1.0
    parts = []
    for i, g in enumerate(grids):
        if i:
            parts.extend([blank, sep, blank])
        parts.append(g.probs)
    return EmissionGrid(alphabet, np.vstack(parts), validate=False)


# -- file format ----------------------------------------------------------------
#
# #ctcgrid v1 blank=<i> n=<N> m=<M> alphabet=<JSON list of symbols>
# p,p,...,p      (N rows of M comma-separated probabilities)


def write_grid(grid: EmissionGrid, fp: IO[str]) -> None:
    n, m = grid.probs.shape
    alphabet = json.dumps(list(grid.alphabet.symbols))
    fp.write(f"{_GRID_TAG} v1 blank={grid.alphabet.blank_index} n={n} m={m} alphabet={alphabet}\n")
    for row in grid.probs:
        fp.write(",".join(repr(float(v)) for v in row) + "\n")


def read_grid(fp: IO[str]) -> EmissionGrid:
    header = fp.readline().rstrip("\n")
    if not header.startswith(_GRID_TAG + " "):
        raise ValidationError("missing '#ctcgrid' header line")
    head, sep, alpha_json = header.partition(" alphabet=")
    if not sep:
        raise ValidationError("grid header lacks an alphabet")
    fields = dict(tok.split("=", 1) for tok in head.split()[2:] if "=" in tok)
    try:
        symbols = json.loads(alpha_json)
        blank = int(fields["blank"])
        n, m = int(fields["n"]), int(fields["m"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"malformed grid header: {exc}") from None
    alphabet = Alphabet(tuple(symbols), blank)
    rows = []
    for lineno, line in enumerate(fp, 2):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise ValidationError(f"line {lineno}: non-numeric probability") from None
    if len(rows) != n or any(len(r) != m for r in rows):
        raise ValidationError(f"grid body does not match header shape {n}x{m}")
    return EmissionGrid(alphabet, rows)
