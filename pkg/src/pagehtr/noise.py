"""Synthetic corruption of clean sentences into recogniser-like noisy text.

Noisy/clean pairs produced here are training data for a text denoiser.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Iterable, Iterator, Mapping

import numpy as np

from .errors import ValidationError

__all__ = [
    "NoiseModel",
    "default_confusion_map",
    "load_confusion_map",
    "line_seed",
    "corrupt",
    "generate_pairs",
]


def _validate_confusion(raw: Mapping) -> dict[str, tuple[str, ...]]:
    out = {}
    for ch, alts in raw.items():
        if ch.startswith("_"):
            continue
        if len(ch) != 1:
            raise ValidationError(f"confusion key {ch!r} must be a single character")
        alts = tuple(alts)
        if not alts:
            raise ValidationError(f"confusion entry for {ch!r} is empty")
        if ch in alts:
            raise ValidationError(f"confusion entry for {ch!r} maps the character to itself")
        out[ch] = alts
    return out


def load_confusion_map(fp: IO[str]) -> dict[str, tuple[str, ...]]:
    return _validate_confusion(json.load(fp))


def default_confusion_map() -> dict[str, tuple[str, ...]]:
    """The bundled visual-confusion table (``data/confusion.json``)."""
    with resources.files("pagehtr").joinpath("data/confusion.json").open(encoding="utf-8") as fp:
        return load_confusion_map(fp)


@dataclass(frozen=True)
class NoiseModel:
    p_insert: float = 0.02
    p_delete: float = 0.02
    p_substitute: float = 0.02
    confusion: Mapping[str, tuple[str, ...]] = field(default_factory=default_confusion_map)
    insert_alphabet: str = string.ascii_lowercase

    def __post_init__(self):
        for name in ("p_insert", "p_delete", "p_substitute"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {p}")
        if self.p_delete + self.p_substitute > 1.0 + 1e-12:
            raise ValidationError("p_delete + p_substitute must not exceed 1")
        object.__setattr__(self, "confusion", _validate_confusion(self.confusion))
        if self.p_insert > 0 and not self.insert_alphabet:
            raise ValidationError("insert_alphabet is empty but p_insert > 0")


def line_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Per-line seed: ``SeedSequence((seed, index))``, independent of every other line."""
    return np.random.SeedSequence((int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)))


def corrupt(text: str, model: NoiseModel, seed) -> str:
    """One left-to-right corruption pass over ``text``.

    Every gap between characters (both ends included) receives an inserted
    character with probability ``p_insert``. Every original character is
    deleted with ``p_delete``, otherwise replaced by a random visually similar
    character with ``p_substitute`` (left alone if it has no confusion entry),
    otherwise copied.

    ``seed`` is anything ``numpy.random.default_rng`` accepts.
    """
    rng = np.random.default_rng(seed)
    n = len(text)
    ins_draw = rng.random(n + 1)
    ins_pick = rng.integers(0, max(1, len(model.insert_alphabet)), size=n + 1)
    op_draw = rng.random(n)
    sub_pick = rng.random(n)

    out = []
    p_del, p_sub = model.p_delete, model.p_delete + model.p_substitute
    for i in range(n + 1):
        if ins_draw[i] < model.p_insert:
            out.append(model.insert_alphabet[ins_pick[i]])
        if i == n:
            break
        ch = text[i]
        r = op_draw[i]
        if r < p_del:
            continue
        if r < p_sub:
            alts = model.confusion.get(ch)
            if alts:
                ch = alts[min(int(sub_pick[i] * len(alts)), len(alts) - 1)]
        out.append(ch)
    return "".join(out)


def generate_pairs(lines: Iterable[str], model: NoiseModel, seed: int) -> Iterator[tuple[str, str]]:
    """Yield ``(noisy, clean)`` for each line; line ``i`` is corrupted with ``line_seed(seed, i)``."""
    for i, line in enumerate(lines):
        clean = line.rstrip("\r\n")
        yield corrupt(clean, model, line_seed(seed, i)), clean
