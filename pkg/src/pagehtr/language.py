"""Character n-gram language model, edit distance and candidate re-ranking."""

from __future__ import annotations

import io
import json
import math
import re
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import IO, BinaryIO, Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "BOS",
    "EOS",
    "UNK",
    "CharLM",
    "Lexicon",
    "Candidate",
    "train_char_ngram",
    "perplexity",
    "levenshtein",
    "in_vocab_proportion",
    "ranking_key",
    "rank_candidates",
]

# Private-use code points: never produced by real text.
BOS = "\ue000"
EOS = "\ue001"
UNK = "\ue002"

_MAGIC = b"PHLM"
_VERSION = 1


class CharLM:
    """Additively smoothed character n-gram model.

    ``P(c | ctx) = (count(ctx, c) + k) / (count(ctx) + k * |V|)`` where the
    context is the previous ``order - 1`` characters (left-padded with the
    begin sentinel) and ``V`` is the prediction vocabulary: every training
    character plus the end and unknown sentinels. Characters outside ``V``
    are scored as the unknown sentinel.

    Treat instances as immutable once built.
    """

    def __init__(
        self,
        order: int,
        counts: Mapping[str, Mapping[str, int]],
        smoothing_k: float,
        vocab: Iterable[str],
    ):
        if order < 1:
            raise ValidationError("order must be >= 1")
        if not smoothing_k > 0:
            raise ValidationError("smoothing_k must be > 0")
        vocab = set(vocab) | {EOS, UNK}
        vocab.discard(BOS)
        self.order = int(order)
        self.smoothing_k = float(smoothing_k)
        self.vocab = tuple(sorted(vocab))
        self._vocab_set = frozenset(self.vocab)
        self.counts = {ctx: dict(nxt) for ctx, nxt in counts.items()}
        self._totals = {ctx: sum(nxt.values()) for ctx, nxt in self.counts.items()}
        self._log_cache = lru_cache(maxsize=65536)(self._log_probs_uncached)

    @classmethod
    def uniform(cls, chars: Iterable[str], order: int = 1) -> "CharLM":
        """Model with no counts: every context predicts ``1/|V|`` for each symbol."""
        return cls(order, {}, 1.0, chars)

    def __len__(self):
        return len(self.vocab)

    def __repr__(self):
        return f"CharLM(order={self.order}, k={self.smoothing_k}, |V|={len(self.vocab)}, contexts={len(self.counts)})"

    def context(self, history: str) -> str:
        n = self.order - 1
        if n == 0:
            return ""
        history = "".join(c if c in self._vocab_set else UNK for c in history[-n:])
        return BOS * (n - len(history)) + history

    def normalize(self, char: str) -> str:
        return char if char in self._vocab_set else UNK

    def prob(self, char: str, context: str) -> float:
        nxt = self.counts.get(context)
        denom = self._totals.get(context, 0) + self.smoothing_k * len(self.vocab)
        count = nxt.get(self.normalize(char), 0) if nxt else 0
        return (count + self.smoothing_k) / denom

    def log_prob(self, char: str, context: str) -> float:
        return math.log(self.prob(char, context))

    def _log_probs_uncached(self, context: str, chars: tuple[str, ...]) -> np.ndarray:
        return np.log(np.array([self.prob(c, context) for c in chars], dtype=float))

    def log_probs(self, context: str, chars: Sequence[str]) -> np.ndarray:
        """Vector of ``log P(c | context)`` for each ``c`` in ``chars`` (cached)."""
        return self._log_cache(context, tuple(chars))

    def text_log_prob(self, text: str) -> tuple[float, int]:
        """Sum of log-probabilities over ``text`` plus the end sentinel, and the number of predictions."""
        total = 0.0
        history = ""
        for ch in text:
            total += self.log_prob(ch, self.context(history))
            history += ch
        total += self.log_prob(EOS, self.context(history))
        return total, len(text) + 1

    def perplexity(self, text: str) -> float:
        if not text:
            raise ValidationError("perplexity of empty text is undefined")
        logp, n = self.text_log_prob(text)
        return math.exp(-logp / n)

    # -- serialisation -----------------------------------------------------

    def save(self, fp: BinaryIO) -> None:
        def put_str(s: str):
            raw = s.encode("utf-8")
            fp.write(struct.pack("<I", len(raw)))
            fp.write(raw)

        fp.write(_MAGIC)
        fp.write(struct.pack("<HHd", _VERSION, self.order, self.smoothing_k))
        put_str(json.dumps(list(self.vocab)))
        fp.write(struct.pack("<I", len(self.counts)))
        for ctx in sorted(self.counts):
            nxt = self.counts[ctx]
            put_str(ctx)
            fp.write(struct.pack("<I", len(nxt)))
            for ch in sorted(nxt):
                put_str(ch)
                fp.write(struct.pack("<Q", nxt[ch]))

    @classmethod
    def load(cls, fp: BinaryIO) -> "CharLM":
        def take(n: int) -> bytes:
            raw = fp.read(n)
            if len(raw) != n:
                raise ValidationError("truncated language model file")
            return raw

        def get_str() -> str:
            (n,) = struct.unpack("<I", take(4))
            return take(n).decode("utf-8")

        if take(4) != _MAGIC:
            raise ValidationError("not a language model file (bad magic bytes)")
        version, order, k = struct.unpack("<HHd", take(12))
        if version != _VERSION:
            raise ValidationError(f"unsupported language model version {version}")
        vocab = json.loads(get_str())
        counts: dict[str, dict[str, int]] = {}
        (n_ctx,) = struct.unpack("<I", take(4))
        for _ in range(n_ctx):
            ctx = get_str()
            (n_next,) = struct.unpack("<I", take(4))
            nxt = {}
            for _ in range(n_next):
                ch = get_str()
                (nxt[ch],) = struct.unpack("<Q", take(8))
            counts[ctx] = nxt
        return cls(order, counts, k, vocab)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()


def train_char_ngram(corpus: Iterable[str], order: int = 5, smoothing_k: float = 1.0) -> CharLM:
    """Count ``order``-grams over sentinel-padded lines of ``corpus``."""
    if order < 1:
        raise ValidationError("order must be >= 1")
    n = order - 1
    counts: dict[str, Counter] = defaultdict(Counter)
    vocab: set[str] = set()
    seen_line = False
    for line in corpus:
        line = line.rstrip("\r\n")
        seen_line = True
        vocab.update(line)
        padded = BOS * n + line + EOS
        for i in range(n, len(padded)):
            counts[padded[i - n : i]][padded[i]] += 1
    if not seen_line:
        raise ValidationError("cannot train a language model on an empty corpus")
    return CharLM(order, counts, smoothing_k, vocab)


def perplexity(lm, text: str) -> float:
    """Perplexity of ``text`` under any scorer exposing ``perplexity(text)``."""
    if not text:
        raise ValidationError("perplexity of empty text is undefined")
    return float(lm.perplexity(text))


def levenshtein(a: Sequence, b: Sequence) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


_WORD_RE = re.compile(r"[^\W\d_]+")


def tokenize(text: str) -> list[str]:
    """Lowercased runs of letters; everything else separates words."""
    return [t.lower() for t in _WORD_RE.findall(text)]


@dataclass(frozen=True)
class Lexicon:
    words: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "words", frozenset(w.lower() for w in self.words))
        if "" in self.words:
            raise ValidationError("lexicon contains an empty word")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Lexicon":
        return cls(frozenset(w.strip() for w in lines if w.strip()))

    @classmethod
    def from_file(cls, fp: IO[str]) -> "Lexicon":
        return cls.from_lines(fp)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.words

    def __len__(self):
        return len(self.words)


def in_vocab_proportion(text: str, lex: Lexicon) -> float:
    tokens = tokenize(text)
    if not tokens:
        return 1.0
    return sum(t in lex.words for t in tokens) / len(tokens)


@dataclass(frozen=True)
class Candidate:
    text: str
    source_score: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.source_score):
            raise ValidationError(f"candidate score must be finite, got {self.source_score}")


def ranking_key(text: str, source: str, lex: Lexicon, lm) -> tuple[float, int, float]:
    """(-in-vocabulary proportion, edit distance to ``source``, perplexity); smaller ranks first."""
    ppl = perplexity(lm, text) if text else math.inf
    return (-in_vocab_proportion(text, lex), levenshtein(text, source), ppl)


def rank_candidates(
    cands: Sequence[Candidate], source: str, lex: Lexicon, lm
) -> list[Candidate]:
    """Order candidates by in-vocabulary share, then closeness to ``source``, then perplexity.

    The sort is stable, so candidates tied on all three keys keep their input order.
    """
    if not cands:
        raise ValidationError("no candidates to rank")
    keys = [ranking_key(c.text, source, lex, lm) for c in cands]
    order = sorted(range(len(cands)), key=lambda i: keys[i])
    return [cands[i] for i in order]
