"""End-to-end post-recognition pipeline over file-based stage boundaries.

Inputs stand in for the neural stages: a detections file (one word per
record) and a directory of per-word emission grids, ``word_NNNN.csv`` for the
``NNNN``-th detection. A line is recognised by concatenating its words' grids
left to right, separated by a space step, and decoding the result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .ctc import EmissionGrid, beam_search_decode, concat_grids, greedy_decode, read_grid
from .errors import StageError, ValidationError
from .evaluation import AlignmentReport, page_alignment
from .geometry import Detection, nms, read_detections
from .language import Candidate, CharLM, Lexicon, rank_candidates
from .layout import HeuristicParams, LineProposal, pipeline_words_to_lines, write_lines
from .synth import grid_path

__all__ = [
    "PipelineConfig",
    "PipelineResult",
    "load_word_grids",
    "transcribe_lines",
    "run_pipeline",
    "write_outputs",
]

MODES = ("greedy", "beam")


@dataclass
class PipelineConfig:
    words_path: Path
    grids_dir: Path
    ref_path: Path | None = None
    lexicon_path: Path | None = None
    lm_path: Path | None = None
    params: HeuristicParams = field(default_factory=HeuristicParams)
    apply_filter: bool = True
    nms_threshold: float | None = None
    mode: str = "greedy"
    beam_width: int = 32
    lm_weight: float = 0.0
    top_k: int = 5
    rank: bool = False
    seed: int = 0

    def validate(self) -> None:
        for name in ("words_path", "ref_path", "lexicon_path", "lm_path"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"{name.removesuffix('_path')} file not found: {path}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.beam_width < 1 or self.top_k < 1:
            raise ValidationError("beam_width and top_k must be >= 1")
        if self.rank and self.top_k > self.beam_width:
            raise ValidationError(f"top_k ({self.top_k}) exceeds beam_width ({self.beam_width})")
        if self.rank and (self.lexicon_path is None or self.lm_path is None):
            raise ValidationError("re-ranking needs both a lexicon and a language model")
        if self.rank and self.mode != "beam":
            raise ValidationError("re-ranking needs candidates; use beam mode")
        if self.lm_weight > 0 and self.lm_path is None:
            raise ValidationError("lm_weight > 0 needs a language model")

    def describe(self) -> dict:
        return {
            "apply_filter": self.apply_filter,
            "params": self.params.to_dict(),
            "nms_threshold": self.nms_threshold,
            "mode": self.mode,
            "beam_width": self.beam_width,
            "lm_weight": self.lm_weight,
            "top_k": self.top_k,
            "rank": self.rank,
            "seed": self.seed,
        }


@dataclass
class PipelineResult:
    words: list[Detection]
    lines: list[LineProposal]
    transcript: list[str]
    alignment: AlignmentReport | None = None


def load_word_grids(grids_dir: Path, n_words: int) -> list[EmissionGrid]:
    grids = []
    for i in range(n_words):
        path = grid_path(grids_dir, i)
        try:
            with open(path, encoding="utf-8") as fp:
                grids.append(read_grid(fp))
        except (OSError, ValidationError) as exc:
            raise StageError("grids", str(path), exc) from exc
    return grids


def _line_grid(line: LineProposal, grid_of: dict[int, EmissionGrid]) -> EmissionGrid:
    members = sorted(line.member_words, key=lambda w: (w.box.x, w.box.y))
    return concat_grids([grid_of[id(w)] for w in members])


def transcribe_lines(
    lines: Sequence[LineProposal],
    words: Sequence[Detection],
    grids: Sequence[EmissionGrid],
    *,
    mode: str = "greedy",
    beam_width: int = 32,
    lm: CharLM | None = None,
    lm_weight: float = 0.0,
    top_k: int = 5,
    lexicon: Lexicon | None = None,
    rank: bool = False,
) -> list[str]:
    """Decode every line; output order follows ``lines``."""
    grid_of = {id(w): g for w, g in zip(words, grids)}
    out = []
    for n, line in enumerate(lines):
        try:
            grid = _line_grid(line, grid_of)
            if mode == "greedy":
                out.append(greedy_decode(grid).text)
                continue
            results = beam_search_decode(
                grid, beam_width, lm=lm, lm_weight=lm_weight, top_k=top_k if rank else 1
            )
            if rank:
                source = results[0].text
                cands = [Candidate(r.text, r.log_prob) for r in results]
                out.append(rank_candidates(cands, source, lexicon, lm)[0].text)
            else:
                out.append(results[0].text)
        except ValidationError as exc:
            raise StageError("decode", f"line {n}", exc) from exc
    return out


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    config.validate()
    try:
        with open(config.words_path, encoding="utf-8") as fp:
            words = read_detections(fp)
    except ValidationError as exc:
        raise StageError("detections", str(config.words_path), exc) from exc

    grids = load_word_grids(config.grids_dir, len(words))
    kept = words
    if config.nms_threshold is not None:
        kept = nms(words, config.nms_threshold)

    try:
        lines = pipeline_words_to_lines(kept, config.params, apply_filter=config.apply_filter)
    except ValidationError as exc:
        raise StageError("lines", str(config.words_path), exc) from exc

    lm = lexicon = None
    if config.lm_path is not None:
        with open(config.lm_path, "rb") as fp:
            lm = CharLM.load(fp)
    if config.lexicon_path is not None:
        with open(config.lexicon_path, encoding="utf-8") as fp:
            lexicon = Lexicon.from_file(fp)

    transcript = transcribe_lines(
        lines,
        words,
        grids,
        mode=config.mode,
        beam_width=config.beam_width,
        lm=lm,
        lm_weight=config.lm_weight,
        top_k=config.top_k,
        lexicon=lexicon,
        rank=config.rank,
    )

    alignment = None
    if config.ref_path is not None:
        with open(config.ref_path, encoding="utf-8") as fp:
            ref_lines = fp.read().splitlines()
        alignment = page_alignment(ref_lines, transcript)
    return PipelineResult(words, lines, transcript, alignment)


def write_outputs(result: PipelineResult, out_dir: Path, config: PipelineConfig | None = None) -> dict:
    """Write ``lines.jsonl``, ``transcript.txt`` and ``report.json``; return the report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "lines.jsonl", "w", encoding="utf-8", newline="\n") as fp:
        write_lines(result.lines, fp, result.words)
    with open(out_dir / "transcript.txt", "w", encoding="utf-8", newline="\n") as fp:
        fp.writelines(t + "\n" for t in result.transcript)
    report = {
        "words": len(result.words),
        "lines": len(result.lines),
        "config": config.describe() if config else None,
        "alignment": result.alignment.to_dict() if result.alignment else None,
    }
    with open(out_dir / "report.json", "w", encoding="utf-8", newline="\n") as fp:
        json.dump(report, fp, indent=2, sort_keys=True)
        fp.write("\n")
    return report
