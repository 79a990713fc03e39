"""Command-line entry point: ``pagehtr <subcommand> ...``.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 internal error.
Every subcommand prints tab-separated output by default and JSON with ``--json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ctc import beam_search_decode, greedy_decode, read_grid
from .errors import StageError, ValidationError
from .evaluation import benchmark, corpus_cer, line_cers, normalize_text, page_alignment
from .geometry import nms, read_detections
from .language import Candidate, CharLM, Lexicon, rank_candidates, ranking_key, train_char_ngram
from .layout import (
    HeuristicParams,
    cluster_words_to_lines,
    filter_lines,
    pipeline_words_to_lines,
    read_lines,
    write_lines,
)
from .noise import NoiseModel, default_confusion_map, generate_pairs, load_confusion_map
from .pipeline import PipelineConfig, load_word_grids, run_pipeline, transcribe_lines, write_outputs

log = logging.getLogger("pagehtr")

PARAMS_ENV = "PAGEHTR_PARAMS"

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


def _emit(args, payload: dict, rows: list[list] | None = None, header: list[str] | None = None):
    if args.json:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True, default=str)
        sys.stdout.write("\n")
        return
    writer = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    if header:
        writer.writerow(header)
    for row in rows or []:
        writer.writerow(row)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _load_params(path: str | None) -> HeuristicParams:
    path = path or os.environ.get(PARAMS_ENV)
    if not path:
        return HeuristicParams()
    with open(path, encoding="utf-8") as fp:
        try:
            obj = json.load(fp)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from None
    return HeuristicParams.from_dict(obj)


def _load_lm(path: str | None) -> CharLM | None:
    if path is None:
        return None
    with open(path, "rb") as fp:
        return CharLM.load(fp)


def _load_lexicon(path: str | None) -> Lexicon | None:
    if path is None:
        return None
    with open(path, encoding="utf-8") as fp:
        return Lexicon.from_file(fp)


def _read_words(path: str):
    with open(path, encoding="utf-8") as fp:
        return read_detections(fp)


def _read_text_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fp:
        return fp.read().splitlines()


# -- subcommands ----------------------------------------------------------------


def cmd_decode(args) -> int:
    with open(args.grid, encoding="utf-8") as fp:
        grid = read_grid(fp)
    if args.mode == "greedy":
        results = [greedy_decode(grid)]
    else:
        lm = _load_lm(args.lm)
        results = beam_search_decode(grid, args.beam_width, lm=lm, lm_weight=args.lm_weight, top_k=args.top_k)
    _emit(
        args,
        {"mode": args.mode, "results": [{"text": r.text, "log_prob": r.log_prob} for r in results]},
        [[r.text, _fmt(r.log_prob)] for r in results],
        ["text", "log_prob"],
    )
    return EXIT_OK


def cmd_lines(args) -> int:
    params = _load_params(args.params)
    if args.threshold is not None:
        params = HeuristicParams(**{**params.to_dict(), "y_overlap_threshold": args.threshold})
    words = _read_words(args.input)
    kept = nms(words, args.nms) if args.nms is not None else words
    if args.literal:
        lines = cluster_words_to_lines(kept, params.y_overlap_threshold, literal=True)
        if not args.no_filter:
            lines = filter_lines(lines, params)
    else:
        lines = pipeline_words_to_lines(kept, params, apply_filter=not args.no_filter)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fp:
        write_lines(lines, fp, words)
    if args.plot:
        from .plotting import plot_layout

        plot_layout(kept, lines, args.plot)
    _emit(
        args,
        {"words": len(words), "kept_words": len(kept), "lines": len(lines), "out": args.out},
        [[len(words), len(kept), len(lines), args.out]],
        ["words", "kept_words", "lines", "out"],
    )
    return EXIT_OK


def cmd_filter(args) -> int:
    params = _load_params(args.params)
    words = _read_words(args.words)
    with open(args.input, encoding="utf-8") as fp:
        lines = read_lines(fp, words)
    kept = filter_lines(lines, params)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fp:
        write_lines(kept, fp, words)
    _emit(args, {"lines_in": len(lines), "lines_out": len(kept)}, [[len(lines), len(kept)]], ["lines_in", "lines_out"])
    return EXIT_OK


def cmd_transcribe(args) -> int:
    words = _read_words(args.words)
    with open(args.lines, encoding="utf-8") as fp:
        lines = read_lines(fp, words)
    grids = load_word_grids(Path(args.grids), len(words))
    lm = _load_lm(args.lm)
    lexicon = _load_lexicon(args.lexicon)
    if args.rank and (lm is None or lexicon is None):
        raise ValidationError("--rank needs --lm and --lexicon")
    transcript = transcribe_lines(
        lines, words, grids,
        mode=args.mode, beam_width=args.beam_width, lm=lm, lm_weight=args.lm_weight,
        top_k=args.top_k, lexicon=lexicon, rank=args.rank,
    )
    with open(args.out, "w", encoding="utf-8", newline="\n") as fp:
        fp.writelines(t + "\n" for t in transcript)
    _emit(args, {"lines": len(transcript), "transcript": transcript}, [[i, t] for i, t in enumerate(transcript)], ["line", "text"])
    return EXIT_OK


def _read_candidates(path: str) -> dict[int, list[Candidate]]:
    groups: dict[int, list[Candidate]] = {}
    with open(path, encoding="utf-8") as fp:
        for lineno, raw in enumerate(fp, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
                cand = Candidate(str(obj["text"]), float(obj.get("source_score", 0.0)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path} line {lineno}: bad candidate record ({exc})") from None
            groups.setdefault(int(obj.get("line", 0)), []).append(cand)
    return groups


def cmd_rank(args) -> int:
    groups = _read_candidates(args.candidates)
    sources = _read_text_lines(args.source)
    lexicon = _load_lexicon(args.lexicon)
    lm = _load_lm(args.lm)
    rows, payload = [], []
    for line in sorted(groups):
        if line >= len(sources):
            raise ValidationError(f"no source string for candidate line {line}")
        source = sources[line]
        ranked = rank_candidates(groups[line], source, lexicon, lm)
        for pos, cand in enumerate(ranked):
            neg_iv, dist, ppl = ranking_key(cand.text, source, lexicon, lm)
            rec = {
                "line": line, "rank": pos, "text": cand.text, "source_score": cand.source_score,
                "in_vocab": -neg_iv, "levenshtein": dist, "perplexity": ppl,
            }
            payload.append(rec)
            rows.append([line, pos, cand.text, _fmt(-neg_iv), dist, _fmt(ppl)])
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fp:
            for rec in payload:
                fp.write(json.dumps(rec) + "\n")
    _emit(args, {"ranked": payload}, rows, ["line", "rank", "text", "in_vocab", "levenshtein", "perplexity"])
    return EXIT_OK


def cmd_noisify(args) -> int:
    if args.confusion:
        with open(args.confusion, encoding="utf-8") as fp:
            confusion = load_confusion_map(fp)
    else:
        confusion = default_confusion_map()
    model = NoiseModel(args.p_ins, args.p_del, args.p_sub, confusion, args.insert_alphabet)
    n = 0
    with open(args.corpus, encoding="utf-8") as src, open(args.out, "w", encoding="utf-8", newline="") as dst:
        writer = csv.writer(dst, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        for noisy, clean in generate_pairs(src, model, args.seed):
            writer.writerow([noisy, clean])
            n += 1
    _emit(args, {"pairs": n, "out": args.out, "seed": args.seed}, [[n, args.out, args.seed]], ["pairs", "out", "seed"])
    return EXIT_OK


def cmd_lm_train(args) -> int:
    with open(args.corpus, encoding="utf-8") as fp:
        lm = train_char_ngram(fp, args.order, args.smoothing_k)
    with open(args.out, "wb") as fp:
        lm.save(fp)
    _emit(
        args,
        {"order": lm.order, "vocab": len(lm.vocab), "contexts": len(lm.counts), "out": args.out},
        [[lm.order, len(lm.vocab), len(lm.counts), args.out]],
        ["order", "vocab", "contexts", "out"],
    )
    return EXIT_OK


def cmd_cer(args) -> int:
    def prep(lines):
        return [normalize_text(t, fold_case=args.fold_case, strip_punct=args.strip_punct) for t in lines]

    refs, hyps = prep(_read_text_lines(args.ref)), prep(_read_text_lines(args.hyp))
    if args.page:
        rep = page_alignment(refs, hyps)
        reports = [rep]
        value = rep.cer
        rows = [["page", rep.substitutions, rep.insertions, rep.deletions, rep.ref_length, _fmt(rep.cer)]]
    else:
        if len(refs) != len(hyps):
            raise ValidationError(
                f"reference has {len(refs)} lines but hypothesis has {len(hyps)}; use --page to align whole pages"
            )
        pairs = list(zip(refs, hyps))
        reports = line_cers(pairs)
        value = corpus_cer(pairs, micro=args.micro)
        rows = [[i + 1, r.substitutions, r.insertions, r.deletions, r.ref_length, _fmt(r.cer)] for i, r in enumerate(reports)]
        rows.append(["corpus", sum(r.substitutions for r in reports), sum(r.insertions for r in reports),
                     sum(r.deletions for r in reports), sum(r.ref_length for r in reports), _fmt(value)])
    if args.plot:
        from .plotting import plot_cer

        plot_cer(reports, args.plot)
    _emit(
        args,
        {"cer": value, "average": "page" if args.page else ("micro" if args.micro else "macro"),
         "lines": [r.to_dict() for r in reports]},
        rows,
        ["line", "S", "I", "D", "N", "cer"],
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    paths = sorted(Path(args.grids).glob("*.csv"))
    if not paths:
        raise ValidationError(f"no *.csv grids in {args.grids}")
    grids = []
    for p in paths:
        with open(p, encoding="utf-8") as fp:
            grids.append(read_grid(fp))
    lm = _load_lm(args.lm)

    tasks = []
    if args.mode in ("greedy", "both"):
        tasks.append(("greedy", lambda: [greedy_decode(g) for g in grids]))
    if args.mode in ("beam", "both"):
        tasks.append((
            f"beam{args.beam_width}",
            lambda: [beam_search_decode(g, args.beam_width, lm=lm, lm_weight=args.lm_weight) for g in grids],
        ))
    reports = [benchmark(fn, args.iterations, args.warmup, name=name, track_memory=args.memory) for name, fn in tasks]
    ratio = reports[1].mean_seconds / reports[0].mean_seconds if len(reports) == 2 else None
    if args.plot:
        from .plotting import plot_benchmark

        plot_benchmark(reports, args.plot)
    rows = [[r.name, len(grids), r.iterations, _fmt(r.mean_seconds), _fmt(r.std_seconds),
             "" if r.peak_bytes is None else r.peak_bytes] for r in reports]
    if ratio is not None:
        rows.append(["ratio", "", "", _fmt(ratio), "", ""])
    _emit(
        args,
        {"grids": len(grids), "reports": [r.to_dict() for r in reports], "ratio": ratio},
        rows,
        ["task", "grids", "iterations", "mean_s", "std_s", "peak_bytes"],
    )
    return EXIT_OK


def cmd_run(args) -> int:
    params = _load_params(args.params)
    config = PipelineConfig(
        words_path=Path(args.words),
        grids_dir=Path(args.grids),
        ref_path=Path(args.ref) if args.ref else None,
        lexicon_path=Path(args.lexicon) if args.lexicon else None,
        lm_path=Path(args.lm) if args.lm else None,
        params=params,
        apply_filter=not args.no_filter,
        nms_threshold=args.nms,
        mode=args.mode,
        beam_width=args.beam_width,
        lm_weight=args.lm_weight,
        top_k=args.top_k,
        rank=args.rank,
        seed=args.seed,
    )
    result = run_pipeline(config)
    report = write_outputs(result, Path(args.out_dir), config)
    if args.plot:
        from .plotting import plot_layout

        plot_layout(result.words, result.lines, Path(args.out_dir) / "layout.png")
    payload = {**report, "transcript": result.transcript}
    cer = result.alignment.cer if result.alignment else None
    _emit(
        args,
        payload,
        [[report["words"], report["lines"], "" if cer is None else _fmt(cer), args.out_dir]],
        ["words", "lines", "cer", "out_dir"],
    )
    return EXIT_OK


def cmd_fixture(args) -> int:
    from .synth import make_page, write_page

    rng = np.random.default_rng(args.seed)
    inject = [k for k in (args.inject or "").split(",") if k]
    page = make_page(rng, args.bands, (args.min_words, args.max_words), inject, confidence=args.confidence)
    write_page(page, Path(args.out))
    _emit(
        args,
        {"out": args.out, "words": len(page.words), "bands": len(page.ref_lines), "injected": page.injected},
        [[args.out, len(page.words), len(page.ref_lines), ",".join(page.injected)]],
        ["out", "words", "bands", "injected"],
    )
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------


def _add_decode_flags(p, top_k_default=1):
    p.add_argument("--mode", choices=("greedy", "beam"), default="greedy")
    p.add_argument("--beam-width", type=int, default=32)
    p.add_argument("--lm", help="character LM file from lm-train")
    p.add_argument("--lm-weight", type=float, default=0.0)
    p.add_argument("--top-k", type=int, default=top_k_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pagehtr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")

    p = sub.add_parser("decode", parents=[common], help="decode one emission grid")
    p.add_argument("--grid", required=True)
    _add_decode_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("lines", parents=[common], help="cluster word detections into lines")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=None, help="y-overlap threshold (default 0.4)")
    p.add_argument("--no-filter", action="store_true", help="skip the line heuristics")
    p.add_argument("--params", help=f"heuristic parameters JSON (default: ${PARAMS_ENV})")
    p.add_argument("--nms", type=float, default=None, metavar="IOU", help="apply NMS to words first")
    p.add_argument("--literal", action="store_true", help="uncorrected clustering variant that drops line-opening words")
    p.add_argument("--plot", metavar="PNG", help="render words and lines to an image")
    p.set_defaults(func=cmd_lines)

    p = sub.add_parser("filter", parents=[common], help="apply line heuristics to a lines file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--words", required=True, help="detections the lines' member indices refer to")
    p.add_argument("--out", required=True)
    p.add_argument("--params")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("transcribe", parents=[common], help="decode the lines of a lines file")
    p.add_argument("--lines", required=True)
    p.add_argument("--words", required=True)
    p.add_argument("--grids", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--rank", action="store_true")
    _add_decode_flags(p, top_k_default=5)
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("rank", parents=[common], help="re-rank candidate strings")
    p.add_argument("--candidates", required=True, help="JSON-lines: text, source_score[, line]")
    p.add_argument("--source", required=True, help="source strings, one per line")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--out", help="write ranked JSON-lines here")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("noisify", parents=[common], help="make (noisy, clean) training pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p-ins", type=float, default=0.02)
    p.add_argument("--p-del", type=float, default=0.02)
    p.add_argument("--p-sub", type=float, default=0.02)
    p.add_argument("--confusion", help="JSON map: char -> list of look-alikes")
    p.add_argument("--insert-alphabet", default="abcdefghijklmnopqrstuvwxyz")
    p.set_defaults(func=cmd_noisify)

    p = sub.add_parser("lm-train", parents=[common], help="train a character n-gram model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--smoothing-k", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("cer", parents=[common], help="character error rate")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--micro", action="store_true", help="pool counts instead of averaging lines")
    p.add_argument("--page", action="store_true", help="align whole pages joined by newlines")
    p.add_argument("--fold-case", action="store_true")
    p.add_argument("--strip-punct", action="store_true")
    p.add_argument("--plot", metavar="PNG")
    p.set_defaults(func=cmd_cer)

    p = sub.add_parser("bench", parents=[common], help="time decoding over a directory of grids")
    p.add_argument("--grids", required=True)
    p.add_argument("--mode", choices=("greedy", "beam", "both"), default="both")
    p.add_argument("--beam-width", type=int, default=32)
    p.add_argument("--lm")
    p.add_argument("--lm-weight", type=float, default=0.0)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--memory", action="store_true", help="sample peak heap with tracemalloc")
    p.add_argument("--plot", metavar="PNG")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("run", parents=[common], help="full pipeline: words -> lines -> text -> CER")
    p.add_argument("--words", required=True)
    p.add_argument("--grids", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ref")
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--params")
    p.add_argument("--nms", type=float, default=None, metavar="IOU")
    p.add_argument("--lexicon")
    p.add_argument("--rank", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true", help="also write layout.png")
    _add_decode_flags(p, top_k_default=5)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fixture", parents=[common], help="write a synthetic test page")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bands", type=int, default=None)
    p.add_argument("--min-words", type=int, default=1)
    p.add_argument("--max-words", type=int, default=12)
    p.add_argument("--inject", help="comma list of: tiny, offpage, double")
    p.add_argument("--confidence", type=float, default=1.0)
    p.set_defaults(func=cmd_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, ValidationError):
            return EXIT_VALIDATION
        if isinstance(exc.cause, OSError):
            return EXIT_IO
        return EXIT_INTERNAL
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:
        log.debug("unhandled error", exc_info=True)
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
