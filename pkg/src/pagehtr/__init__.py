"""Detection post-processing, CTC decoding, language-model re-ranking and CER
scoring for full-page handwritten text recognition."""

__version__ = "0.1.0"

from .ctc import (
    Alphabet,
    DecodeResult,
    EmissionGrid,
    beam_search_decode,
    ctc_collapse,
    exhaustive_decode,
    greedy_decode,
)
from .errors import InvariantError, SearchSpaceTooLarge, StageError, ValidationError
from .evaluation import AlignmentReport, BenchmarkReport, align, benchmark, corpus_cer
from .geometry import AnchorSpec, BBox, Detection, enclosing_bbox, generate_anchors, iou, nms, y_overlap
from .language import (
    Candidate,
    CharLM,
    Lexicon,
    in_vocab_proportion,
    levenshtein,
    perplexity,
    rank_candidates,
    train_char_ngram,
)
from .layout import HeuristicParams, LineProposal, cluster_words_to_lines, filter_lines, pipeline_words_to_lines
from .noise import NoiseModel, corrupt, default_confusion_map, generate_pairs
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
