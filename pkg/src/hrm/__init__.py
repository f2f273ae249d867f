"""Heterogeneous rendering machines for interpretable dialogue-act-to-text generation."""

import os as _os

# HRM_THREADS caps BLAS worker threads; it must be set before numpy loads.
if _os.environ.get("HRM_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["HRM_THREADS"])

from .config import ConfigError, TrainingConfig
from .data import DialogueAct, Phrase, SegmentedUtterance, Vocabulary, Word, parse_da, segment_utterance
from .decoding import RenderTrace, beam_search, greedy_decode, render_trace
from .metrics import corpus_bleu, slot_error_rate
from .model import HRM
from .training import train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DialogueAct", "HRM", "Phrase", "RenderTrace", "SegmentedUtterance", "TrainingConfig",
    "Vocabulary", "Word", "beam_search", "corpus_bleu", "greedy_decode", "parse_da", "render_trace",
    "segment_utterance", "slot_error_rate", "train",
]
