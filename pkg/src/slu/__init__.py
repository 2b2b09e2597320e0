"""Desk-scale spoken language understanding toolkit."""

from .data import Manifest, Utterance, normalize_text, parse_manifest, write_manifest
from .metrics import align, intent_f1, slots_edit_f1, span_slot_f1, wer
from .subword import SubwordVocab, concat_hidden, project_to_words, tokenize

__version__ = "0.1.0"

__all__ = [
    "Manifest",
    "SubwordVocab",
    "Utterance",
    "align",
    "concat_hidden",
    "intent_f1",
    "normalize_text",
    "parse_manifest",
    "project_to_words",
    "slots_edit_f1",
    "span_slot_f1",
    "tokenize",
    "wer",
    "write_manifest",
    "__version__",
]
