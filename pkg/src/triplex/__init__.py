"""Triplex: generative open information extraction with predicate prompts
and a triplets-to-sentence dual objective."""

__version__ = "0.1.0"

from .grammar import (  # noqa: F401
    PredicateSequence,
    Sentence,
    SerializedSeq,
    Triplet,
)
from .data import CategoryFlags, ExtractionInstance, TrainingPair  # noqa: F401
