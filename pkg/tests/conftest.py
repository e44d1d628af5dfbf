import pytest

from triplex.data import ExtractionInstance, order_triplets
from triplex.grammar import Sentence, Triplet


@pytest.fixture
def birth_sentence() -> Sentence:
    return Sentence.from_text(
        "birth", "Shea was born on September 5, 1900 in San Francisco, California.")


@pytest.fixture
def birth_instance(birth_sentence) -> ExtractionInstance:
    """The worked three-triplet example: two explicit extractions sharing a
    subject and word-sharing predicates, plus one implicit location fact."""
    triplets = (
        Triplet("Shea", "was born on", "September 5, 1900"),
        Triplet("Shea", "was born in", "San Francisco, California"),
        Triplet("San Francisco", "is in", "California"),
    )
    return order_triplets(ExtractionInstance(birth_sentence, triplets))
