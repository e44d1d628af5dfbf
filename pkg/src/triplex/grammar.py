"""Domain types and the special-token grammar tying triplets to token sequences.

Six sequence kinds flow through the system:

    x_P  <sen> w1 ... wn </sen>                 wrapped input sentence
    y_P  <rel> p1 </rel> ... <rel> pk </rel>    predicate sequence
    x_T  [y_P ; x_P]                            prompt + wrapped sentence
    y_T  (<sub> s </sub> <rel> p </rel> <obj> o </obj>)*   triplet sequence
    x_S  same grammar as y_T                    reconstruction source
    y_S  same grammar as x_P                    reconstructed sentence

Serializers are strict (they reject reserved-token collisions); parsers run
lenient by default because decoder output is not guaranteed well formed, and
strict when loading trusted data. Everything here is a pure function over
immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

SEN_OPEN = "<sen>"
SEN_CLOSE = "</sen>"
SUB_OPEN = "<sub>"
SUB_CLOSE = "</sub>"
REL_OPEN = "<rel>"
REL_CLOSE = "</rel>"
OBJ_OPEN = "<obj>"
OBJ_CLOSE = "</obj>"

#: The eight reserved surface forms, in a stable order.
SPECIAL_TOKENS = (
    SEN_OPEN, SEN_CLOSE,
    SUB_OPEN, SUB_CLOSE,
    REL_OPEN, REL_CLOSE,
    OBJ_OPEN, OBJ_CLOSE,
)
_SPECIAL_SET = frozenset(SPECIAL_TOKENS)

#: Valid sequence kinds. y_T and x_S share a grammar, as do x_P and y_S.
SEQ_KINDS = ("x_P", "y_P", "x_T", "y_T", "x_S", "y_S")
_GRAMMAR_FAMILY = {
    "x_P": "sentence", "y_S": "sentence",
    "y_P": "predicates",
    "x_T": "prompted_sentence",
    "y_T": "triplets", "x_S": "triplets",
}


class GrammarError(ValueError):
    """Base class for serialization/parsing failures."""


class EmptySentence(GrammarError):
    pass


class ReservedToken(GrammarError):
    pass


class MalformedSequence(GrammarError):
    pass


class KindMismatch(GrammarError):
    pass


def _check_clean(text: str, what: str) -> None:
    """Reject field text that embeds any reserved surface form."""
    for tok in SPECIAL_TOKENS:
        if tok in text:
            raise ReservedToken(f"{what} contains reserved token {tok!r}: {text!r}")


@dataclass(frozen=True)
class Sentence:
    """An input sentence with a recorded tokenization.

    ``text`` always equals ``" ".join(tokens)``: tokenization is recorded at
    construction so detokenization is deterministic everywhere downstream.
    """

    id: str
    tokens: tuple[str, ...]

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    @staticmethod
    def from_text(id: str, text: str) -> "Sentence":
        return Sentence(id=id, tokens=tuple(text.split()))

    @staticmethod
    def from_tokens(id: str, tokens: Sequence[str]) -> "Sentence":
        return Sentence(id=id, tokens=tuple(tokens))

    def validate(self) -> None:
        if not self.tokens:
            raise EmptySentence(f"sentence {self.id!r} has no tokens")
        for tok in self.tokens:
            if not tok:
                raise EmptySentence(f"sentence {self.id!r} has an empty token")
            _check_clean(tok, f"sentence {self.id!r} token")


@dataclass(frozen=True)
class Triplet:
    """A (subject, predicate, object) span-text triple."""

    subject: str
    predicate: str
    object: str

    def validate(self) -> None:
        for name, value in (("subject", self.subject),
                            ("predicate", self.predicate),
                            ("object", self.object)):
            if not value.strip():
                raise EmptySentence(f"triplet {name} is empty")
            _check_clean(value, f"triplet {name}")

    def astuple(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)


@dataclass(frozen=True)
class PredicateSequence:
    """An ordered sequence of predicate span texts (order is significant)."""

    predicates: tuple[str, ...]

    @staticmethod
    def of(predicates: Iterable[str]) -> "PredicateSequence":
        return PredicateSequence(tuple(predicates))

    def __len__(self) -> int:
        return len(self.predicates)

    def validate(self) -> None:
        for p in self.predicates:
            if not p.strip():
                raise EmptySentence("empty predicate in sequence")
            _check_clean(p, "predicate")


@dataclass(frozen=True)
class SerializedSeq:
    """A token sequence tagged with its grammar kind."""

    tokens: tuple[str, ...]
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in SEQ_KINDS:
            raise KindMismatch(f"unknown sequence kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def with_kind(self, kind: str) -> "SerializedSeq":
        """Re-tag a sequence with a grammar-compatible kind (y_T <-> x_S, x_P <-> y_S)."""
        if kind not in SEQ_KINDS:
            raise KindMismatch(f"unknown sequence kind {kind!r}")
        if _GRAMMAR_FAMILY[kind] != _GRAMMAR_FAMILY[self.kind]:
            raise KindMismatch(f"cannot retag {self.kind} as {kind}: different grammar")
        return SerializedSeq(self.tokens, kind)


@dataclass
class ParseReport:
    """Warnings accumulated by a lenient parse; empty means well formed."""

    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.warnings

    def warn(self, msg: str) -> None:
        self.warnings.append(msg)


def wrap_sentence(s: Sentence) -> SerializedSeq:
    """Build x_P = [<sen>, w1, ..., wn, </sen>]."""
    s.validate()
    return SerializedSeq((SEN_OPEN, *s.tokens, SEN_CLOSE), "x_P")


def serialize_predicates(ps: PredicateSequence) -> SerializedSeq:
    """Build y_P = [<rel>, p1, </rel>, ..., <rel>, pk, </rel>]."""
    ps.validate()
    tokens: list[str] = []
    for p in ps.predicates:
        tokens.append(REL_OPEN)
        tokens.extend(p.split())
        tokens.append(REL_CLOSE)
    return SerializedSeq(tuple(tokens), "y_P")


def serialize_triplets(ts: Sequence[Triplet]) -> SerializedSeq:
    """Build y_T as one <sub>..</sub> <rel>..</rel> <obj>..</obj> block per triplet."""
    tokens: list[str] = []
    for t in ts:
        t.validate()
        tokens.append(SUB_OPEN)
        tokens.extend(t.subject.split())
        tokens.append(SUB_CLOSE)
        tokens.append(REL_OPEN)
        tokens.extend(t.predicate.split())
        tokens.append(REL_CLOSE)
        tokens.append(OBJ_OPEN)
        tokens.extend(t.object.split())
        tokens.append(OBJ_CLOSE)
    return SerializedSeq(tuple(tokens), "y_T")


def build_triplet_input(y_p: SerializedSeq, x_p: SerializedSeq) -> SerializedSeq:
    """Build x_T = [y_P ; x_P]; the sentence markers of x_P are retained."""
    if y_p.kind != "y_P":
        raise KindMismatch(f"prompt must be y_P, got {y_p.kind}")
    if x_p.kind != "x_P":
        raise KindMismatch(f"sentence must be x_P, got {x_p.kind}")
    return SerializedSeq(y_p.tokens + x_p.tokens, "x_T")


def _tokens_of(seq: "SerializedSeq | Sequence[str]") -> tuple[str, ...]:
    if isinstance(seq, SerializedSeq):
        return seq.tokens
    return tuple(seq)


def parse_predicates(
    seq: "SerializedSeq | Sequence[str]", strict: bool = False
) -> tuple[PredicateSequence, ParseReport]:
    """Invert serialize_predicates.

    Lenient mode drops malformed regions and records one warning per dropped
    region; strict mode raises MalformedSequence on the first problem.
    Well-formed spans are kept in order; parse(serialize(x)) == x exactly.
    """
    tokens = _tokens_of(seq)
    report = ParseReport()
    preds: list[str] = []
    i, n = 0, len(tokens)
    while i < n:
        tok = tokens[i]
        if tok == REL_OPEN:
            j = i + 1
            while j < n and tokens[j] not in _SPECIAL_SET:
                j += 1
            if j < n and tokens[j] == REL_CLOSE:
                span = tokens[i + 1:j]
                if span:
                    preds.append(" ".join(span))
                else:
                    report.warn(f"empty predicate block at token {i}")
                i = j + 1
            elif j < n:
                report.warn(f"unclosed {REL_OPEN} at token {i}: hit {tokens[j]}")
                i = j
            else:
                report.warn(f"unclosed {REL_OPEN} at token {i}: hit end of sequence")
                i = n
        else:
            # Stray run outside any block; swallow it in one warning.
            j = i
            while j < n and tokens[j] != REL_OPEN:
                j += 1
            report.warn(f"{j - i} stray token(s) outside predicate blocks at token {i}")
            i = j
    if strict and not report.ok:
        raise MalformedSequence("; ".join(report.warnings))
    return PredicateSequence(tuple(preds)), report


def parse_triplets(
    seq: "SerializedSeq | Sequence[str]", strict: bool = False
) -> tuple[list[Triplet], ParseReport]:
    """Invert serialize_triplets.

    A triplet is emitted only when a full <sub>..</sub> <rel>..</rel>
    <obj>..</obj> block with three non-empty spans is present; anything else
    is skipped with a warning (lenient) or raises (strict). Duplicate triplets
    are preserved: deduplication is an inference-side policy.
    """
    tokens = _tokens_of(seq)
    report = ParseReport()
    triplets: list[Triplet] = []
    i, n = 0, len(tokens)

    def read_span(start: int, closer: str) -> tuple[tuple[str, ...] | None, int]:
        """Collect tokens after an opener until its closer; None on malformed."""
        j = start
        while j < n and tokens[j] not in _SPECIAL_SET:
            j += 1
        if j < n and tokens[j] == closer:
            return tokens[start:j], j + 1
        if j < n:
            report.warn(f"expected {closer} at token {j}, found {tokens[j]}")
            return None, j
        report.warn(f"expected {closer}, hit end of sequence")
        return None, n

    while i < n:
        if tokens[i] != SUB_OPEN:
            j = i
            while j < n and tokens[j] != SUB_OPEN:
                j += 1
            report.warn(f"{j - i} token(s) outside triplet blocks at token {i}")
            i = j
            continue
        block_start = i
        subj, i = read_span(i + 1, SUB_CLOSE)
        if subj is None:
            continue
        if i >= n or tokens[i] != REL_OPEN:
            report.warn(f"incomplete triplet block at token {block_start}: missing {REL_OPEN}")
            continue
        pred, i = read_span(i + 1, REL_CLOSE)
        if pred is None:
            continue
        if i >= n or tokens[i] != OBJ_OPEN:
            report.warn(f"incomplete triplet block at token {block_start}: missing {OBJ_OPEN}")
            continue
        obj, i = read_span(i + 1, OBJ_CLOSE)
        if obj is None:
            continue
        if not (subj and pred and obj):
            report.warn(f"triplet block at token {block_start} has an empty field")
            continue
        triplets.append(Triplet(" ".join(subj), " ".join(pred), " ".join(obj)))

    if strict and not report.ok:
        raise MalformedSequence("; ".join(report.warnings))
    return triplets, report


def parse_wrapped_sentence(
    seq: "SerializedSeq | Sequence[str]", strict: bool = False
) -> tuple[tuple[str, ...], ParseReport]:
    """Invert wrap_sentence: recover the word tokens from an x_P/y_S layout.

    Lenient mode keeps every non-special token and warns about marker
    irregularities, so an imperfect reconstruction decode still yields text.
    """
    tokens = _tokens_of(seq)
    report = ParseReport()
    if not tokens:
        report.warn("empty sequence")
    else:
        if tokens[0] != SEN_OPEN:
            report.warn(f"expected leading {SEN_OPEN}")
        if tokens[-1] != SEN_CLOSE:
            report.warn(f"expected trailing {SEN_CLOSE}")
    words = [t for t in tokens if t not in _SPECIAL_SET]
    inner = [t for t in tokens[1:-1] if t in _SPECIAL_SET]
    if inner:
        report.warn(f"{len(inner)} special token(s) inside sentence body")
    if not words:
        report.warn("no word tokens between sentence markers")
    if strict and not report.ok:
        raise MalformedSequence("; ".join(report.warnings))
    return tuple(words), report
