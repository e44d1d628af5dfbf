"""Corpus loading, triplet ordering, category flags, and training-pair construction.

The canonical on-disk format is JSONL, one object per line:

    {"id": str, "text": str, "tokens": [str]?, "triplets":
        [{"subject": str, "predicate": str, "object": str}]}

``tokens`` is optional (whitespace split of ``text`` is the fallback) and the
stored sentence text is always the single-space join of its tokens. CaRB-style
TSV and SAOKE-style JSON are normalized into the same representation on load.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .grammar import (
    GrammarError,
    PredicateSequence,
    Sentence,
    SerializedSeq,
    Triplet,
    build_triplet_input,
    serialize_predicates,
    serialize_triplets,
    wrap_sentence,
)


class DataError(ValueError):
    pass


class FormatError(DataError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


class EmptyCorpus(DataError):
    pass


class NotExplicit(DataError):
    pass


class InfeasibleConfig(DataError):
    pass


@dataclass(frozen=True)
class ExtractionInstance:
    """A sentence paired with its ordered triplet set."""

    sentence: Sentence
    triplets: tuple[Triplet, ...]

    @property
    def id(self) -> str:
        return self.sentence.id


@dataclass(frozen=True)
class TrainingPair:
    """One (source, target) sequence pair for objective P, T or S."""

    objective: str
    source: SerializedSeq
    target: SerializedSeq

    _EXPECTED = {"P": ("x_P", "y_P"), "T": ("x_T", "y_T"), "S": ("x_S", "y_S")}

    def __post_init__(self) -> None:
        if self.objective not in self._EXPECTED:
            raise DataError(f"unknown objective {self.objective!r}")
        src_kind, tgt_kind = self._EXPECTED[self.objective]
        if self.source.kind != src_kind or self.target.kind != tgt_kind:
            raise DataError(
                f"objective {self.objective} expects ({src_kind} -> {tgt_kind}), "
                f"got ({self.source.kind} -> {self.target.kind})"
            )


@dataclass(frozen=True)
class CategoryFlags:
    overlapping: bool = False
    discontinuous: bool = False
    nested: bool = False
    implicit: bool = False

    def any(self) -> bool:
        return self.overlapping or self.discontinuous or self.nested or self.implicit


# ---------------------------------------------------------------------------
# Token matching helpers.
#
# Category rules and triplet ordering match element texts against the sentence
# at the level of "units": case-folded tokens with edge punctuation stripped,
# and individual characters for CJK text (which carries no useful whitespace).

def _is_cjk(ch: str) -> bool:
    return "㐀" <= ch <= "鿿" or "豈" <= ch <= "﫿"


def _norm(tok: str) -> str:
    folded = tok.casefold()
    stripped = folded.strip("".join(
        c for c in folded if unicodedata.category(c).startswith("P")
    ))
    return stripped or folded


def _units_of_token(tok: str) -> list[str]:
    if any(_is_cjk(c) for c in tok):
        return [c for c in tok.casefold() if not c.isspace()]
    return [_norm(tok)]


def match_units(tokens: Sequence[str]) -> list[str]:
    """Normalized match units for a token sequence."""
    units: list[str] = []
    for tok in tokens:
        units.extend(_units_of_token(tok))
    return units


def _sentence_units(sentence: Sentence) -> tuple[list[str], list[int]]:
    """Match units of a sentence plus each unit's source token index."""
    units: list[str] = []
    origin: list[int] = []
    for i, tok in enumerate(sentence.tokens):
        for u in _units_of_token(tok):
            units.append(u)
            origin.append(i)
    return units, origin


def _contiguous_at(needle: Sequence[str], hay: Sequence[str]) -> int | None:
    n = len(needle)
    if n == 0:
        return None
    for i in range(len(hay) - n + 1):
        if list(hay[i:i + n]) == list(needle):
            return i
    return None


def _subsequence_at(needle: Sequence[str], hay: Sequence[str]) -> list[int] | None:
    """Greedy leftmost gapped match; returns hay indices or None."""
    if not needle:
        return None
    hits: list[int] = []
    j = 0
    for i, u in enumerate(hay):
        if u == needle[j]:
            hits.append(i)
            j += 1
            if j == len(needle):
                return hits
    return None


_FAR = 10 ** 9


def _char_offset(sentence: Sentence, token_index: int) -> int:
    return sum(len(t) + 1 for t in sentence.tokens[:token_index])


def _element_offset(element: str, units: list[str], origin: list[int],
                    sentence: Sentence) -> int:
    """Character offset of the element's first matched span (or far away)."""
    needle = match_units(element.split())
    pos = _contiguous_at(needle, units)
    if pos is None:
        hits = _subsequence_at(needle, units)
        if hits is not None:
            pos = hits[0]
        elif needle:
            try:
                pos = units.index(needle[0])
            except ValueError:
                pos = None
    if pos is None:
        return _FAR
    return _char_offset(sentence, origin[pos])


def predicate_is_explicit(predicate: str, sentence: Sentence) -> bool:
    """True when the predicate tokens form a (possibly gapped) subsequence."""
    units, _ = _sentence_units(sentence)
    return _subsequence_at(match_units(predicate.split()), units) is not None


def predicate_occurs_contiguously(predicate: str, sentence: Sentence) -> bool:
    """True when the predicate occurs as one contiguous span (maskable)."""
    units, _ = _sentence_units(sentence)
    return _contiguous_at(match_units(predicate.split()), units) is not None


# ---------------------------------------------------------------------------
# Triplet ordering.

def order_triplets(inst: ExtractionInstance) -> ExtractionInstance:
    """Order triplets by predicate appearance; implicit triplets go last.

    Explicit triplets sort by the first character offset of the predicate's
    first span, with ties broken by subject offset then object offset.
    Implicit triplets follow all explicit ones, ordered by object offset.
    A final lexicographic key makes the order total and deterministic.
    """
    units, origin = _sentence_units(inst.sentence)

    def key(t: Triplet):
        s_off = _element_offset(t.subject, units, origin, inst.sentence)
        p_off = _element_offset(t.predicate, units, origin, inst.sentence)
        o_off = _element_offset(t.object, units, origin, inst.sentence)
        explicit = _subsequence_at(match_units(t.predicate.split()), units) is not None
        if explicit:
            return (0, p_off, s_off, o_off, t.astuple())
        return (1, o_off, s_off, 0, t.astuple())

    return replace(inst, triplets=tuple(sorted(inst.triplets, key=key)))


# ---------------------------------------------------------------------------
# Category classification.

def classify_triplet_categories(inst: ExtractionInstance) -> list[CategoryFlags]:
    """Per-triplet category flags.

    implicit       predicate tokens are not a gapped subsequence of the sentence
    discontinuous  some element appears only as >= 2 non-adjacent spans
    overlapping    shares an identical full element with another triplet
    nested         an element shares tokens with (or is contained in) a
                   different element of another triplet

    The pairwise structural flags (overlapping, nested) are computed among
    explicit triplets only; a triplet whose predicate is absent from the
    sentence is categorized by that absence, not by how its spans relate to
    other extractions.
    """
    units, _ = _sentence_units(inst.sentence)
    n = len(inst.triplets)

    elems: list[tuple[tuple[str, ...], ...]] = []
    for t in inst.triplets:
        elems.append(tuple(tuple(match_units(e.split())) for e in t.astuple()))

    implicit = [
        _subsequence_at(elems[i][1], units) is None for i in range(n)
    ]

    def is_discontinuous(needle: tuple[str, ...]) -> bool:
        if _subsequence_at(needle, units) is None:
            return False
        return _contiguous_at(needle, units) is None

    discontinuous = [any(is_discontinuous(e) for e in elems[i]) for i in range(n)]

    overlapping = [False] * n
    nested = [False] * n
    for i in range(n):
        if implicit[i]:
            continue
        for j in range(i + 1, n):
            if implicit[j]:
                continue
            for a in elems[i]:
                for b in elems[j]:
                    if a == b:
                        overlapping[i] = overlapping[j] = True
                    elif set(a) & set(b):
                        nested[i] = nested[j] = True

    return [
        CategoryFlags(overlapping=overlapping[i], discontinuous=discontinuous[i],
                      nested=nested[i], implicit=implicit[i])
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# Training pairs.

_PROMPT_ELEMENTS: dict[str, Callable[[Triplet], str]] = {
    "predicate": lambda t: t.predicate,
    "subject": lambda t: t.subject,
    "object": lambda t: t.object,
}


def prompt_sequence(inst: ExtractionInstance, prompt_element: str = "predicate") -> PredicateSequence:
    """The step-1 target sequence: one chosen element per ordered triplet."""
    try:
        pick = _PROMPT_ELEMENTS[prompt_element]
    except KeyError:
        raise DataError(f"unknown prompt element {prompt_element!r}") from None
    ordered = order_triplets(inst)
    return PredicateSequence.of(pick(t) for t in ordered.triplets)


def make_training_pairs(
    inst: ExtractionInstance, prompt_element: str = "predicate"
) -> list[TrainingPair]:
    """Emit the P, T and S pairs for one instance.

    The T source uses the gold step-1 sequence as its prompt (teacher-forced
    prompt); the S pair reuses the gold triplet sequence as its source and is
    skipped when the instance has no triplets.
    """
    ordered = order_triplets(inst)
    x_p = wrap_sentence(ordered.sentence)
    y_p = serialize_predicates(prompt_sequence(ordered, prompt_element))
    y_t = serialize_triplets(ordered.triplets)
    pairs = [
        TrainingPair("P", x_p, y_p),
        TrainingPair("T", build_triplet_input(y_p, x_p), y_t),
    ]
    if ordered.triplets:
        pairs.append(TrainingPair("S", y_t.with_kind("x_S"), x_p.with_kind("y_S")))
    return pairs


# ---------------------------------------------------------------------------
# Attribute masking (pseudo-implicit construction).

def mask_attributes(
    inst: ExtractionInstance,
    which: "Iterable[int] | Iterable[str]",
) -> ExtractionInstance:
    """Remove selected predicates from the sentence, keeping triplets intact.

    ``which`` selects triplets by index or by predicate string. Each selected
    predicate must occur contiguously in the sentence; its span is removed
    (repeatedly, if it occurs more than once) until the predicate is no longer
    recoverable, which turns the triplet into a pseudo-implicit sample.
    """
    which = list(which)
    if not which:
        return inst
    if all(isinstance(w, int) for w in which):
        indices = list(which)
    else:
        wanted = set(which)
        indices = [i for i, t in enumerate(inst.triplets) if t.predicate in wanted]
        missing = wanted - {inst.triplets[i].predicate for i in indices}
        if missing:
            raise DataError(f"no triplet with predicate(s) {sorted(missing)}")

    tokens = list(inst.sentence.tokens)
    for i in indices:
        if not 0 <= i < len(inst.triplets):
            raise DataError(f"triplet index {i} out of range")
        pred_units = match_units(inst.triplets[i].predicate.split())
        removed_any = False
        while True:
            units: list[str] = []
            origin: list[int] = []
            for ti, tok in enumerate(tokens):
                for u in _units_of_token(tok):
                    units.append(u)
                    origin.append(ti)
            pos = _contiguous_at(pred_units, units)
            if pos is None:
                if not removed_any:
                    raise NotExplicit(
                        f"predicate {inst.triplets[i].predicate!r} does not occur "
                        f"contiguously in sentence {inst.sentence.id!r}"
                    )
                if _subsequence_at(pred_units, units) is None:
                    break
                raise NotExplicit(
                    f"predicate {inst.triplets[i].predicate!r} remains recoverable "
                    f"after masking in sentence {inst.sentence.id!r}"
                )
            lo = origin[pos]
            hi = origin[pos + len(pred_units) - 1]
            del tokens[lo:hi + 1]
            removed_any = True

    if not tokens:
        raise DataError(f"masking left sentence {inst.sentence.id!r} empty")
    masked = Sentence.from_tokens(inst.sentence.id, tokens)
    return ExtractionInstance(sentence=masked, triplets=inst.triplets)


# ---------------------------------------------------------------------------
# Loaders.

def _build_instance(
    id: str, text: str, tokens: Sequence[str] | None,
    raw_triplets: Sequence[tuple[str, str, str]], line: int,
) -> ExtractionInstance:
    toks = tuple(tokens) if tokens else tuple(text.split())
    sentence = Sentence.from_tokens(id, toks)
    try:
        sentence.validate()
    except GrammarError as e:
        raise FormatError(str(e), line) from None
    triplets = []
    for s, p, o in raw_triplets:
        t = Triplet(str(s), str(p), str(o))
        try:
            t.validate()
        except GrammarError as e:
            raise FormatError(str(e), line) from None
        triplets.append(t)
    seen = set()
    for t in triplets:
        if t.astuple() in seen:
            raise FormatError(f"duplicate gold triplet {t.astuple()}", line)
        seen.add(t.astuple())
    return order_triplets(ExtractionInstance(sentence, tuple(triplets)))


def _load_canonical(lines: list[str]) -> list[ExtractionInstance]:
    out = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"invalid JSON: {e.msg}", i) from None
        if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
            raise FormatError("expected object with id/text/triplets", i)
        trips = obj.get("triplets", [])
        if not isinstance(trips, list):
            raise FormatError("triplets must be a list", i)
        raw = []
        for t in trips:
            try:
                raw.append((t["subject"], t["predicate"], t["object"]))
            except (TypeError, KeyError):
                raise FormatError(f"malformed triplet entry {t!r}", i) from None
        out.append(_build_instance(str(obj["id"]), str(obj["text"]),
                                   obj.get("tokens"), raw, i))
    return out


def _load_carb_tsv(lines: list[str]) -> list[ExtractionInstance]:
    """sentence<TAB>predicate<TAB>subject<TAB>object... gold rows, grouped by sentence."""
    by_sent: dict[str, tuple[int, list[tuple[str, str, str]]]] = {}
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cols = line.rstrip("\n").split("\t")
        if len(cols) < 4:
            raise FormatError(f"expected >= 4 tab-separated columns, got {len(cols)}", i)
        text, pred, subj = cols[0], cols[1], cols[2]
        obj = " ".join(c for c in cols[3:] if c.strip())
        if text not in by_sent:
            by_sent[text] = (i, [])
        by_sent[text][1].append((subj, pred, obj))
    out = []
    for text, (first_line, raw) in by_sent.items():
        out.append(_build_instance(f"L{first_line}", text, None, raw, first_line))
    return out


def _load_saoke_json(lines: list[str], warnings: list[str] | None) -> list[ExtractionInstance]:
    """One JSON object per line with ``natural`` text and ``logic`` fact list.

    Facts carry qualifiers beyond (subject, predicate, object); those are
    dropped and flagged in ``warnings`` rather than silently discarded.
    """
    out = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"invalid JSON: {e.msg}", i) from None
        if "natural" not in obj or "logic" not in obj:
            raise FormatError("expected object with natural/logic", i)
        raw = []
        for fact in obj["logic"]:
            try:
                subj, pred, objs = fact["subject"], fact["predicate"], fact["object"]
            except (TypeError, KeyError):
                raise FormatError(f"malformed fact {fact!r}", i) from None
            if isinstance(objs, str):
                objs = [objs]
            if not objs:
                raise FormatError("fact with no object", i)
            if len(objs) > 1 and warnings is not None:
                warnings.append(f"line {i}: dropped {len(objs) - 1} extra object argument(s)")
            extras = sorted(set(fact) - {"subject", "predicate", "object"})
            if extras and warnings is not None:
                warnings.append(f"line {i}: dropped qualifier field(s) {extras}")
            raw.append((subj, pred, objs[0]))
        out.append(_build_instance(str(obj.get("id", f"L{i}")), str(obj["natural"]),
                                   None, raw, i))
    return out


CORPUS_FORMATS = ("canonical-jsonl", "carb-tsv", "saoke-json")


def load_corpus(
    path: "str | Path",
    format: str = "canonical-jsonl",
    warnings: list[str] | None = None,
) -> list[ExtractionInstance]:
    """Load a corpus file into ordered, validated instances."""
    if format not in CORPUS_FORMATS:
        raise DataError(f"unknown corpus format {format!r}")
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if format == "canonical-jsonl":
        out = _load_canonical(lines)
    elif format == "carb-tsv":
        out = _load_carb_tsv(lines)
    else:
        out = _load_saoke_json(lines, warnings)
    if not out:
        raise EmptyCorpus(f"no instances in {path}")
    return out


def save_corpus(instances: Iterable[ExtractionInstance], path: "str | Path") -> None:
    """Write instances in the canonical JSONL format."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps({
                "id": inst.sentence.id,
                "text": inst.sentence.text,
                "tokens": list(inst.sentence.tokens),
                "triplets": [
                    {"subject": t.subject, "predicate": t.predicate, "object": t.object}
                    for t in inst.triplets
                ],
            }, ensure_ascii=False) + "\n")
