"""Scoring: token-level tuple F1 (one-to-one and multi-to-one recall), strict
matching, BLEU, Cohen's kappa, and grouped breakdowns.

Pair scores and assignment sums are computed in exact rational arithmetic so
that the optimal matching is unambiguous and reproducible; floats appear only
in reported values. The one-to-one matcher maximizes, lexicographically,
(sum of pair F1, sum of pair precision, sum of pair recall) over injective
gold-prediction mappings, which makes the reported scores unique and
invariant under reordering of either side even when several matchings tie on
F1 mass.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .data import CategoryFlags, ExtractionInstance, classify_triplet_categories
from .grammar import PredicateSequence, Sentence, Triplet

_ZERO = Fraction(0)
_MASK_CAP = 14


# ---------------------------------------------------------------------------
# Tokenization for scoring.

def _is_cjk(ch: str) -> bool:
    return "㐀" <= ch <= "鿿" or "豈" <= ch <= "﫿"


def score_tokens(text: str) -> list[str]:
    """Case-folded scoring tokens: characters for CJK text, words otherwise."""
    folded = text.casefold().strip()
    if any(_is_cjk(c) for c in folded):
        return [c for c in folded if not c.isspace()]
    return folded.split()


# ---------------------------------------------------------------------------
# Pair scores.

def _slot_counts(t: Triplet, slotting: str) -> list[Counter]:
    slots = [score_tokens(t.subject), score_tokens(t.predicate), score_tokens(t.object)]
    if slotting == "pooled":
        merged = Counter()
        for s in slots:
            merged.update(s)
        return [merged]
    if slotting != "per-slot":
        raise ValueError(f"unknown slotting {slotting!r}")
    return [Counter(s) for s in slots]


def _pair_fracs(gold: Triplet, pred: Triplet, slotting: str = "per-slot"
                ) -> tuple[Fraction, Fraction, Fraction]:
    """(precision, recall, f1) of one gold-prediction pair as exact rationals.

    Tokens match per slot (subject to subject, and so on) as multisets;
    precision pools matches over prediction tokens, recall over gold tokens.
    """
    gold_slots = _slot_counts(gold, slotting)
    pred_slots = _slot_counts(pred, slotting)
    matched = 0
    n_gold = 0
    n_pred = 0
    for g, p in zip(gold_slots, pred_slots):
        matched += sum((g & p).values())
        n_gold += sum(g.values())
        n_pred += sum(p.values())
    prec = Fraction(matched, n_pred) if n_pred else _ZERO
    rec = Fraction(matched, n_gold) if n_gold else _ZERO
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else _ZERO
    return prec, rec, f1


def pair_scores(gold: Triplet, pred: Triplet, slotting: str = "per-slot"
                ) -> tuple[float, float]:
    """Token-level (precision, recall) between one gold and one prediction."""
    prec, rec, _ = _pair_fracs(gold, pred, slotting)
    return float(prec), float(rec)


@dataclass
class MatchTable:
    """Gold-major matrix of (pair_precision, pair_recall, pair_f1)."""

    rows: list[list[tuple[float, float, float]]]

    @staticmethod
    def build(golds: Sequence[Triplet], preds: Sequence[Triplet],
              slotting: str = "per-slot") -> "MatchTable":
        return MatchTable([
            [tuple(map(float, _pair_fracs(g, p, slotting))) for p in preds]
            for g in golds
        ])


# ---------------------------------------------------------------------------
# Assignment.

_Weight = tuple[Fraction, Fraction, Fraction]  # (f1, precision, recall)


def _assign(weights: list[list[_Weight]]) -> list[tuple[int, int]]:
    """Injective row-column matching maximizing (sum f1, sum prec, sum rec).

    Zero-f1 pairs are never matched. Exact over the smaller side up to
    _MASK_CAP items via subset DP; beyond that a deterministic greedy
    fallback is used (far outside the sizes OIE sentences produce).
    """
    n_rows, n_cols = len(weights), len(weights[0]) if weights else 0
    if n_rows == 0 or n_cols == 0:
        return []

    # Keep the bitmask over the smaller side; sums (and thus scores) are
    # orientation independent.
    transposed = n_cols > n_rows
    if transposed:
        weights = [[weights[r][c] for r in range(n_rows)] for c in range(n_cols)]
        n_rows, n_cols = n_cols, n_rows

    if n_cols > _MASK_CAP:
        pairs = sorted(
            ((w[0], w[1], w[2], -r, -c) for r, row in enumerate(weights)
             for c, w in enumerate(row) if w[0] > 0),
            reverse=True,
        )
        used_r: set[int] = set()
        used_c: set[int] = set()
        chosen = []
        for f1, _, _, nr, nc in pairs:
            r, c = -nr, -nc
            if r not in used_r and c not in used_c:
                chosen.append((r, c))
                used_r.add(r)
                used_c.add(c)
        return [(c, r) for r, c in chosen] if transposed else chosen

    zero = (_ZERO, _ZERO, _ZERO)
    # dp: mask of used columns -> (score tuple, chosen pairs)
    dp: dict[int, tuple[_Weight, tuple[tuple[int, int], ...]]] = {0: (zero, ())}
    for r in range(n_rows):
        row = weights[r]
        nxt = dict(dp)
        for mask, (score, pairs) in dp.items():
            for c in range(n_cols):
                if mask >> c & 1 or row[c][0] <= 0:
                    continue
                cand_score = (score[0] + row[c][0], score[1] + row[c][1],
                              score[2] + row[c][2])
                key = mask | 1 << c
                cur = nxt.get(key)
                if cur is None or cand_score > cur[0]:
                    nxt[key] = (cand_score, pairs + ((r, c),))
        dp = nxt
    best_score, best_pairs = max(dp.values(), key=lambda v: v[0])
    chosen = list(best_pairs)
    return [(c, r) for r, c in chosen] if transposed else chosen


# ---------------------------------------------------------------------------
# Sentence-level sums and reports.

@dataclass
class SentenceScore:
    """Mergeable per-sentence scoring sums."""

    sum_prec: Fraction = _ZERO
    sum_rec: Fraction = _ZERO
    sum_rec_multi: Fraction = _ZERO
    n_gold: int = 0
    n_pred: int = 0
    n_matched: int = 0

    def merge(self, other: "SentenceScore") -> "SentenceScore":
        return SentenceScore(
            self.sum_prec + other.sum_prec,
            self.sum_rec + other.sum_rec,
            self.sum_rec_multi + other.sum_rec_multi,
            self.n_gold + other.n_gold,
            self.n_pred + other.n_pred,
            self.n_matched + other.n_matched,
        )


@dataclass
class ScoreReport:
    precision: float
    recall: float
    f1: float
    n_gold: int = 0
    n_pred: int = 0

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "n_gold": self.n_gold, "n_pred": self.n_pred}


def _harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _report(sums: SentenceScore, recall_mode: str) -> ScoreReport:
    if sums.n_gold == 0 and sums.n_pred == 0:
        return ScoreReport(1.0, 1.0, 1.0, 0, 0)
    prec = float(sums.sum_prec / sums.n_pred) if sums.n_pred else 0.0
    rec_mass = sums.sum_rec_multi if recall_mode == "multi" else sums.sum_rec
    rec = float(rec_mass / sums.n_gold) if sums.n_gold else 0.0
    return ScoreReport(prec, rec, _harmonic(prec, rec), sums.n_gold, sums.n_pred)


def score_sentence(golds: Sequence[Triplet], preds: Sequence[Triplet],
                   slotting: str = "per-slot") -> SentenceScore:
    """Match one sentence's predictions against its golds and return the sums."""
    pair = [[_pair_fracs(g, p, slotting) for p in preds] for g in golds]
    weights = [[(f1, pr, rc) for pr, rc, f1 in row] for row in pair]
    matched = _assign(weights)
    sum_prec = sum((pair[g][p][0] for g, p in matched), _ZERO)
    sum_rec = sum((pair[g][p][1] for g, p in matched), _ZERO)
    sum_rec_multi = sum(
        (max((pair[g][p][1] for p in range(len(preds))), default=_ZERO)
         for g in range(len(golds))),
        _ZERO,
    )
    return SentenceScore(sum_prec, sum_rec, sum_rec_multi,
                         len(golds), len(preds), len(matched))


def f1_one_to_one(golds: Sequence[Triplet], preds: Sequence[Triplet],
                  slotting: str = "per-slot") -> ScoreReport:
    """Token-level F1 where every gold and prediction can match at most once."""
    return _report(score_sentence(golds, preds, slotting), "one")


def f1_multi_to_one(golds: Sequence[Triplet], preds: Sequence[Triplet],
                    slotting: str = "per-slot") -> ScoreReport:
    """Variant whose recall lets several golds share their best prediction."""
    return _report(score_sentence(golds, preds, slotting), "multi")


def corpus_report(items: Iterable[tuple[Sequence[Triplet], Sequence[Triplet]]],
                  recall_mode: str = "one", slotting: str = "per-slot") -> ScoreReport:
    """Micro-averaged report over (golds, preds) pairs."""
    total = SentenceScore()
    for golds, preds in items:
        total = total.merge(score_sentence(golds, preds, slotting))
    return _report(total, recall_mode)


def _single_slot(p: str) -> Triplet:
    # Single-slot tuples ride through the triplet machinery; the empty
    # subject/object slots contribute no tokens.
    return Triplet(subject="", predicate=p, object="")


def predicate_f1(gold_preds: "PredicateSequence | Sequence[str]",
                 pred_preds: "PredicateSequence | Sequence[str]",
                 mapping: str = "one_to_one") -> ScoreReport:
    """Tuple F1 applied to predicates as single-slot tuples."""
    golds = [_single_slot(p) for p in (
        gold_preds.predicates if isinstance(gold_preds, PredicateSequence) else gold_preds)]
    preds = [_single_slot(p) for p in (
        pred_preds.predicates if isinstance(pred_preds, PredicateSequence) else pred_preds)]
    if mapping == "one_to_one":
        return f1_one_to_one(golds, preds)
    if mapping == "multi_to_one":
        return f1_multi_to_one(golds, preds)
    raise ValueError(f"unknown mapping {mapping!r}")


def predicate_corpus_report(
    items: Iterable[tuple[Sequence[str], Sequence[str]]], recall_mode: str = "one"
) -> ScoreReport:
    """Micro-averaged predicate F1 over (gold predicates, predicted predicates)."""
    return corpus_report(
        (([_single_slot(p) for p in golds], [_single_slot(p) for p in preds])
         for golds, preds in items),
        recall_mode,
    )


# ---------------------------------------------------------------------------
# Strict matching.

def token_dice(a: str, b: str) -> float:
    """Dice coefficient over scoring-token multisets."""
    ca, cb = Counter(score_tokens(a)), Counter(score_tokens(b))
    na, nb = sum(ca.values()), sum(cb.values())
    if na + nb == 0:
        return 0.0
    return 2 * sum((ca & cb).values()) / (na + nb)


def default_predicate_sim(a: str, b: str) -> float:
    na, nb = " ".join(score_tokens(a)), " ".join(score_tokens(b))
    return 1.0 if na == nb else token_dice(a, b)


def strict_match_count(
    golds: Sequence[Triplet], preds: Sequence[Triplet],
    sim: Callable[[str, str], float] | None = None,
    threshold: float = 0.7,
) -> int:
    """Size of the best one-to-one full-match assignment."""
    sim = sim or default_predicate_sim

    def norm(s: str) -> str:
        return s.casefold().strip()

    one = (Fraction(1), Fraction(1), Fraction(1))
    zero = (_ZERO, _ZERO, _ZERO)
    weights = [
        [one if (norm(g.subject) == norm(p.subject)
                 and norm(g.object) == norm(p.object)
                 and sim(p.predicate, g.predicate) >= threshold) else zero
         for p in preds]
        for g in golds
    ]
    return len(_assign(weights))


def strict_match_score(
    golds: Sequence[Triplet], preds: Sequence[Triplet],
    sim: Callable[[str, str], float] | None = None,
    threshold: float = 0.7,
) -> ScoreReport:
    """Full-match scoring: subject and object must be string-equal after
    case-fold/trim, predicates need sim >= threshold; one-to-one assignment
    maximizing the number of matches."""
    if not golds and not preds:
        return ScoreReport(1.0, 1.0, 1.0, 0, 0)
    matched = strict_match_count(golds, preds, sim, threshold)
    prec = matched / len(preds) if preds else 0.0
    rec = matched / len(golds) if golds else 0.0
    return ScoreReport(prec, rec, _harmonic(prec, rec), len(golds), len(preds))


def strict_corpus_report(
    items: Iterable[tuple[Sequence[Triplet], Sequence[Triplet]]],
    sim: Callable[[str, str], float] | None = None,
    threshold: float = 0.7,
) -> ScoreReport:
    n_gold = n_pred = n_match = 0
    for golds, preds in items:
        n_gold += len(golds)
        n_pred += len(preds)
        n_match += strict_match_count(golds, preds, sim, threshold)
    if n_gold == 0 and n_pred == 0:
        return ScoreReport(1.0, 1.0, 1.0, 0, 0)
    prec = n_match / n_pred if n_pred else 0.0
    rec = n_match / n_gold if n_gold else 0.0
    return ScoreReport(prec, rec, _harmonic(prec, rec), n_gold, n_pred)


# ---------------------------------------------------------------------------
# BLEU.

def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: "Sentence | Sequence[str]",
         references: Sequence["Sentence | Sequence[str]"],
         max_order: int = 4) -> float:
    """BLEU with uniform weights up to 4-grams and add-one smoothing on zero
    higher-order counts. Zero unigram overlap (or an empty candidate) clamps
    to 0; orders longer than the candidate contribute vacuous precision 1.
    """
    cand = list(candidate.tokens if isinstance(candidate, Sentence) else candidate)
    refs = [list(r.tokens if isinstance(r, Sentence) else r) for r in references]
    if not refs:
        raise ValueError("bleu needs at least one reference")
    if not cand:
        return 0.0

    logs: list[float] = []
    for n in range(1, max_order + 1):
        total = len(cand) - n + 1
        if total <= 0:
            logs.append(0.0)  # vacuous order
            continue
        counts = _ngrams(cand, n)
        max_ref: Counter = Counter()
        for r in refs:
            for gram, c in _ngrams(r, n).items():
                if c > max_ref[gram]:
                    max_ref[gram] = c
        clipped = sum(min(c, max_ref[g]) for g, c in counts.items())
        if clipped == 0:
            if n == 1:
                return 0.0
            logs.append(math.log(1.0 / (total + 1)))
        else:
            logs.append(math.log(clipped / total))

    c = len(cand)
    r = min((len(ref) for ref in refs), key=lambda rl: (abs(rl - c), rl))
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return bp * math.exp(sum(l / max_order for l in logs))


# ---------------------------------------------------------------------------
# Cohen's kappa.

def cohens_kappa(a: Sequence, b: Sequence) -> float:
    """Agreement between two aligned label sequences."""
    if len(a) != len(b):
        raise ValueError("label sequences differ in length")
    n = len(a)
    if n == 0:
        raise ValueError("kappa over zero items is undefined")
    p_o = Fraction(sum(x == y for x, y in zip(a, b)), n)
    ca, cb = Counter(a), Counter(b)
    p_e = sum((Fraction(ca[l], n) * Fraction(cb.get(l, 0), n) for l in ca), Fraction(0))
    if p_e == 1:
        return 1.0 if list(a) == list(b) else 0.0
    return float((p_o - p_e) / (1 - p_e))


# ---------------------------------------------------------------------------
# Grouped breakdowns.

def _both_reports(items: list[tuple[Sequence[Triplet], Sequence[Triplet]]]) -> dict:
    return {
        "one_to_one": corpus_report(items, "one").as_dict(),
        "multi_to_one": corpus_report(items, "multi").as_dict(),
        "n_sentences": len(items),
    }


def _pred_flags(inst: ExtractionInstance, preds: Sequence[Triplet]) -> list[CategoryFlags]:
    if not preds:
        return []
    shadow = ExtractionInstance(inst.sentence, tuple(preds))
    return classify_triplet_categories(shadow)


def grouped_report(
    instances: Sequence[ExtractionInstance],
    predictions: Mapping[str, Sequence[Triplet]],
    group_by: str = "m",
    slotting: str = "per-slot",
) -> dict[str, dict]:
    """Partitioned reports: by gold triplet count m (1, 2, 3, >=4), by
    category flag, or the implicit-only slice.

    Category slices filter golds by their flags and predictions by the same
    classification rules applied to the predicted set.
    """
    pairs = [(inst, list(predictions.get(inst.id, []))) for inst in instances]

    if group_by == "m":
        buckets: dict[str, list] = {"m=1": [], "m=2": [], "m=3": [], "m>=4": []}
        for inst, preds in pairs:
            m = len(inst.triplets)
            key = f"m={m}" if m <= 3 else "m>=4"
            if m == 0:
                continue
            buckets[key].append((inst.triplets, preds))
        return {k: _both_reports(v) for k, v in buckets.items()}

    if group_by in ("category", "implicit"):
        cats = ("overlapping", "discontinuous", "nested", "implicit") \
            if group_by == "category" else ("implicit",)
        out = {}
        for cat in cats:
            items = []
            for inst, preds in pairs:
                g_flags = classify_triplet_categories(inst)
                p_flags = _pred_flags(inst, preds)
                g_slice = [t for t, f in zip(inst.triplets, g_flags) if getattr(f, cat)]
                p_slice = [t for t, f in zip(preds, p_flags) if getattr(f, cat)]
                if g_slice or p_slice:
                    items.append((g_slice, p_slice))
            out[cat] = _both_reports(items)
        return out

    raise ValueError(f"unknown group_by {group_by!r}")


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation coefficient; 0.0 when either side is constant."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("pearson needs two equal-length samples of size >= 2")
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = sum((x - mx) ** 2 for x in xs)
    vy = sum((y - my) ** 2 for y in ys)
    if vx == 0 or vy == 0:
        return 0.0
    return cov / math.sqrt(vx * vy)
