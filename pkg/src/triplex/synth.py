"""Seeded synthetic corpus generator for desk-scale verification.

Sentences are assembled from templated clauses, each manufacturing one
category of complicated triplet:

    simple      E serves V                      plain clause, no flags
    overlap     E praised V1 and admires V2     two triplets sharing a subject
    nested      A was built in V1 and B was built by V2
                                                predicates sharing tokens
    disc        E turned V off                  split phrasal predicate
    implicit    ... in C1 , C2   /  C1 ( C2 )   predicate absent from sentence

Every sentence carries at most one special feature; remaining triplet slots
are filled with simple clauses. Pools are sampled without replacement inside
a sentence and are token-disjoint across roles, so the intended flags are the
only ones the classifier can find. The generator re-checks each instance with
the classifier and refuses to emit anything inconsistent.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .data import (
    CategoryFlags,
    ExtractionInstance,
    InfeasibleConfig,
    classify_triplet_categories,
    order_triplets,
)
from .grammar import Sentence, Triplet

DEFAULT_ENTITIES = (
    "Shea", "Marlow", "Corbin", "Ines", "Talia", "Bram", "Odette", "Ravi",
    "Nadia", "Pavel", "Greta", "Hollis", "Imre", "Juno", "Kirra", "Lorcan",
    "Mira", "Nolan", "Opal", "Petra", "Quinn", "Rosa", "Soren", "Tova",
    "Ulric", "Vera", "Wren", "Xenia", "Yusuf", "Zelda", "Ansel", "Briar",
    "Cleo", "Dorian", "Elif", "Farid", "Gwen", "Haruki", "Iris", "Jonas",
    "Kaia", "Leif", "Maren", "Nico", "Oren", "Pia", "Rhett", "Sable",
)

DEFAULT_RELATIONS = (
    "serves", "praised", "owns", "admires", "sells", "visited", "manages",
    "hired", "painted", "repaired", "cleaned", "guards", "rents", "designed",
)

DEFAULT_VALUES = (
    "bread", "coffee", "paintings", "tools", "lanterns", "furniture",
    "books", "flowers", "machines", "tickets", "boats", "candles",
    "maps", "clocks", "carpets", "mirrors", "violins", "kettles",
    "saddles", "ladders", "ropes", "barrels", "quilts", "engines",
)

_NESTED_STEMS = ("built", "opened", "founded", "renovated", "restored", "acquired")
_PHRASAL = (("turned", "off"), ("switched", "on"), ("shut", "down"), ("scaled", "up"))
_STRUCTURAL = ("and", ".", ",", "(", ")", "in", "was", "by")
_IMPLICIT_TAIL_PRED = "is in"
_IMPLICIT_PAREN_PRED = "is part of"

CATEGORIES = ("overlapping", "discontinuous", "nested", "implicit")


@dataclass(frozen=True)
class SynthConfig:
    """Configuration for generate_synthetic. Proportions are per-category
    flagged-triplet targets relative to corpus size."""

    seed: int = 0
    size: int = 1000
    p_overlapping: float = 0.10
    p_discontinuous: float = 0.10
    p_nested: float = 0.10
    p_implicit: float = 0.33
    m_max: int = 4
    entities: tuple[str, ...] = DEFAULT_ENTITIES
    relations: tuple[str, ...] = DEFAULT_RELATIONS
    values: tuple[str, ...] = DEFAULT_VALUES

    def proportions(self) -> dict[str, float]:
        return {
            "overlapping": self.p_overlapping,
            "discontinuous": self.p_discontinuous,
            "nested": self.p_nested,
            "implicit": self.p_implicit,
        }


def _validate(cfg: SynthConfig) -> None:
    props = cfg.proportions()
    for name, p in props.items():
        if not 0.0 <= p <= 1.0:
            raise InfeasibleConfig(f"proportion {name}={p} outside [0, 1]")
    if sum(props.values()) > 1.0 + 1e-9:
        raise InfeasibleConfig(f"proportions sum to {sum(props.values()):.3f} > 1")
    if cfg.m_max < 1:
        raise InfeasibleConfig("m_max must be >= 1")
    if cfg.m_max < 2 and (cfg.p_overlapping > 0 or cfg.p_nested > 0):
        raise InfeasibleConfig("overlapping/nested clauses need m_max >= 2")
    if cfg.size < 0:
        raise InfeasibleConfig("size must be >= 0")

    if len(set(cfg.entities)) < cfg.m_max + 2:
        raise InfeasibleConfig(f"need at least {cfg.m_max + 2} distinct entities")
    if len(set(cfg.values)) < cfg.m_max:
        raise InfeasibleConfig(f"need at least {cfg.m_max} distinct values")
    if len(set(cfg.relations)) < cfg.m_max:
        raise InfeasibleConfig(f"need at least {cfg.m_max} distinct relations")

    template_tokens = set(_STRUCTURAL) | set(_NESTED_STEMS) | {
        t for pair in _PHRASAL for t in pair
    } | set(_IMPLICIT_TAIL_PRED.split()) | set(_IMPLICIT_PAREN_PRED.split())
    pools = {"entities": cfg.entities, "relations": cfg.relations, "values": cfg.values}
    seen: dict[str, str] = {}
    for role, pool in pools.items():
        for tok in pool:
            if not tok or " " in tok:
                raise InfeasibleConfig(f"{role} pool entry {tok!r} must be one token")
            low = tok.casefold()
            if low in template_tokens:
                raise InfeasibleConfig(f"{role} pool entry {tok!r} collides with a template token")
            if low in seen and seen[low] != role:
                raise InfeasibleConfig(f"token {tok!r} appears in both {seen[low]} and {role}")
            seen[low] = role


@dataclass
class _Draw:
    """Without-replacement sampling scoped to one sentence."""

    rng: random.Random
    entities: list[str]
    relations: list[str]
    values: list[str]

    @staticmethod
    def for_sentence(rng: random.Random, cfg: SynthConfig) -> "_Draw":
        return _Draw(rng, list(cfg.entities), list(cfg.relations), list(cfg.values))

    def _take(self, pool: list[str]) -> str:
        return pool.pop(self.rng.randrange(len(pool)))

    def entity(self) -> str:
        return self._take(self.entities)

    def relation(self) -> str:
        return self._take(self.relations)

    def value(self) -> str:
        return self._take(self.values)


def _clause_simple(d: _Draw) -> tuple[list[str], list[tuple[Triplet, CategoryFlags]]]:
    e, r, v = d.entity(), d.relation(), d.value()
    return [e, r, v], [(Triplet(e, r, v), CategoryFlags())]


def _clause_overlap(d: _Draw) -> tuple[list[str], list[tuple[Triplet, CategoryFlags]]]:
    e = d.entity()
    r1, r2 = d.relation(), d.relation()
    v1, v2 = d.value(), d.value()
    flags = CategoryFlags(overlapping=True)
    return (
        [e, r1, v1, "and", r2, v2],
        [(Triplet(e, r1, v1), flags), (Triplet(e, r2, v2), flags)],
    )


def _clause_nested(d: _Draw) -> tuple[list[str], list[tuple[Triplet, CategoryFlags]]]:
    a, b = d.entity(), d.entity()
    stem = d.rng.choice(_NESTED_STEMS)
    v1, v2 = d.value(), d.value()
    flags = CategoryFlags(nested=True)
    return (
        [a, "was", stem, "in", v1, "and", b, "was", stem, "by", v2],
        [(Triplet(a, f"was {stem} in", v1), flags),
         (Triplet(b, f"was {stem} by", v2), flags)],
    )


def _clause_disc(d: _Draw) -> tuple[list[str], list[tuple[Triplet, CategoryFlags]]]:
    e, v = d.entity(), d.value()
    p1, p2 = d.rng.choice(_PHRASAL)
    return (
        [e, p1, v, p2],
        [(Triplet(e, f"{p1} {p2}", v), CategoryFlags(discontinuous=True))],
    )


def _clause_paren_implicit(d: _Draw) -> tuple[list[str], list[tuple[Triplet, CategoryFlags]]]:
    c1, c2 = d.entity(), d.entity()
    return (
        [c1, "(", c2, ")"],
        [(Triplet(c1, _IMPLICIT_PAREN_PRED, c2), CategoryFlags(implicit=True))],
    )


def _tail_implicit(d: _Draw) -> tuple[list[str], list[tuple[Triplet, CategoryFlags]]]:
    c1, c2 = d.entity(), d.entity()
    return (
        ["in", c1, ",", c2],
        [(Triplet(c1, _IMPLICIT_TAIL_PRED, c2), CategoryFlags(implicit=True))],
    )


def _build_sentence(
    idx: int, feature: str, rng: random.Random, cfg: SynthConfig
) -> tuple[ExtractionInstance, dict[tuple[str, str, str], CategoryFlags]]:
    d = _Draw.for_sentence(rng, cfg)
    min_m = {"none": 1, "overlap": 2, "nested": 2, "disc": 1, "implicit": 1}[feature]
    m = rng.randint(min_m, cfg.m_max)

    clauses: list[list[str]] = []
    entries: list[tuple[Triplet, CategoryFlags]] = []
    tail: list[str] = []

    if feature == "overlap":
        toks, ts = _clause_overlap(d)
        clauses.append(toks)
        entries.extend(ts)
    elif feature == "nested":
        toks, ts = _clause_nested(d)
        clauses.append(toks)
        entries.extend(ts)
    elif feature == "disc":
        toks, ts = _clause_disc(d)
        clauses.append(toks)
        entries.extend(ts)
    elif feature == "implicit":
        use_tail = m >= 2 and rng.random() < 0.5
        if use_tail:
            tail, ts = _tail_implicit(d)
            entries.extend(ts)
        else:
            toks, ts = _clause_paren_implicit(d)
            clauses.append(toks)
            entries.extend(ts)

    while len(entries) < m:
        toks, ts = _clause_simple(d)
        clauses.append(toks)
        entries.extend(ts)

    rng.shuffle(clauses)
    tokens: list[str] = []
    for i, clause in enumerate(clauses):
        if i:
            tokens.append("and")
        tokens.extend(clause)
    tokens.extend(tail)
    tokens.append(".")

    sentence = Sentence.from_tokens(f"synth-{idx:05d}", tokens)
    inst = order_triplets(ExtractionInstance(sentence, tuple(t for t, _ in entries)))
    intended = {t.astuple(): f for t, f in entries}
    return inst, intended


def generate_synthetic_labeled(
    cfg: SynthConfig,
) -> tuple[list[ExtractionInstance], list[list[CategoryFlags]]]:
    """Generate instances plus the generator's intended per-triplet flags."""
    _validate(cfg)
    rng = random.Random(cfg.seed)
    if cfg.size == 0:
        return [], []

    quotas = {
        "overlap": round(cfg.p_overlapping * cfg.size / 2),
        "nested": round(cfg.p_nested * cfg.size / 2),
        "disc": round(cfg.p_discontinuous * cfg.size),
        "implicit": round(cfg.p_implicit * cfg.size),
    }
    featured = sum(quotas.values())
    if featured > cfg.size:
        raise InfeasibleConfig(
            f"category quotas need {featured} sentences but size is {cfg.size}"
        )
    plan = (
        ["overlap"] * quotas["overlap"]
        + ["nested"] * quotas["nested"]
        + ["disc"] * quotas["disc"]
        + ["implicit"] * quotas["implicit"]
        + ["none"] * (cfg.size - featured)
    )
    rng.shuffle(plan)

    instances: list[ExtractionInstance] = []
    labels: list[list[CategoryFlags]] = []
    for idx, feature in enumerate(plan):
        inst, intended = _build_sentence(idx, feature, rng, cfg)
        got = classify_triplet_categories(inst)
        want = [intended[t.astuple()] for t in inst.triplets]
        if got != want:
            raise RuntimeError(
                f"generator produced flags the classifier disputes for {inst.id}: "
                f"intended {want}, classified {got}"
            )
        instances.append(inst)
        labels.append(want)
    return instances, labels


def generate_synthetic(cfg: SynthConfig) -> list[ExtractionInstance]:
    """Deterministic synthetic corpus hitting the configured category quotas."""
    instances, _ = generate_synthetic_labeled(cfg)
    return instances
