"""Iterative annotation simulation: a model-in-the-loop bootstrap that turns
explicit samples into pseudo-implicit training data, proposes implicit
triplets on unannotated text, and routes them to an annotator oracle.

The oracle stands in for human annotators so the loop runs at desk scale; its
noise rate makes two-oracle agreement (Cohen's kappa) a meaningful statistic.
Also here: the POI triplet normalization used to turn extraction output into
ranked labels.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

from .data import (
    ExtractionInstance,
    mask_attributes,
    predicate_is_explicit,
    predicate_occurs_contiguously,
)
from .grammar import Sentence, Triplet
from .metrics import cohens_kappa, default_predicate_sim


class AnnotateError(ValueError):
    pass


def _stable_unit(seed: int, *parts: str) -> float:
    """Deterministic hash-based uniform draw in [0, 1)."""
    h = hashlib.sha256(":".join((str(seed), *parts)).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") / 2 ** 64


def pseudo_implicit(inst: ExtractionInstance) -> ExtractionInstance | None:
    """Mask every contiguously-occurring predicate out of the sentence.

    Returns None when nothing is maskable. The copy gets a derived id so the
    pseudo pool stays id-disjoint from its source pool.
    """
    maskable = [
        i for i, t in enumerate(inst.triplets)
        if predicate_occurs_contiguously(t.predicate, inst.sentence)
    ]
    if not maskable:
        return None
    masked = mask_attributes(inst, maskable)
    sent = Sentence.from_tokens(f"ps::{inst.sentence.id}", masked.sentence.tokens)
    return ExtractionInstance(sent, masked.triplets)


@dataclass
class AnnotationPools:
    """The four sample pools plus the planned round count."""

    d_ex: list[ExtractionInstance] = field(default_factory=list)
    d_un: list[ExtractionInstance] = field(default_factory=list)
    d_ps: list[ExtractionInstance] = field(default_factory=list)
    d_im: list[ExtractionInstance] = field(default_factory=list)
    rounds: int = 1

    @staticmethod
    def initialize(d_ex: Sequence[ExtractionInstance],
                   d_un: Sequence[ExtractionInstance], rounds: int
                   ) -> "AnnotationPools":
        d_ps = [p for p in (pseudo_implicit(i) for i in d_ex) if p is not None]
        pools = AnnotationPools(list(d_ex), list(d_un), d_ps, [], rounds)
        pools.validate()
        return pools

    def validate(self) -> None:
        if self.rounds < 0:
            raise AnnotateError("rounds must be >= 0")
        seen: dict[str, str] = {}
        for name, pool in (("d_ex", self.d_ex), ("d_un", self.d_un),
                           ("d_ps", self.d_ps), ("d_im", self.d_im)):
            for inst in pool:
                if inst.id in seen:
                    raise AnnotateError(
                        f"sentence id {inst.id!r} appears in both {seen[inst.id]} and {name}")
                seen[inst.id] = name


@dataclass
class AnnotatorOracle:
    """Simulated annotator: accepts a proposal iff it matches the hidden gold,
    with an optional deterministic noise rate flipping decisions."""

    gold: Mapping[str, frozenset]
    noise: float = 0.0
    seed: int = 0

    @staticmethod
    def from_instances(instances: Sequence[ExtractionInstance],
                       noise: float = 0.0, seed: int = 0) -> "AnnotatorOracle":
        gold = {
            inst.id: frozenset(t.astuple() for t in inst.triplets)
            for inst in instances
        }
        return AnnotatorOracle(gold, noise, seed)

    def decide(self, sentence_id: str, proposal: Triplet) -> bool:
        correct = proposal.astuple() in self.gold.get(sentence_id, frozenset())
        if self.noise > 0:
            draw = _stable_unit(self.seed, sentence_id, *proposal.astuple())
            if draw < self.noise:
                return not correct
        return correct


class Trainer(Protocol):
    """Anything exposing train + extract can drive the loop."""

    def train(self, instances: Sequence[ExtractionInstance]) -> object: ...

    def extract(self, model: object, sentences: Sequence[Sentence]
                ) -> list[list[Triplet]]: ...


@dataclass
class ScriptedTrainer:
    """Desk-scale stand-in for a real model: proposes the reference triplets
    for a seeded fraction of sentences and a corrupted copy for the rest."""

    reference: Mapping[str, Sequence[Triplet]]
    accuracy: float = 0.7
    seed: int = 0

    def train(self, instances: Sequence[ExtractionInstance]) -> object:
        return {"trained_on": len(instances)}

    def extract(self, model: object, sentences: Sequence[Sentence]
                ) -> list[list[Triplet]]:
        out: list[list[Triplet]] = []
        for s in sentences:
            ref = list(self.reference.get(s.id, []))
            if not ref:
                out.append([])
                continue
            if _stable_unit(self.seed, "acc", s.id) < self.accuracy:
                out.append(ref)
            else:
                out.append([replace(t, object=t.object + " ???") for t in ref])
        return out


@dataclass
class ModelTrainer:
    """Adapter running the real network inside the loop."""

    config: object
    steps: int = 300
    inference_config: object | None = None

    def train(self, instances: Sequence[ExtractionInstance]) -> object:
        from .inference import InferenceConfig
        from .model import DualModel, Vocab, train as train_model
        model = DualModel(self.config, Vocab.build_from_instances(instances))
        train_model(model, instances, max_steps=self.steps)
        if self.inference_config is None:
            self.inference_config = InferenceConfig(decoding="greedy")
        return model

    def extract(self, model: object, sentences: Sequence[Sentence]
                ) -> list[list[Triplet]]:
        from .inference import extract_corpus
        preds = extract_corpus(model, sentences, self.inference_config)
        return [p.triplets for p in preds]


def iterative_annotation(
    pools: AnnotationPools,
    trainer: Trainer,
    oracle: AnnotatorOracle,
    requeue_rejected: bool = True,
) -> tuple[list[ExtractionInstance], list[dict]]:
    """Run the loop for pools.rounds rounds.

    Each round trains on the pseudo-implicit pool, predicts on unannotated
    sentences, routes implicit-predicate proposals to the oracle, moves
    accepted sentences into the implicit pool, and feeds them back into the
    training pool. Rejected proposals stay in the unannotated pool by default
    (requeue_rejected=False drops their sentences instead).
    """
    pools.validate()
    stats: list[dict] = []
    for k in range(1, pools.rounds + 1):
        model = trainer.train(pools.d_ps)
        sentences = [inst.sentence for inst in pools.d_un]
        proposals = trainer.extract(model, sentences)

        accepted_ids: set[str] = set()
        rejected_ids: set[str] = set()
        n_proposed = n_implicit = n_accepted = 0
        new_implicit: list[ExtractionInstance] = []
        for inst, proposed in zip(pools.d_un, proposals):
            n_proposed += len(proposed)
            kept: list[Triplet] = []
            routed = False
            for t in proposed:
                if predicate_is_explicit(t.predicate, inst.sentence):
                    continue
                n_implicit += 1
                routed = True
                if oracle.decide(inst.id, t):
                    kept.append(t)
            if kept:
                n_accepted += len(kept)
                accepted_ids.add(inst.id)
                new_implicit.append(ExtractionInstance(inst.sentence, tuple(kept)))
            elif routed:
                rejected_ids.add(inst.id)

        pools.d_im.extend(new_implicit)
        pools.d_un = [i for i in pools.d_un if i.id not in accepted_ids]
        if not requeue_rejected:
            pools.d_un = [i for i in pools.d_un if i.id not in rejected_ids]
        for inst in new_implicit:
            sent = Sentence.from_tokens(f"ps::{inst.id}", inst.sentence.tokens)
            pools.d_ps.append(ExtractionInstance(sent, inst.triplets))
        pools.validate()

        stats.append({
            "round": k,
            "trained_on": len(pools.d_ps) - len(new_implicit),
            "proposed": n_proposed,
            "implicit_proposals": n_implicit,
            "accepted": n_accepted,
            "accepted_sentences": len(new_implicit),
            "d_un": len(pools.d_un),
            "d_ps": len(pools.d_ps),
            "d_im": len(pools.d_im),
        })
    return pools.d_im, stats


def agreement(decisions_a: Sequence, decisions_b: Sequence) -> float:
    """Cohen's kappa over two annotators' aligned accept/reject decisions."""
    return cohens_kappa(decisions_a, decisions_b)


# ---------------------------------------------------------------------------
# POI label normalization.

@dataclass
class PoiLabel:
    label: str
    count: int
    representative: Triplet
    members: list[Triplet] = field(default_factory=list)


def _has_cjk(s: str) -> bool:
    return any("㐀" <= c <= "鿿" or "豈" <= c <= "﫿" for c in s)


def _join_label(predicate: str, obj: str) -> str:
    sep = "" if _has_cjk(predicate) and _has_cjk(obj) else " "
    return f"{predicate}{sep}{obj}"


def normalize_poi_triplets(
    collection: Sequence[Triplet],
    sim3: Callable[[str, str], float] | None = None,
    thresholds: tuple[float, float, float] = (0.7, 0.7, 0.7),
    linkage: str = "single",
) -> list[PoiLabel]:
    """Cluster same-fact triplets and rank cluster labels by frequency.

    Two triplets express the same fact when all three per-element similarities
    are over the thresholds. Clusters form by single-link closure of that
    relation (linkage="star" instead groups items around the most frequent
    member). Each cluster is labeled by its most frequent member (ties by
    first occurrence), concatenating predicate and object.
    """
    if linkage not in ("single", "star"):
        raise AnnotateError(f"unknown linkage {linkage!r}")
    sim = sim3 or default_predicate_sim
    n = len(collection)
    if n == 0:
        return []

    def same_fact(a: Triplet, b: Triplet) -> bool:
        return (sim(a.subject, b.subject) > thresholds[0]
                and sim(a.predicate, b.predicate) > thresholds[1]
                and sim(a.object, b.object) > thresholds[2])

    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    if linkage == "single":
        for i in range(n):
            for j in range(i + 1, n):
                if same_fact(collection[i], collection[j]):
                    union(i, j)
    else:
        # Star linkage: most frequent exact tuples become hubs in frequency
        # order; every unassigned item joins the first hub it matches.
        freq: dict[tuple, int] = {}
        first: dict[tuple, int] = {}
        for i, t in enumerate(collection):
            key = t.astuple()
            freq[key] = freq.get(key, 0) + 1
            first.setdefault(key, i)
        hubs = sorted(freq, key=lambda k: (-freq[k], first[k]))
        assigned = [False] * n
        for hub in hubs:
            hub_idx = first[hub]
            if assigned[hub_idx]:
                continue
            for i in range(n):
                if not assigned[i] and same_fact(collection[hub_idx], collection[i]):
                    assigned[i] = True
                    union(hub_idx, i)

    clusters: dict[int, list[int]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(i)

    labels: list[PoiLabel] = []
    for root, members in clusters.items():
        freq: dict[tuple, int] = {}
        first: dict[tuple, int] = {}
        for i in members:
            key = collection[i].astuple()
            freq[key] = freq.get(key, 0) + 1
            first.setdefault(key, i)
        rep_key = sorted(freq, key=lambda k: (-freq[k], first[k]))[0]
        rep = collection[first[rep_key]]
        labels.append(PoiLabel(
            label=_join_label(rep.predicate, rep.object),
            count=len(members),
            representative=rep,
            members=[collection[i] for i in sorted(members)],
        ))
    labels.sort(key=lambda l: (-l.count, min(
        i for i, t in enumerate(collection) if t in l.members)))
    return labels


# ---------------------------------------------------------------------------
# Pool serialization.

def save_pools(pools: AnnotationPools, path: "str | Path") -> None:
    """Canonical-JSONL with a pool tag field per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, pool in (("d_ex", pools.d_ex), ("d_un", pools.d_un),
                           ("d_ps", pools.d_ps), ("d_im", pools.d_im)):
            for inst in pool:
                fh.write(json.dumps({
                    "pool": name,
                    "id": inst.sentence.id,
                    "text": inst.sentence.text,
                    "tokens": list(inst.sentence.tokens),
                    "triplets": [
                        {"subject": t.subject, "predicate": t.predicate,
                         "object": t.object} for t in inst.triplets
                    ],
                }, ensure_ascii=False) + "\n")


def load_pools(path: "str | Path", rounds: int = 1) -> AnnotationPools:
    pools = AnnotationPools(rounds=rounds)
    target = {"d_ex": pools.d_ex, "d_un": pools.d_un,
              "d_ps": pools.d_ps, "d_im": pools.d_im}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        inst = ExtractionInstance(
            Sentence.from_tokens(str(obj["id"]), obj.get("tokens") or obj["text"].split()),
            tuple(Triplet(t["subject"], t["predicate"], t["object"])
                  for t in obj.get("triplets", [])),
        )
        pool = obj.get("pool", "d_un")
        if pool not in target:
            raise AnnotateError(f"unknown pool tag {pool!r}")
        target[pool].append(inst)
    pools.validate()
    return pools
