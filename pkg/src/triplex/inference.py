"""Two-step extraction: decode the predicate sequence, then condition a single
triplet decode on it.

The pipeline never raises on model output: decoded sequences are parsed
leniently and the worst case is an empty triplet list plus a trace explaining
why. Exactly one triplet-decoder invocation happens per sentence regardless
of how many triplets the sentence holds.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .grammar import (
    PredicateSequence,
    Sentence,
    SerializedSeq,
    Triplet,
    build_triplet_input,
    parse_predicates,
    parse_triplets,
    serialize_predicates,
    wrap_sentence,
)

PROMPT_MODES = ("predicate", "subject", "object", "none", "gold")


@dataclass(frozen=True)
class InferenceConfig:
    decoding: str = "beam"
    beam_size: int = 4
    max_prompt_len: int = 48
    max_triplet_len: int = 96
    prompt_mode: str = "predicate"
    dedup: bool = True

    def __post_init__(self) -> None:
        if self.prompt_mode not in PROMPT_MODES:
            raise ValueError(f"unknown prompt_mode {self.prompt_mode!r}")
        if self.decoding not in ("greedy", "beam"):
            raise ValueError(f"unknown decoding {self.decoding!r}")


@dataclass
class Prediction:
    id: str
    triplets: list[Triplet]
    predicates: list[str]
    trace: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "triplets": [
                {"subject": t.subject, "predicate": t.predicate, "object": t.object}
                for t in self.triplets
            ],
            "predicates": list(self.predicates),
            "trace": self.trace,
        }


def _generate(model, which: str, sources: list[list[str]], cfg: InferenceConfig,
              max_len: int) -> list[tuple[list[str], bool]]:
    return model.generate(which, sources, strategy=cfg.decoding,
                          beam_size=cfg.beam_size, max_len=max_len)


def _clamped_prompt(model, prompt_tokens: Sequence[str], x_p: SerializedSeq,
                    trace: dict) -> SerializedSeq:
    """Fit [prompt ; x_P] under the model's source budget, trimming the prompt."""
    budget = getattr(getattr(model, "cfg", None), "max_src_len", None)
    tokens = tuple(prompt_tokens)
    if budget is not None and len(tokens) + len(x_p.tokens) > budget:
        keep = max(budget - len(x_p.tokens), 0)
        trace["prompt_truncated_to"] = keep
        tokens = tokens[:keep]
    return build_triplet_input(SerializedSeq(tokens, "y_P"), x_p)


def extract_predicates(model, s: Sentence, cfg: InferenceConfig | None = None
                       ) -> PredicateSequence:
    """Step 1 alone: decode and leniently parse the predicate sequence."""
    cfg = cfg or InferenceConfig()
    x_p = wrap_sentence(s)
    (tokens, _), = _generate(model, "P", [list(x_p.tokens)], cfg, cfg.max_prompt_len)
    parsed, _ = parse_predicates(tokens)
    return parsed


def extract(
    model,
    s: Sentence,
    cfg: InferenceConfig | None = None,
    gold_prompt: "PredicateSequence | Sequence[str] | None" = None,
) -> tuple[list[Triplet], dict]:
    """Full two-step extraction for one sentence; returns (triplets, trace)."""
    preds = extract_corpus(model, [s], cfg, {s.id: gold_prompt} if gold_prompt is not None else None)
    return preds[0].triplets, preds[0].trace


def extract_corpus(
    model,
    sentences: Sequence[Sentence],
    cfg: InferenceConfig | None = None,
    gold_prompts: "Mapping[str, PredicateSequence | Sequence[str]] | None" = None,
) -> list[Prediction]:
    """Batched two-step extraction.

    prompt_mode gold takes the step-1 sequence from gold_prompts (keyed by
    sentence id); prompt_mode none skips step 1 and decodes from the wrapped
    sentence alone.
    """
    cfg = cfg or InferenceConfig()
    if cfg.prompt_mode == "gold" and gold_prompts is None:
        raise ValueError("prompt_mode='gold' needs gold_prompts")

    wrapped = [wrap_sentence(s) for s in sentences]
    traces: list[dict] = [{"prompt_mode": cfg.prompt_mode} for _ in sentences]
    prompts: list[tuple[str, ...]] = []

    if cfg.prompt_mode == "none":
        prompts = [() for _ in sentences]
    elif cfg.prompt_mode == "gold":
        for s, trace in zip(sentences, traces):
            gold = gold_prompts.get(s.id) if gold_prompts else None
            if gold is None:
                raise ValueError(f"no gold prompt for sentence {s.id!r}")
            if not isinstance(gold, PredicateSequence):
                gold = PredicateSequence.of(gold)
            y_p = serialize_predicates(gold)
            trace["gold_prompt"] = True
            trace["y_p"] = list(y_p.tokens)
            prompts.append(y_p.tokens)
    else:
        step1 = _generate(model, "P", [list(w.tokens) for w in wrapped], cfg,
                          cfg.max_prompt_len)
        for (tokens, truncated), trace in zip(step1, traces):
            trace["y_p"] = list(tokens)
            if truncated:
                trace["y_p_truncated"] = True
            prompts.append(tuple(tokens))

    x_ts = [
        _clamped_prompt(model, prompt, x_p, trace)
        for prompt, x_p, trace in zip(prompts, wrapped, traces)
    ]
    step2 = _generate(model, "T", [list(x.tokens) for x in x_ts], cfg,
                      cfg.max_triplet_len)

    out: list[Prediction] = []
    for s, (tokens, truncated), trace in zip(sentences, step2, traces):
        trace["raw_y_t"] = list(tokens)
        if truncated:
            trace["y_t_truncated"] = True
        trace["triplet_decoder_calls"] = 1
        parsed_preds, pred_report = parse_predicates(trace.get("y_p", ()), strict=False)
        triplets, report = parse_triplets(tokens)
        warnings = list(pred_report.warnings) + list(report.warnings)
        if warnings:
            trace["parse_warnings"] = warnings
        if cfg.dedup:
            seen = set()
            unique = []
            for t in triplets:
                if t.astuple() not in seen:
                    seen.add(t.astuple())
                    unique.append(t)
            if len(unique) != len(triplets):
                trace["dedup_removed"] = len(triplets) - len(unique)
            triplets = unique
        if len(triplets) != len(parsed_preds.predicates):
            trace["count_mismatch"] = {
                "predicates": len(parsed_preds.predicates),
                "triplets": len(triplets),
            }
        out.append(Prediction(
            id=s.id, triplets=triplets,
            predicates=list(parsed_preds.predicates), trace=trace,
        ))
    return out


def extract_with_prompt_variant(
    model,
    s: Sentence,
    variant: str,
    cfg: InferenceConfig | None = None,
    gold_prompt: "Sequence[str] | None" = None,
) -> tuple[list[Triplet], dict]:
    """Same pipeline with subject or object spans as the step-1 prompt.

    The model must have been trained with the matching prompt_element; this
    only switches what the prompt means, the grammar is unchanged.
    """
    if variant not in ("subject", "object"):
        raise ValueError(f"prompt variant must be subject or object, got {variant!r}")
    cfg = cfg or InferenceConfig()
    mode = "gold" if gold_prompt is not None else variant
    cfg = InferenceConfig(**{**asdict(cfg), "prompt_mode": mode})
    return extract(model, s, cfg, gold_prompt=gold_prompt)


# ---------------------------------------------------------------------------
# Predictions on disk.

def write_predictions(predictions: Sequence[Prediction], path: "str | Path") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(json.dumps(p.to_json(), ensure_ascii=False) + "\n")


def read_predictions(path: "str | Path") -> list[Prediction]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        out.append(Prediction(
            id=str(obj["id"]),
            triplets=[Triplet(t["subject"], t["predicate"], t["object"])
                      for t in obj.get("triplets", [])],
            predicates=[str(p) for p in obj.get("predicates", [])],
            trace=obj.get("trace", {}),
        ))
    return out
