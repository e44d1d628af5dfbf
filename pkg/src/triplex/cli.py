"""Command-line entry point wiring the modules into runnable workflows.

Every run takes an optional flat key-value config file (dotted keys, one
``key = value`` per line, # comments) plus repeatable ``--set key=value``
overrides; overrides win. The effective configuration is snapshotted into the
output directory so any run can be reproduced from its artifacts.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

from . import annotate as ann
from . import llm as llm_mod
from .data import (
    CORPUS_FORMATS,
    DataError,
    ExtractionInstance,
    classify_triplet_categories,
    load_corpus,
    make_training_pairs,
    prompt_sequence,
    save_corpus,
)
from .grammar import GrammarError, parse_wrapped_sentence, serialize_triplets
from .inference import (
    InferenceConfig,
    Prediction,
    extract_corpus,
    read_predictions,
    write_predictions,
)
from .metrics import (
    bleu,
    corpus_report,
    f1_one_to_one,
    grouped_report,
    pearson,
    predicate_corpus_report,
    strict_corpus_report,
)
from .model import (
    DualModel,
    ModelConfig,
    ModelError,
    Vocab,
    load_checkpoint,
    train as train_model,
)
from .synth import SynthConfig, generate_synthetic_labeled


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); we map usage -> 1
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# ---------------------------------------------------------------------------
# Flat config files.

def _coerce(value: str):
    text = value.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_kv_text(text: str) -> dict:
    out = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {i}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = _coerce(value)
    return out


_MODEL_KEYS = {
    "model.lr", "model.alpha", "model.beta", "model.gamma",
    "model.hidden", "model.heads", "model.ffn", "model.dropout",
    "model.n_encoder_blocks", "model.n_decoder_blocks",
    "model.max_src_len", "model.max_tgt_len", "model.batch_size",
    "model.seed", "model.loss_reduction", "model.tie_embeddings",
    "model.clip_norm", "model.backbone",
}

_ALLOWED_KEYS = {
    "gen": {"gen.seed", "gen.size", "gen.p_overlapping", "gen.p_discontinuous",
            "gen.p_nested", "gen.p_implicit", "gen.m_max",
            "gen.entities", "gen.relations", "gen.values"},
    "prep": set(),
    "train": _MODEL_KEYS | {
        "train.max_steps", "train.eval_every", "train.patience",
        "train.prompt_element", "train.target_loss", "train.target_dev_f1",
        "train.log_every"},
    "extract": {"infer.decoding", "infer.beam_size", "infer.max_prompt_len",
                "infer.max_triplet_len", "infer.prompt_mode", "infer.dedup"},
    "score": {"score.slotting"},
    "sweep": _MODEL_KEYS | {"sweep.steps", "sweep.train_size", "sweep.eval_size"},
    "group-report": set(),
    "dual-corr": set(),
    "gold-prompt": {"infer.decoding", "infer.beam_size"},
    "llm-baseline": {"client.endpoint", "client.model", "client.auth_env",
                     "client.temperature", "client.timeout", "client.max_retries",
                     "client.backoff", "client.rate_limit_per_min"},
    "annotate-sim": set(),
}


def _effective_config(args) -> dict:
    cfg: dict = {}
    if getattr(args, "config", None):
        cfg.update(parse_kv_text(Path(args.config).read_text(encoding="utf-8")))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = _coerce(value)
    allowed = _ALLOWED_KEYS[args.cmd]
    unknown = set(cfg) - allowed
    if unknown:
        raise UsageError(
            f"unknown config key(s) for {args.cmd}: {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}")
    return cfg


def _snapshot(out_dir: Path, args, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"# effective config for `{args.cmd}`"]
    for k in sorted(cfg):
        lines.append(f"{k} = {cfg[k]}")
    for name in ("corpus", "dev", "model", "gold", "pred", "out", "seed"):
        if getattr(args, name, None) is not None:
            lines.append(f"cli.{name} = {getattr(args, name)}")
    (out_dir / "config.snapshot").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _prefixed(cfg: dict, prefix: str) -> dict:
    plen = len(prefix) + 1
    return {k[plen:]: v for k, v in cfg.items() if k.startswith(prefix + ".")}


def _model_config(cfg: dict, **defaults) -> ModelConfig:
    fields = {**defaults, **_prefixed(cfg, "model")}
    return ModelConfig(**fields)


def _inference_config(cfg: dict, args=None) -> InferenceConfig:
    fields = _prefixed(cfg, "infer")
    for name in ("decoding", "beam_size", "prompt_mode"):
        if args is not None and getattr(args, name, None) is not None:
            fields[name] = getattr(args, name)
    return InferenceConfig(**fields)


def _dev_eval_fn(dev_set: Sequence[ExtractionInstance], icfg: InferenceConfig):
    sentences = [i.sentence for i in dev_set]

    def run(model: DualModel) -> float:
        preds = extract_corpus(model, sentences, icfg)
        return corpus_report(
            (inst.triplets, p.triplets) for inst, p in zip(dev_set, preds)
        ).f1

    return run


# ---------------------------------------------------------------------------
# Subcommands.

def cmd_gen(args) -> int:
    cfg = _effective_config(args)
    fields = _prefixed(cfg, "gen")
    for pool in ("entities", "relations", "values"):
        if pool in fields:  # comma-separated in config files
            fields[pool] = tuple(t.strip() for t in str(fields[pool]).split(",") if t.strip())
    if args.seed is not None:
        fields["seed"] = args.seed
    if args.size is not None:
        fields["size"] = args.size
    synth_cfg = SynthConfig(**fields)
    instances, labels = generate_synthetic_labeled(synth_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(instances, out)
    if args.labels_out:
        with open(args.labels_out, "w", encoding="utf-8") as fh:
            for inst, fl in zip(instances, labels):
                fh.write(json.dumps({
                    "id": inst.id,
                    "flags": [asdict(f) for f in fl],
                }) + "\n")
    _snapshot(out.parent, args, cfg)
    print(f"wrote {len(instances)} instances to {out}")
    return 0


def cmd_prep(args) -> int:
    _effective_config(args)
    instances = load_corpus(args.corpus, args.format)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(out, "w", encoding="utf-8") as fh:
        for inst in instances:
            for pair in make_training_pairs(inst, args.prompt_element):
                fh.write(json.dumps({
                    "id": inst.id,
                    "objective": pair.objective,
                    "source": list(pair.source.tokens),
                    "target": list(pair.target.tokens),
                }, ensure_ascii=False) + "\n")
                n += 1
    print(f"wrote {n} training pairs to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _effective_config(args)
    out_dir = Path(args.out)
    train_set = load_corpus(args.corpus, args.format)
    dev_set = load_corpus(args.dev, args.format) if args.dev else None

    defaults = {}
    if args.seed is not None:
        defaults["seed"] = args.seed
    mcfg = _model_config(cfg, **defaults)
    tcfg = _prefixed(cfg, "train")
    prompt_element = tcfg.get("prompt_element", "predicate")

    pairs = []
    for inst in train_set:
        pairs.extend(make_training_pairs(inst, prompt_element))
    vocab = Vocab.build(pairs)
    model = DualModel(mcfg, vocab)

    dev_eval = None
    if dev_set is not None:
        dev_eval = _dev_eval_fn(dev_set, InferenceConfig(
            decoding="greedy",
            prompt_mode=prompt_element if prompt_element in ("subject", "object")
            else "predicate"))

    result = train_model(
        model, train_set,
        max_steps=int(tcfg.get("max_steps", 2000)),
        prompt_element=prompt_element,
        dev_eval=dev_eval,
        eval_every=int(tcfg.get("eval_every", 200)),
        patience=int(tcfg.get("patience", 3)),
        target_loss=tcfg.get("target_loss"),
        target_dev_f1=tcfg.get("target_dev_f1"),
        out_dir=out_dir,
        log_every=int(tcfg.get("log_every", 10)),
    )
    _snapshot(out_dir, args, cfg)
    summary = {
        "steps": result.steps,
        "stopped": result.stopped,
        "best_dev_f1": result.best_dev_f1,
        "checkpoint": str(result.checkpoint),
    }
    (out_dir / "train_summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))
    return 0


def cmd_extract(args) -> int:
    cfg = _effective_config(args)
    icfg = _inference_config(cfg, args)
    model = load_checkpoint(args.model)
    instances = load_corpus(args.corpus, args.format)
    gold_prompts = None
    if icfg.prompt_mode == "gold":
        element = args.gold_element or "predicate"
        gold_prompts = {i.id: prompt_sequence(i, element) for i in instances}
    preds = extract_corpus(model, [i.sentence for i in instances], icfg, gold_prompts)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_predictions(preds, out)
    print(f"wrote {len(preds)} predictions to {out}")
    return 0


def _report_payload(instances, by_id, slotting: str = "per-slot") -> dict:
    pairs = [(inst.triplets, by_id.get(inst.id, Prediction(inst.id, [], [])).triplets)
             for inst in instances]
    pred_pairs = [
        ([t.predicate for t in inst.triplets],
         by_id.get(inst.id, Prediction(inst.id, [], [])).predicates)
        for inst in instances
    ]
    return {
        "f1_one_to_one": corpus_report(pairs, "one", slotting).as_dict(),
        "f1_multi_to_one": corpus_report(pairs, "multi", slotting).as_dict(),
        "pred_f1_one_to_one": predicate_corpus_report(pred_pairs, "one").as_dict(),
        "pred_f1_multi_to_one": predicate_corpus_report(pred_pairs, "multi").as_dict(),
        "strict_match": strict_corpus_report(pairs).as_dict(),
        "n_sentences": len(instances),
    }


def cmd_score(args) -> int:
    cfg = _effective_config(args)
    slotting = cfg.get("score.slotting", "per-slot")
    instances = load_corpus(args.gold, args.format)
    by_id = {p.id: p for p in read_predictions(args.pred)}
    payload = _report_payload(instances, by_id, slotting)
    if args.group_by:
        payload["groups"] = grouped_report(
            instances, {p.id: p.triplets for p in by_id.values()}, args.group_by,
            slotting)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    if args.csv and args.group_by:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["group", "metric", "precision", "recall", "f1", "n_sentences"])
            for group, reports in sorted(payload["groups"].items()):
                for metric in ("one_to_one", "multi_to_one"):
                    r = reports[metric]
                    w.writerow([group, metric, r["precision"], r["recall"], r["f1"],
                                reports["n_sentences"]])
    print(text)
    return 0


_SWEEP_ALPHA_BETA = [
    (0.2, 0.4), (0.2, 0.6), (0.2, 0.8),
    (0.2, 0.2), (0.4, 0.4), (0.6, 0.6),
    (0.4, 0.2), (0.6, 0.2), (0.8, 0.2),
]
_SWEEP_RATIOS = (2.0, 1.0, 0.5)


def sweep_grid() -> list[tuple[float, float, float]]:
    """The 27 (alpha, beta, gamma) rows: alpha-beta bands x gamma/(alpha+beta)."""
    rows = []
    for a, b in _SWEEP_ALPHA_BETA:
        for ratio in _SWEEP_RATIOS:
            rows.append((a, b, round(ratio * (a + b), 10)))
    return rows


def cmd_sweep(args) -> int:
    cfg = _effective_config(args)
    steps = int(cfg.get("sweep.steps", args.steps))
    instances = load_corpus(args.corpus, args.format)
    train_size = int(cfg.get("sweep.train_size", max(len(instances) - 32, 8)))
    eval_size = int(cfg.get("sweep.eval_size", min(32, len(instances) - train_size)
                    or len(instances)))
    train_set = instances[:train_size]
    eval_set = instances[train_size: train_size + eval_size] or instances[:eval_size]

    base = _model_config(cfg, seed=args.seed if args.seed is not None else 0)
    vocab = Vocab.build_from_instances(instances)
    icfg = InferenceConfig(decoding="greedy")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    rows = []
    for a, b, g in sweep_grid():
        mcfg = replace(base, alpha=a, beta=b, gamma=g)
        model = DualModel(mcfg, vocab)
        result = train_model(model, train_set, max_steps=steps, log_every=10 ** 9)
        preds = extract_corpus(model, [i.sentence for i in eval_set], icfg)
        rep = corpus_report(
            (inst.triplets, p.triplets) for inst, p in zip(eval_set, preds))
        band = "a<b" if a < b else ("a=b" if a == b else "a>b")
        ratio = g / (a + b)
        rows.append([a, b, g, band, ratio, rep.f1, result.steps])
        print(f"(alpha={a}, beta={b}, gamma={g}) f1={rep.f1:.4f}")

    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "beta", "gamma", "alpha_beta_band",
                    "gamma_over_alpha_beta", "f1", "steps"])
        w.writerows(rows)
    _snapshot(out.parent, args, cfg)
    print(f"wrote {len(rows)} sweep rows to {out}")
    return 0


def cmd_group_report(args) -> int:
    _effective_config(args)
    instances = load_corpus(args.gold, args.format)
    preds = {p.id: p.triplets for p in read_predictions(args.pred)}
    payload = grouped_report(instances, preds, args.group_by)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_dual_corr(args) -> int:
    _effective_config(args)
    model = load_checkpoint(args.model)
    instances = load_corpus(args.corpus, args.format)
    icfg = InferenceConfig(decoding=args.decoding or "greedy")

    preds = extract_corpus(model, [i.sentence for i in instances], icfg)
    rows = []
    xs, ys = [], []
    recon_sources = [list(serialize_triplets(i.triplets).tokens) for i in instances]
    recon = model.generate("S", recon_sources, strategy=icfg.decoding,
                           beam_size=icfg.beam_size)
    for inst, p, (tokens, _) in zip(instances, preds, recon):
        words, _ = parse_wrapped_sentence(tokens)
        b = bleu(list(words), [list(inst.sentence.tokens)])
        f = f1_one_to_one(inst.triplets, p.triplets).f1
        xs.append(b)
        ys.append(f)
        rows.append([inst.id, b, f])

    r = pearson(xs, ys) if len(xs) >= 2 and (max(xs) > min(xs)) and (max(ys) > min(ys)) else 0.0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "bleu_t_to_s", "f1_s_to_t"])
        w.writerows(rows)
    print(json.dumps({"pearson_r": r, "n": len(rows), "csv": str(out)}))
    return 0


def cmd_gold_prompt(args) -> int:
    cfg = _effective_config(args)
    icfg = _inference_config(cfg, args)
    model = load_checkpoint(args.model)
    instances = load_corpus(args.corpus, args.format)
    sentences = [i.sentence for i in instances]
    gold_prompts = {i.id: prompt_sequence(i) for i in instances}

    predicted = extract_corpus(model, sentences, icfg)
    gold_cfg = InferenceConfig(**{**asdict(icfg), "prompt_mode": "gold"})
    golden = extract_corpus(model, sentences, gold_cfg, gold_prompts)

    pred_pairs = [(list(gold_prompts[i.id].predicates), p.predicates)
                  for i, p in zip(instances, predicted)]
    payload = {
        "pred_f1_one_to_one": predicate_corpus_report(pred_pairs, "one").as_dict(),
        "pred_f1_multi_to_one": predicate_corpus_report(pred_pairs, "multi").as_dict(),
        "trip_f1_predicted_prompt": corpus_report(
            (i.triplets, p.triplets) for i, p in zip(instances, predicted)).as_dict(),
        "trip_f1_gold_prompt": corpus_report(
            (i.triplets, p.triplets) for i, p in zip(instances, golden)).as_dict(),
    }
    payload["gold_minus_predicted_f1"] = (
        payload["trip_f1_gold_prompt"]["f1"] - payload["trip_f1_predicted_prompt"]["f1"])
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _mock_transport(url: str, headers: dict, payload: dict, timeout: float) -> dict:
    text = payload["messages"][-1]["content"]
    tail = text.rsplit("Sentence:", 1)[-1].strip().rstrip(".")
    words = tail.split()
    subj = words[0] if words else "it"
    obj = words[-1] if words else "that"
    return {"choices": [{"message": {"content": f"({subj}; mentions; {obj})"}}]}


def cmd_llm_baseline(args) -> int:
    cfg = _effective_config(args)
    client_cfg = llm_mod.ChatClientConfig(**_prefixed(cfg, "client"))
    transport = _mock_transport if client_cfg.endpoint.startswith("mock:") else None
    client = llm_mod.ChatClient(client_cfg, transport=transport)
    template = llm_mod.PromptTemplate.load(args.mode, args.template, args.k)
    instances = load_corpus(args.corpus, args.format)
    pool = load_corpus(args.exemplars, args.format) if args.exemplars else None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    preds = llm_mod.run_baseline(
        instances, client, template, pool,
        seed=args.seed if args.seed is not None else 0,
        cache_dir=args.cache_dir, out_path=out,
    )
    print(f"wrote {len(preds)} predictions to {out} "
          f"({client.request_count} requests issued)")
    return 0


def cmd_annotate_sim(args) -> int:
    _effective_config(args)
    instances = load_corpus(args.corpus, args.format)
    flags = {i.id: classify_triplet_categories(i) for i in instances}
    explicit = [i for i in instances if not any(f.implicit for f in flags[i.id])]
    with_implicit = [i for i in instances if any(f.implicit for f in flags[i.id])]
    if not with_implicit:
        raise DataError("corpus has no instances with implicit triplets to discover")

    implicit_gold = {
        i.id: tuple(t for t, f in zip(i.triplets, flags[i.id]) if f.implicit)
        for i in with_implicit
    }
    d_un = [ExtractionInstance(i.sentence, ()) for i in with_implicit]
    pools = ann.AnnotationPools.initialize(explicit, d_un, rounds=args.rounds)
    oracle = ann.AnnotatorOracle(
        {k: frozenset(t.astuple() for t in v) for k, v in implicit_gold.items()},
        noise=args.noise, seed=args.seed if args.seed is not None else 0,
    )
    if args.trainer == "scripted":
        trainer = ann.ScriptedTrainer(
            {k: list(v) for k, v in implicit_gold.items()},
            accuracy=args.accuracy,
            seed=args.seed if args.seed is not None else 0)
    else:
        trainer = ann.ModelTrainer(ModelConfig(
            seed=args.seed if args.seed is not None else 0, lr=1e-3, dropout=0.0),
            steps=args.steps)

    d_im, stats = ann.iterative_annotation(pools, trainer, oracle)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ann.save_pools(pools, out_dir / "pools.jsonl")
    with open(out_dir / "round_stats.jsonl", "w", encoding="utf-8") as fh:
        for row in stats:
            fh.write(json.dumps(row) + "\n")
    print(json.dumps({"rounds": len(stats), "d_im": len(d_im),
                      "stats": stats[-1] if stats else None}))
    return 0


# ---------------------------------------------------------------------------
# Parser assembly.

def _add_common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="config override (repeatable)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", default="canonical-jsonl", choices=CORPUS_FORMATS)
    p.add_argument("--log-level", dest="log_level", default="warning",
                   choices=("debug", "info", "warning", "error"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="triplex", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("prep", help="emit training pairs for a corpus")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prompt-element", default="predicate",
                   choices=("predicate", "subject", "object"))
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train the dual model")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="run two-step extraction")
    _add_common(p)
    p.add_argument("--model", required=True, help="checkpoint directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prompt-mode", dest="prompt_mode", default=None,
                   choices=("predicate", "subject", "object", "none", "gold"))
    p.add_argument("--decoding", default=None, choices=("greedy", "beam"))
    p.add_argument("--beam-size", dest="beam_size", type=int, default=None)
    p.add_argument("--gold-element", default=None,
                   choices=("predicate", "subject", "object"))
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("score", help="score predictions against gold")
    _add_common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out")
    p.add_argument("--csv")
    p.add_argument("--group-by", dest="group_by",
                   choices=("m", "category", "implicit"))
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="loss-coefficient grid (27 rows)")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--steps", type=int, default=40)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("group-report", help="per-m or per-category slices")
    _add_common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--group-by", dest="group_by", default="m",
                   choices=("m", "category", "implicit"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_group_report)

    p = sub.add_parser("dual-corr", help="per-sentence reconstruction BLEU vs extraction F1")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--decoding", default=None, choices=("greedy", "beam"))
    p.set_defaults(func=cmd_dual_corr)

    p = sub.add_parser("gold-prompt", help="predicted-prompt vs gold-prompt comparison")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.add_argument("--prompt-mode", dest="prompt_mode", default=None)
    p.add_argument("--decoding", default=None, choices=("greedy", "beam"))
    p.add_argument("--beam-size", dest="beam_size", type=int, default=None)
    p.set_defaults(func=cmd_gold_prompt)

    p = sub.add_parser("llm-baseline", help="prompted chat-model baseline")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="zero-shot",
                   choices=("zero-shot", "few-shot", "cot"))
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--template", help="custom template file")
    p.add_argument("--exemplars", help="corpus file supplying exemplars")
    p.add_argument("--cache-dir", default=".llm-cache")
    p.set_defaults(func=cmd_llm_baseline)

    p = sub.add_parser("annotate-sim", help="iterative annotation simulation")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--trainer", default="scripted", choices=("scripted", "model"))
    p.add_argument("--accuracy", type=float, default=0.7)
    p.add_argument("--steps", type=int, default=300)
    p.set_defaults(func=cmd_annotate_sim)

    return parser


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    logging.basicConfig(level=getattr(logging, args.log_level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except (DataError, GrammarError, ModelError, llm_mod.LLMError,
            ann.AnnotateError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
