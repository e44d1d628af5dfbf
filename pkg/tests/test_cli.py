import csv
import json

import pytest

from triplex.cli import cli_main, sweep_grid
from triplex.data import load_corpus, save_corpus
from triplex.synth import SynthConfig, generate_synthetic


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def tiny_corpus_path(workdir):
    path = workdir / "tiny.jsonl"
    save_corpus(generate_synthetic(SynthConfig(seed=3, size=10, m_max=2)), path)
    return path


@pytest.fixture(scope="module")
def trained_dir(workdir, tiny_corpus_path):
    out = workdir / "run"
    rc = cli_main([
        "train", "--corpus", str(tiny_corpus_path), "--out", str(out),
        "--seed", "1",
        "--set", "train.max_steps=3",
        "--set", "model.hidden=32", "--set", "model.heads=2",
        "--set", "model.ffn=64", "--set", "model.dropout=0.0",
    ])
    assert rc == 0
    return out


def test_gen_writes_corpus(workdir):
    out = workdir / "gen.jsonl"
    rc = cli_main(["gen", "--seed", "7", "--size", "30", "--out", str(out)])
    assert rc == 0
    assert len(load_corpus(out)) == 30
    assert (workdir / "config.snapshot").exists()


def test_gen_deterministic(workdir):
    a = workdir / "a.jsonl"
    b = workdir / "b.jsonl"
    assert cli_main(["gen", "--seed", "9", "--size", "12", "--out", str(a)]) == 0
    assert cli_main(["gen", "--seed", "9", "--size", "12", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_labels_out(workdir):
    out = workdir / "gen2.jsonl"
    labels = workdir / "labels.jsonl"
    rc = cli_main(["gen", "--seed", "2", "--size", "8", "--out", str(out),
                   "--labels-out", str(labels)])
    assert rc == 0
    rows = [json.loads(l) for l in labels.read_text().splitlines()]
    assert len(rows) == 8
    assert set(rows[0]["flags"][0]) == {"overlapping", "discontinuous",
                                        "nested", "implicit"}


def test_unknown_flag_exits_one(capsys):
    assert cli_main(["gen", "--bogus", "1", "--out", "x"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_config_key_exits_one(workdir, capsys):
    rc = cli_main(["gen", "--out", str(workdir / "x.jsonl"), "--set", "gen.nope=1"])
    assert rc == 1
    assert "unknown config key" in capsys.readouterr().err


def test_missing_subcommand_exits_one():
    assert cli_main([]) == 1


def test_runtime_error_exits_two(workdir, capsys):
    rc = cli_main(["prep", "--corpus", str(workdir / "missing.jsonl"),
                   "--out", str(workdir / "p.jsonl")])
    assert rc == 2


def test_gen_custom_pools_via_config(workdir):
    cfg = workdir / "pools.cfg"
    cfg.write_text(
        "gen.entities = Ada,Bo,Cy,Dee,Eli,Fay,Gus,Hal\n"
        "gen.size = 6\n"
        "gen.p_overlapping = 0\ngen.p_nested = 0\n"
        "gen.p_discontinuous = 0\ngen.p_implicit = 0\n"
        "gen.m_max = 2\n")
    out = workdir / "pools.jsonl"
    assert cli_main(["gen", "--config", str(cfg), "--seed", "0", "--out", str(out)]) == 0
    subjects = {t.subject for inst in load_corpus(out) for t in inst.triplets}
    assert subjects <= {"Ada", "Bo", "Cy", "Dee", "Eli", "Fay", "Gus", "Hal"}


def test_config_file_plus_override(workdir):
    cfg = workdir / "gen.cfg"
    cfg.write_text("gen.size = 5\ngen.seed = 1  # comment\n")
    out = workdir / "cfg.jsonl"
    rc = cli_main(["gen", "--config", str(cfg), "--set", "gen.size=6",
                   "--out", str(out)])
    assert rc == 0
    assert len(load_corpus(out)) == 6  # override wins
    snapshot = (workdir / "config.snapshot").read_text()
    assert "gen.size = 6" in snapshot


def test_prep_emits_three_pairs_per_instance(workdir, tiny_corpus_path):
    out = workdir / "pairs.jsonl"
    rc = cli_main(["prep", "--corpus", str(tiny_corpus_path), "--out", str(out)])
    assert rc == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    n_instances = len(load_corpus(tiny_corpus_path))
    assert len(rows) == 3 * n_instances
    assert {r["objective"] for r in rows} == {"P", "T", "S"}


def test_train_with_dev_eval(workdir, tiny_corpus_path):
    out = workdir / "run_dev"
    rc = cli_main([
        "train", "--corpus", str(tiny_corpus_path), "--dev", str(tiny_corpus_path),
        "--out", str(out), "--seed", "4",
        "--set", "train.max_steps=4", "--set", "train.eval_every=2",
        "--set", "model.hidden=32", "--set", "model.heads=2",
        "--set", "model.ffn=64", "--set", "model.dropout=0.0",
    ])
    assert rc == 0
    log_rows = [json.loads(l) for l in (out / "log.jsonl").read_text().splitlines()]
    assert any("dev_f1" in r for r in log_rows)
    assert (out / "checkpoint-best" / "weights.pt").exists()


def test_train_writes_artifacts(trained_dir):
    assert (trained_dir / "checkpoint-final" / "weights.pt").exists()
    assert (trained_dir / "config.snapshot").exists()
    assert (trained_dir / "log.jsonl").exists()
    summary = json.loads((trained_dir / "train_summary.json").read_text())
    assert summary["steps"] == 3


def test_extract_then_score(workdir, tiny_corpus_path, trained_dir):
    pred = workdir / "pred.jsonl"
    rc = cli_main(["extract", "--model", str(trained_dir / "checkpoint-final"),
                   "--corpus", str(tiny_corpus_path), "--out", str(pred),
                   "--decoding", "greedy"])
    assert rc == 0
    report = workdir / "report.json"
    rc = cli_main(["score", "--gold", str(tiny_corpus_path), "--pred", str(pred),
                   "--out", str(report)])
    assert rc == 0
    payload = json.loads(report.read_text())
    assert {"f1_one_to_one", "f1_multi_to_one", "pred_f1_one_to_one",
            "pred_f1_multi_to_one", "strict_match"} <= set(payload)


def test_extract_gold_prompt_mode(workdir, tiny_corpus_path, trained_dir):
    pred = workdir / "pred_gold.jsonl"
    rc = cli_main(["extract", "--model", str(trained_dir / "checkpoint-final"),
                   "--corpus", str(tiny_corpus_path), "--out", str(pred),
                   "--decoding", "greedy", "--prompt-mode", "gold"])
    assert rc == 0
    rows = [json.loads(l) for l in pred.read_text().splitlines()]
    assert all(r["trace"].get("gold_prompt") for r in rows)


def test_score_perfect_predictions(workdir, tiny_corpus_path):
    instances = load_corpus(tiny_corpus_path)
    pred = workdir / "perfect.jsonl"
    with open(pred, "w") as fh:
        for inst in instances:
            fh.write(json.dumps({
                "id": inst.id,
                "triplets": [{"subject": t.subject, "predicate": t.predicate,
                              "object": t.object} for t in inst.triplets],
                "predicates": [t.predicate for t in inst.triplets],
                "trace": {},
            }) + "\n")
    report = workdir / "perfect_report.json"
    rc = cli_main(["score", "--gold", str(tiny_corpus_path), "--pred", str(pred),
                   "--out", str(report)])
    assert rc == 0
    payload = json.loads(report.read_text())
    assert payload["f1_one_to_one"]["f1"] == 1.0
    assert payload["strict_match"]["f1"] == 1.0


def test_score_byte_identical_across_runs(workdir, tiny_corpus_path):
    pred = workdir / "perfect.jsonl"
    r1 = workdir / "rep1.json"
    r2 = workdir / "rep2.json"
    assert cli_main(["score", "--gold", str(tiny_corpus_path), "--pred", str(pred),
                     "--out", str(r1)]) == 0
    assert cli_main(["score", "--gold", str(tiny_corpus_path), "--pred", str(pred),
                     "--out", str(r2)]) == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_score_group_csv(workdir, tiny_corpus_path):
    pred = workdir / "perfect.jsonl"
    out_csv = workdir / "groups.csv"
    rc = cli_main(["score", "--gold", str(tiny_corpus_path), "--pred", str(pred),
                   "--group-by", "m", "--csv", str(out_csv),
                   "--out", str(workdir / "rep3.json")])
    assert rc == 0
    rows = list(csv.reader(out_csv.open()))
    assert rows[0] == ["group", "metric", "precision", "recall", "f1", "n_sentences"]
    groups = {r[0] for r in rows[1:]}
    assert groups <= {"m=1", "m=2", "m=3", "m>=4"}


def test_sweep_accepts_model_architecture_keys():
    from triplex.cli import _ALLOWED_KEYS
    assert {k for k in _ALLOWED_KEYS["train"] if k.startswith("model.")} <= \
        _ALLOWED_KEYS["sweep"]


def test_sweep_micro_run(workdir):
    corpus = workdir / "sweep_corpus.jsonl"
    save_corpus(generate_synthetic(SynthConfig(seed=9, size=6, m_max=2)), corpus)
    out_csv = workdir / "sweep_micro.csv"
    rc = cli_main(["sweep", "--corpus", str(corpus), "--out", str(out_csv),
                   "--steps", "1", "--seed", "3",
                   "--set", "sweep.train_size=4", "--set", "sweep.eval_size=2",
                   "--set", "model.hidden=16", "--set", "model.heads=2",
                   "--set", "model.ffn=32", "--set", "model.dropout=0.0"])
    assert rc == 0
    rows = list(csv.reader(out_csv.open()))
    assert len(rows) - 1 == 27


def test_sweep_grid_matches_published_table():
    grid = sweep_grid()
    assert len(grid) == 27
    assert len(set(grid)) == 27
    expected = {
        (0.2, 0.4, 1.2), (0.2, 0.4, 0.6), (0.2, 0.4, 0.3),
        (0.2, 0.6, 1.6), (0.2, 0.6, 0.8), (0.2, 0.6, 0.4),
        (0.2, 0.8, 2.0), (0.2, 0.8, 1.0), (0.2, 0.8, 0.5),
        (0.2, 0.2, 0.8), (0.2, 0.2, 0.4), (0.2, 0.2, 0.2),
        (0.4, 0.4, 1.6), (0.4, 0.4, 0.8), (0.4, 0.4, 0.4),
        (0.6, 0.6, 2.4), (0.6, 0.6, 1.2), (0.6, 0.6, 0.6),
        (0.4, 0.2, 1.2), (0.4, 0.2, 0.6), (0.4, 0.2, 0.3),
        (0.6, 0.2, 1.6), (0.6, 0.2, 0.8), (0.6, 0.2, 0.4),
        (0.8, 0.2, 2.0), (0.8, 0.2, 1.0), (0.8, 0.2, 0.5),
    }
    assert set(grid) == expected


def test_group_report_command(workdir, tiny_corpus_path):
    pred = workdir / "perfect.jsonl"
    out = workdir / "group_report.json"
    rc = cli_main(["group-report", "--gold", str(tiny_corpus_path),
                   "--pred", str(pred), "--group-by", "category",
                   "--out", str(out)])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert set(payload) == {"overlapping", "discontinuous", "nested", "implicit"}


def test_gold_prompt_command(workdir, tiny_corpus_path, trained_dir):
    out = workdir / "goldprompt.json"
    rc = cli_main(["gold-prompt", "--model", str(trained_dir / "checkpoint-final"),
                   "--corpus", str(tiny_corpus_path), "--out", str(out),
                   "--decoding", "greedy"])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert {"pred_f1_one_to_one", "pred_f1_multi_to_one",
            "trip_f1_predicted_prompt", "trip_f1_gold_prompt",
            "gold_minus_predicted_f1"} <= set(payload)


def test_dual_corr_command(workdir, tiny_corpus_path, trained_dir, capsys):
    out = workdir / "corr.csv"
    rc = cli_main(["dual-corr", "--model", str(trained_dir / "checkpoint-final"),
                   "--corpus", str(tiny_corpus_path), "--out", str(out)])
    assert rc == 0
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert "pearson_r" in printed
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["id", "bleu_t_to_s", "f1_s_to_t"]
    assert len(rows) - 1 == len(load_corpus(tiny_corpus_path))


def test_llm_baseline_mock_and_cache(workdir, tiny_corpus_path, capsys):
    out = workdir / "llm_pred.jsonl"
    cache = workdir / "llm_cache"
    argv = ["llm-baseline", "--corpus", str(tiny_corpus_path), "--out", str(out),
            "--mode", "zero-shot", "--cache-dir", str(cache),
            "--set", "client.endpoint=mock:echo"]
    assert cli_main(argv) == 0
    first = capsys.readouterr().out
    assert f"{len(load_corpus(tiny_corpus_path))} requests issued" in first
    assert cli_main(argv) == 0
    assert "0 requests issued" in capsys.readouterr().out


def test_annotate_sim_command(workdir, capsys):
    corpus = workdir / "ann.jsonl"
    save_corpus(generate_synthetic(SynthConfig(seed=5, size=40)), corpus)
    out = workdir / "ann_out"
    rc = cli_main(["annotate-sim", "--corpus", str(corpus), "--out", str(out),
                   "--rounds", "2", "--trainer", "scripted", "--accuracy", "0.6",
                   "--seed", "0"])
    assert rc == 0
    assert (out / "pools.jsonl").exists()
    stats = [json.loads(l) for l in (out / "round_stats.jsonl").read_text().splitlines()]
    assert [s["round"] for s in stats] == [1, 2]
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert printed["rounds"] == 2
