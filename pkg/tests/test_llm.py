import json

import pytest

from triplex.data import ExtractionInstance
from triplex.grammar import Sentence, Triplet
from triplex.llm import (
    ChatClient,
    ChatClientConfig,
    ChatClientError,
    ExemplarCountMismatch,
    PromptTemplate,
    build_prompt,
    parse_llm_response,
    run_baseline,
)


def _inst(i, text, triplets):
    return ExtractionInstance(Sentence.from_text(f"ex{i}", text), tuple(triplets))


@pytest.fixture
def pool():
    return [
        _inst(0, "Ann owns boats", [Triplet("Ann", "owns", "boats")]),
        _inst(1, "Ben sells maps", [Triplet("Ben", "sells", "maps")]),
        _inst(2, "Cara rents rooms", [Triplet("Cara", "rents", "rooms")]),
        _inst(3, "Dee paints doors", [Triplet("Dee", "paints", "doors")]),
    ]


@pytest.fixture
def sentence():
    return Sentence.from_text("q1", "Eva guards gates")


# ---------------------------------------------------------------------------
# Prompt building.

def test_zero_shot_structure(sentence):
    prompt = build_prompt(PromptTemplate("zero-shot"), sentence)
    assert "Eva guards gates" in prompt
    assert "(subject; predicate; object)" in prompt
    assert "Sentence:" in prompt
    assert "examples" not in prompt.lower()


def test_few_shot_deterministic(sentence, pool):
    t = PromptTemplate("few-shot", k=3)
    a = build_prompt(t, sentence, pool, seed=1)
    b = build_prompt(t, sentence, pool, seed=1)
    assert a == b
    c = build_prompt(t, sentence, pool, seed=2)
    assert a != c  # different draw with overwhelming probability


def test_few_shot_contains_k_exemplars(sentence, pool):
    prompt = build_prompt(PromptTemplate("few-shot", k=3), sentence, pool, seed=0)
    assert prompt.count("Sentence:") == 4  # 3 exemplars + the query
    assert prompt.count("Triplets:") == 4


def test_few_shot_pool_too_small(sentence, pool):
    with pytest.raises(ExemplarCountMismatch):
        build_prompt(PromptTemplate("few-shot", k=5), sentence, pool)


def test_cot_predicate_first_ordering(sentence, birth_instance):
    prompt = build_prompt(PromptTemplate("cot", k=1), sentence, [birth_instance], seed=0)
    assert "Reasoning:" in prompt
    preds_pos = prompt.index("The predicates are: was born on, was born in, is in")
    subj_pos = prompt.index('the subject is "Shea"')
    assert preds_pos < subj_pos
    # arguments are filled per predicate, in predicate order
    assert prompt.index('For "was born on"') < prompt.index('For "was born in"')


def test_custom_template_body(sentence):
    t = PromptTemplate("zero-shot", body="SAY: {sentence} {exemplars}")
    assert build_prompt(t, sentence) == "SAY: Eva guards gates "


def test_template_requires_sentence_slot():
    with pytest.raises(Exception):
        PromptTemplate("zero-shot", body="no slot here")


# ---------------------------------------------------------------------------
# Response parsing.

def test_parse_numbered_tuple():
    triplets, warnings = parse_llm_response(
        "1. (Shea; was born on; September 5, 1900)")
    assert triplets == [Triplet("Shea", "was born on", "September 5, 1900")]
    assert warnings == []


def test_parse_prose_no_tuples():
    triplets, warnings = parse_llm_response("I could not find any facts.")
    assert triplets == []
    assert len(warnings) == 1


def test_parse_wrong_arity_skipped():
    triplets, warnings = parse_llm_response("(a; b)\n(x; y; z)")
    assert triplets == [Triplet("x", "y", "z")]
    assert any("2 field" in w for w in warnings)


def test_parse_empty_field_rejected():
    triplets, warnings = parse_llm_response("(a; ; c)")
    assert triplets == []
    assert warnings


def test_parse_tolerates_surrounding_prose():
    text = "Sure! Here are the facts:\n- (Ann; owns; boats) as stated.\nDone."
    triplets, _ = parse_llm_response(text)
    assert triplets == [Triplet("Ann", "owns", "boats")]


def test_parse_never_raises_on_junk():
    for junk in ["", ")(", "(;)", "((a; b; c))", None]:
        triplets, warnings = parse_llm_response(junk or "")
        assert isinstance(triplets, list)


# ---------------------------------------------------------------------------
# Chat client.

def _ok_response(content):
    return {"choices": [{"message": {"content": content}}]}


def test_client_happy_path():
    calls = []

    def transport(url, headers, payload, timeout):
        calls.append(payload)
        return _ok_response("(a; b; c)")

    client = ChatClient(ChatClientConfig(endpoint="http://x", model="m"),
                        transport=transport, sleep=lambda s: None)
    assert client.complete("hi") == "(a; b; c)"
    assert calls[0]["model"] == "m"
    assert calls[0]["messages"] == [{"role": "user", "content": "hi"}]
    assert calls[0]["temperature"] == 0.0
    assert client.request_count == 1


def test_client_retries_with_backoff():
    attempts = []
    sleeps = []

    def transport(url, headers, payload, timeout):
        attempts.append(1)
        if len(attempts) < 3:
            raise OSError("boom")
        return _ok_response("ok")

    client = ChatClient(
        ChatClientConfig(endpoint="http://x", max_retries=3, backoff=0.5),
        transport=transport, sleep=sleeps.append)
    assert client.complete("hi") == "ok"
    assert len(attempts) == 3
    assert sleeps == [0.5, 1.0]  # exponential


def test_client_gives_up_after_retries():
    def transport(url, headers, payload, timeout):
        raise OSError("down")

    client = ChatClient(ChatClientConfig(endpoint="http://x", max_retries=2),
                        transport=transport, sleep=lambda s: None)
    with pytest.raises(ChatClientError):
        client.complete("hi")
    assert client.request_count == 3


def test_client_config_validation():
    with pytest.raises(Exception):
        ChatClientConfig(temperature=-1)


def test_client_extra_headers_and_auth(monkeypatch):
    seen = {}

    def transport(url, headers, payload, timeout):
        seen.update(headers)
        return _ok_response("ok")

    monkeypatch.setenv("MY_TOKEN", "sekret")
    cfg = ChatClientConfig(endpoint="http://x", auth_env="MY_TOKEN",
                           extra_headers=(("X-Org", "lab42"),))
    ChatClient(cfg, transport=transport, sleep=lambda s: None).complete("hi")
    assert seen["X-Org"] == "lab42"
    assert seen["Authorization"] == "Bearer sekret"


# ---------------------------------------------------------------------------
# Baseline runner and cache.

def _echo_client(response="(Ann; owns; boats)", fail_ids=()):
    def transport(url, headers, payload, timeout):
        content = payload["messages"][0]["content"]
        for fid in fail_ids:
            if fid in content:
                raise OSError("flaky")
        return _ok_response(response)

    return ChatClient(ChatClientConfig(endpoint="http://x", max_retries=0),
                      transport=transport, sleep=lambda s: None)


def test_run_baseline_writes_predictions(tmp_path, pool):
    client = _echo_client()
    out = tmp_path / "pred.jsonl"
    preds = run_baseline(pool, client, PromptTemplate("zero-shot"),
                         cache_dir=tmp_path / "cache", out_path=out)
    assert len(preds) == len(pool)
    assert all(p.triplets == [Triplet("Ann", "owns", "boats")] for p in preds)
    lines = out.read_text().splitlines()
    assert len(lines) == len(pool)
    assert json.loads(lines[0])["triplets"][0]["subject"] == "Ann"


def test_cache_idempotence_zero_requests_on_rerun(tmp_path, pool):
    cache = tmp_path / "cache"
    client = _echo_client()
    run_baseline(pool, client, PromptTemplate("zero-shot"), cache_dir=cache)
    assert client.request_count == len(pool)

    rerun_client = _echo_client()
    preds = run_baseline(pool, rerun_client, PromptTemplate("zero-shot"),
                         cache_dir=cache)
    assert rerun_client.request_count == 0
    assert all(p.trace.get("cached") for p in preds)


def test_failures_recorded_not_cached(tmp_path, pool):
    cache = tmp_path / "cache"
    client = _echo_client(fail_ids=["Ben sells maps"])
    preds = run_baseline(pool, client, PromptTemplate("zero-shot"), cache_dir=cache)
    failed = [p for p in preds if "error" in p.trace]
    assert len(failed) == 1 and failed[0].triplets == []

    # the failed sentence is retried on rerun, the rest come from cache
    retry_client = _echo_client()
    run_baseline(pool, retry_client, PromptTemplate("zero-shot"), cache_dir=cache)
    assert retry_client.request_count == 1


def test_run_baseline_empty_corpus(tmp_path):
    client = _echo_client()
    preds = run_baseline([], client, PromptTemplate("zero-shot"),
                         cache_dir=tmp_path / "c")
    assert preds == []
    assert client.request_count == 0
