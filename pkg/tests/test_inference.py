import random
from types import SimpleNamespace

import pytest

from triplex.grammar import (
    PredicateSequence,
    Sentence,
    Triplet,
    serialize_predicates,
    serialize_triplets,
    wrap_sentence,
)
from triplex.inference import (
    InferenceConfig,
    Prediction,
    extract,
    extract_corpus,
    extract_predicates,
    extract_with_prompt_variant,
    read_predictions,
    write_predictions,
)

BIRTH_Y_P = list(serialize_predicates(
    PredicateSequence.of(["was born on", "was born in", "is in"])).tokens)
BIRTH_TRIPLETS = [
    Triplet("Shea", "was born on", "September 5, 1900"),
    Triplet("Shea", "was born in", "San Francisco, California"),
    Triplet("San Francisco", "is in", "California"),
]
BIRTH_Y_T = list(serialize_triplets(BIRTH_TRIPLETS).tokens)


class StubModel:
    """Duck-typed stand-in scripting each decoder's output."""

    def __init__(self, p_tokens=None, t_tokens=None, max_src_len=512):
        self.p_tokens = p_tokens or []
        self.t_tokens = t_tokens or []
        self.cfg = SimpleNamespace(max_src_len=max_src_len)
        self.calls = {"P": 0, "T": 0, "S": 0}
        self.sources = {"P": [], "T": [], "S": []}

    def generate(self, which, sources, strategy="greedy", beam_size=4, max_len=None):
        self.calls[which] += len(sources)
        self.sources[which].extend(list(s) for s in sources)
        tokens = {"P": self.p_tokens, "T": self.t_tokens, "S": []}[which]
        return [(list(tokens), False) for _ in sources]


@pytest.fixture
def greedy_cfg():
    return InferenceConfig(decoding="greedy")


def test_extract_predicates_birth(birth_sentence, greedy_cfg):
    model = StubModel(p_tokens=BIRTH_Y_P)
    preds = extract_predicates(model, birth_sentence, greedy_cfg)
    assert preds.predicates == ("was born on", "was born in", "is in")


def test_extract_predicates_immediate_eos(birth_sentence, greedy_cfg):
    assert extract_predicates(StubModel(), birth_sentence, greedy_cfg).predicates == ()


def test_extract_predicates_malformed(birth_sentence, greedy_cfg):
    model = StubModel(p_tokens=["<rel>", "is"])
    assert extract_predicates(model, birth_sentence, greedy_cfg).predicates == ()


def test_extract_birth_via_stubs(birth_sentence, greedy_cfg):
    model = StubModel(p_tokens=BIRTH_Y_P, t_tokens=BIRTH_Y_T)
    triplets, trace = extract(model, birth_sentence, greedy_cfg)
    assert triplets == BIRTH_TRIPLETS
    assert trace["y_p"] == BIRTH_Y_P
    assert trace["raw_y_t"] == BIRTH_Y_T
    assert trace["triplet_decoder_calls"] == 1
    assert "parse_warnings" not in trace


def test_extract_malformed_y_t_warns(birth_sentence, greedy_cfg):
    model = StubModel(p_tokens=BIRTH_Y_P, t_tokens=["<sub>", "A", "</sub>"])
    triplets, trace = extract(model, birth_sentence, greedy_cfg)
    assert triplets == []
    assert trace["parse_warnings"]


def test_single_pass_decoding_counter(greedy_cfg):
    sentences = [Sentence.from_text(f"s{i}", "a b c") for i in range(4)]
    model = StubModel(p_tokens=BIRTH_Y_P, t_tokens=BIRTH_Y_T)
    extract_corpus(model, sentences, greedy_cfg)
    assert model.calls["T"] == len(sentences)
    assert model.calls["P"] == len(sentences)


def test_gold_mode_prompt_fidelity(birth_sentence):
    cfg = InferenceConfig(decoding="greedy", prompt_mode="gold")
    model = StubModel(t_tokens=BIRTH_Y_T)
    gold = ["was born on", "was born in", "is in"]
    triplets, trace = extract(model, birth_sentence, cfg, gold_prompt=gold)
    assert model.calls["P"] == 0
    expected = list(serialize_predicates(PredicateSequence.of(gold)).tokens) + \
        list(wrap_sentence(birth_sentence).tokens)
    assert model.sources["T"][0] == expected
    assert trace["gold_prompt"] is True
    assert triplets == BIRTH_TRIPLETS


def test_gold_mode_requires_prompts(birth_sentence):
    cfg = InferenceConfig(decoding="greedy", prompt_mode="gold")
    with pytest.raises(ValueError):
        extract_corpus(StubModel(), [birth_sentence], cfg)


def test_none_mode_sentence_only(birth_sentence):
    cfg = InferenceConfig(decoding="greedy", prompt_mode="none")
    model = StubModel(t_tokens=BIRTH_Y_T)
    extract(model, birth_sentence, cfg)
    assert model.calls["P"] == 0
    assert model.sources["T"][0] == list(wrap_sentence(birth_sentence).tokens)


def test_dedup_collapses_exact_duplicates(birth_sentence):
    dup = serialize_triplets([BIRTH_TRIPLETS[0], BIRTH_TRIPLETS[0]])
    model = StubModel(p_tokens=[], t_tokens=list(dup.tokens))
    triplets, trace = extract(model, birth_sentence, InferenceConfig(decoding="greedy"))
    assert triplets == [BIRTH_TRIPLETS[0]]
    assert trace["dedup_removed"] == 1

    model2 = StubModel(p_tokens=[], t_tokens=list(dup.tokens))
    cfg = InferenceConfig(decoding="greedy", dedup=False)
    triplets2, _ = extract(model2, birth_sentence, cfg)
    assert triplets2 == [BIRTH_TRIPLETS[0], BIRTH_TRIPLETS[0]]


def test_count_mismatch_recorded(birth_sentence, greedy_cfg):
    model = StubModel(p_tokens=BIRTH_Y_P,
                      t_tokens=list(serialize_triplets(BIRTH_TRIPLETS[:1]).tokens))
    _, trace = extract(model, birth_sentence, greedy_cfg)
    assert trace["count_mismatch"] == {"predicates": 3, "triplets": 1}


def test_prompt_variant_subject_gold(birth_instance):
    model = StubModel(t_tokens=BIRTH_Y_T)
    subjects = [t.subject for t in birth_instance.triplets]
    triplets, trace = extract_with_prompt_variant(
        model, birth_instance.sentence, "subject",
        InferenceConfig(decoding="greedy"), gold_prompt=subjects)
    prompt = serialize_predicates(PredicateSequence.of(subjects))
    assert model.sources["T"][0][: len(prompt)] == list(prompt.tokens)
    assert triplets == BIRTH_TRIPLETS


def test_prompt_variant_decoded(birth_sentence):
    model = StubModel(p_tokens=["<rel>", "Shea", "</rel>"], t_tokens=BIRTH_Y_T)
    triplets, trace = extract_with_prompt_variant(
        model, birth_sentence, "object", InferenceConfig(decoding="greedy"))
    assert model.calls["P"] == 1
    assert triplets == BIRTH_TRIPLETS


def test_prompt_variant_rejects_predicate():
    with pytest.raises(ValueError):
        extract_with_prompt_variant(StubModel(), Sentence.from_text("s", "a"), "predicate")


def test_prompt_clamped_to_source_budget(birth_sentence):
    x_p_len = len(birth_sentence.tokens) + 2
    model = StubModel(p_tokens=BIRTH_Y_P, t_tokens=BIRTH_Y_T,
                      max_src_len=x_p_len + 3)
    _, trace = extract(model, birth_sentence, InferenceConfig(decoding="greedy"))
    assert trace["prompt_truncated_to"] == 3
    assert len(model.sources["T"][0]) == x_p_len + 3


def test_extract_never_raises_on_fuzzed_decoder_output(birth_sentence):
    rng = random.Random(17)
    soup = ["<rel>", "</rel>", "<sub>", "</sub>", "<obj>", "</obj>", "<sen>",
            "</sen>", "a", "b", "c"]
    cfg = InferenceConfig(decoding="greedy")
    for _ in range(300):
        model = StubModel(
            p_tokens=[rng.choice(soup) for _ in range(rng.randint(0, 12))],
            t_tokens=[rng.choice(soup) for _ in range(rng.randint(0, 18))])
        triplets, trace = extract(model, birth_sentence, cfg)
        assert isinstance(triplets, list)
        assert trace["triplet_decoder_calls"] == 1


def test_predictions_roundtrip(tmp_path, birth_sentence):
    preds = [Prediction("a", BIRTH_TRIPLETS, ["was born on"], {"k": 1}),
             Prediction("b", [], [], {})]
    path = tmp_path / "pred.jsonl"
    write_predictions(preds, path)
    back = read_predictions(path)
    assert back[0].triplets == BIRTH_TRIPLETS
    assert back[0].predicates == ["was born on"]
    assert back[1].triplets == []


def test_inference_config_validation():
    with pytest.raises(ValueError):
        InferenceConfig(prompt_mode="mystery")
    with pytest.raises(ValueError):
        InferenceConfig(decoding="sampled")
