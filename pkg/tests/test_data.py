import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrm import data as D

FIG1_MR = "name[Blue Spice], familyFriendly[yes], priceRange[less than 20]"
FIG1_REF = "The Blue Spice is a low cost venue. It's a family friendly location."


def test_parse_e2e_example():
    da = D.parse_da(FIG1_MR)
    assert da.pairs == (("inform", ("TYPE",)), ("name", ("blue", "spice")), ("familyFriendly", ("yes",)),
                        ("priceRange", ("less", "than", "20")))
    assert da.n == 4


def test_parse_single_slot():
    assert D.parse_da("name[X]").pairs == (("inform", ("TYPE",)), ("name", ("x",)))


def test_parse_duplicate_slot_is_an_error():
    with pytest.raises(D.DAParseError, match="duplicate"):
        D.parse_da("name[A], name[B]")


def test_parse_duplicate_slot_suffix_mode():
    da = D.parse_da("inform(food=a;food=b)", "rnnlg-json", on_duplicate="suffix")
    assert da.slots == ["inform", "food", "food_2"]


@pytest.mark.parametrize("text", ["name[Blue", "name[a] eatType[pub]", "[x]", ""])
def test_parse_malformed_reports_offset(text):
    with pytest.raises(D.DAParseError) as info:
        D.parse_da(text)
    assert info.value.offset is not None


def test_parse_rnnlg():
    da = D.parse_da("inform(name='red victoria';type=hotel;near=\"fisherman's wharf\";kidsallowed)", "rnnlg-json")
    assert da.act_type == "inform"
    assert da.value("name") == ("red", "victoria")
    assert da.value("near") == ("fisherman's", "wharf")
    assert da.value("kidsallowed") == ("?",)


value_text = st.lists(st.sampled_from(["blue", "spice", "20", "less", "than", "pub", "x-y", "£20"]),
                      min_size=1, max_size=4)
slot_names = st.lists(st.sampled_from(["name", "food", "area", "near", "eatType", "priceRange"]),
                      min_size=1, max_size=6, unique=True)


@settings(max_examples=100, deadline=None)
@given(slot_names, st.data(), st.sampled_from(["e2e-csv", "rnnlg-json"]))
def test_parse_serialize_round_trip(slots, data, fmt):
    values = [tuple(data.draw(value_text)) for _ in slots]
    act = "inform" if fmt == "e2e-csv" else data.draw(st.sampled_from(["inform", "confirm", "request"]))
    da = D.DialogueAct.make(act, list(zip(slots, values)))
    assert D.parse_da(D.serialize_da(da, fmt), fmt) == da


def test_dialogue_act_invariants():
    with pytest.raises(ValueError):
        D.DialogueAct((("inform", ("x",)),))
    with pytest.raises(ValueError):
        D.DialogueAct((("inform", ("TYPE",)), ("name", ())))


# -- segmentation ---------------------------------------------------------

def test_segment_paper_example():
    da = D.parse_da(FIG1_MR)
    seg = D.segment_utterance(D.tokenize(FIG1_REF), da)
    expected = ["the", D.Phrase(("blue", "spice"), 1), "is", "a", "low", "cost", "venue", ".", "it's", "a",
                "family", "friendly", "location", "."]
    got = [it if isinstance(it, D.Phrase) else it.token for it in seg.items]
    assert got == expected
    assert seg.tokens() == D.tokenize(FIG1_REF)


def test_segment_without_matches_is_all_words():
    da = D.parse_da("name[zzz]")
    seg = D.segment_utterance(["a", "b"], da)
    assert seg.items == (D.Word("a"), D.Word("b"))


def test_segment_leftmost_longest():
    da = D.DialogueAct.make("inform", [("x", ["a", "b"]), ("y", ["b", "c"])])
    seg = D.segment_utterance(["a", "b", "c"], da)
    assert seg.items == (D.Phrase(("a", "b"), 1), D.Word("c"))


def test_segment_prefers_longer_value():
    da = D.DialogueAct.make("inform", [("x", ["a"]), ("y", ["a", "b"])])
    assert D.segment_utterance(["a", "b"], da).items == (D.Phrase(("a", "b"), 2),)


def test_type_value_never_matches():
    da = D.DialogueAct.make("inform", [("x", ["y"])])
    assert D.segment_utterance(["TYPE"], da).items == (D.Word("TYPE"),)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=12),
       st.lists(st.lists(st.sampled_from("abcd"), min_size=1, max_size=3), min_size=1, max_size=4))
def test_segmentation_concatenation_invariant(tokens, values):
    da = D.DialogueAct.make("inform", [(f"s{k}", v) for k, v in enumerate(values)])
    seg = D.segment_utterance(tokens, da)
    assert seg.tokens() == tokens
    for item in seg.items:
        if isinstance(item, D.Phrase):
            assert da.pairs[item.pair][1] == item.tokens


# -- masking / vocabulary ----------------------------------------------

def _vocab(counts):
    return D.Vocabulary.from_counts(counts)


def test_mask_probabilities():
    vocab = _vocab({"one": 1, "four": 4})
    rng = np.random.default_rng(0)
    n = 10 ** 5
    assert all(D.mask_value_tokens(["new"], vocab, rng) == [D.UNK] for _ in range(100))
    rate4 = np.mean([D.mask_value_tokens(["four"], vocab, rng)[0] == D.UNK for _ in range(n)])
    rate1 = np.mean([D.mask_value_tokens(["one"], vocab, rng)[0] == D.UNK for _ in range(n)])
    assert abs(rate4 - 0.2) < 0.01
    assert abs(rate1 - 0.5) < 0.01


def test_mask_keeps_length():
    vocab = _vocab({"a": 3})
    out = D.mask_value_tokens(["a", "b", "a"], vocab, np.random.default_rng(1))
    assert len(out) == 3


def test_build_vocab_counts_and_min_freq():
    v = D.build_vocab([["a", "a", "b"]])
    assert v.frequency("a") == 2 and v.frequency("b") == 1
    assert list(v.tokens[:4]) == list(D.RESERVED)
    assert v.tokens[4:] == ["a", "b"]
    v2 = D.build_vocab([["a", "a", "b"]], min_freq=2)
    assert v2.id("b") == v2.unk_id
    assert v2.id("a") != v2.unk_id
    assert D.build_vocab([["a", "a", "b"]]).tokens == v.tokens
    with pytest.raises(ValueError):
        D.build_vocab([])


def test_vocab_json_round_trip():
    v = D.build_vocab([["x", "y", "y"]])
    assert D.Vocabulary.from_json(json.loads(json.dumps(v.to_json()))).tokens == v.tokens


# -- delexicalization ---------------------------------------------------------

def test_delexicalize_paper_example():
    da = D.parse_da(FIG1_MR)
    tokens = D.tokenize(FIG1_REF)
    template, slot_map = D.delexicalize(tokens, da)
    assert template[:3] == ["the", "SLOT_name", "is"]
    assert slot_map == {"SLOT_name": ["blue", "spice"]}
    assert D.relexicalize(template, slot_map) == tokens
    assert D.relexicalize(template, da) == tokens


def test_delexicalize_without_matches_is_identity():
    da = D.parse_da("name[zzz]")
    assert D.delexicalize(["a", "b"], da) == (["a", "b"], {})


# -- readers ----------------------------------------------------------------

def test_read_e2e_csv_and_grouping():
    text = "mr,ref\n\"name[A], food[thai]\",A serves thai.\n\"name[A], food[thai]\",Thai at A.\nname[B],B.\n"
    rows = D.read_e2e_csv(io.StringIO(text))
    assert len(rows) == 3
    examples = D.group_examples(rows)
    assert [len(e.refs) for e in examples] == [2, 1]


def test_read_e2e_csv_reports_row_number():
    text = "mr,ref\nname[A],ok\nname[B,broken\n"
    with pytest.raises(D.DataError, match="row 3"):
        D.read_e2e_csv(io.StringIO(text))


def test_read_rnnlg_json():
    text = json.dumps([["inform(name='x';area=north)", "x is in the north .", "x is north"]])
    rows = D.read_rnnlg_json(io.StringIO(text))
    assert rows[0][0].value("area") == ("north",)
    assert rows[0][1] == ["x", "is", "in", "the", "north", "."]


def test_canonical_record_round_trip(tmp_path):
    da = D.parse_da(FIG1_MR)
    tokens = D.tokenize(FIG1_REF)
    rec = D.example_record(da, tokens)
    assert rec["act"] == "inform"
    assert {"kind": "phrase", "tokens": ["blue", "spice"], "pair": 1} in rec["items"]
    D.write_jsonl(tmp_path / "x.jsonl", [rec])
    corpus = D.load_split(tmp_path / "x.jsonl", "train")
    assert corpus.examples[0].da == da
    assert corpus.examples[0].refs == [tokens]


def test_bundled_sample_segments_exactly():
    from hrm.synthetic import load_e2e_sample

    corpus = load_e2e_sample()
    assert len(corpus) == 32
    for da, ref in corpus.instances():
        assert D.segment_utterance(ref, da).tokens() == ref
