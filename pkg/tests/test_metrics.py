import math

import pytest
import sacrebleu
from hypothesis import given, settings
from hypothesis import strategies as st

from hrm import data as D
from hrm.decoding import RenderTrace, TraceStep
from hrm.metrics import alignment_tally, corpus_bleu, evaluate, slot_error_rate

# every case has at least one matching n-gram of each order, so the scorer's
# zero-count floors never fire and sacrebleu (no smoothing) is an exact oracle
BLEU_SUITE = [
    (["the cat sat on the mat"], [["the cat sat on the mat"]]),
    (["the cat sat on the mat today"], [["the cat sat on the mat"]]),
    (["the cat sat on the mat"], [["a cat sat on the mat", "the cat is on the mat"]]),
    (["blue spice is a pub in the riverside area"],
     [["blue spice is a pub in riverside", "there is a pub called blue spice in the riverside area"]]),
    (["the eagle serves cheap food near the river", "it is a family friendly coffee shop"],
     [["the eagle serves cheap food near the river side"], ["it is a family friendly coffee shop in town"]]),
    (["a b c d e f g", "a b c d"], [["a b c d e x g"], ["a b c d e"]]),
    (["x y z w x y z w"], [["x y z w", "x y z w x"]]),
    (["the the the cat sat on it"], [["the cat sat on it now"]]),
    (["one two three four five", "six seven eight nine ten eleven"],
     [["one two three four five six"], ["zero six seven eight nine ten", "six seven eight nine"]]),
    (["fitzbillies is a cheap coffee shop near the centre"],
     [["fitzbillies is a coffee shop near the centre", "near the centre is fitzbillies a cheap coffee shop"]]),
]


def _sacre(hyps, refs):
    # sacrebleu wants equal-length reference streams; a duplicate reference
    # changes neither the clipped counts nor the closest length
    width = max(len(r) for r in refs)
    streams = [[r[k] if k < len(r) else r[0] for r in refs] for k in range(width)]
    return sacrebleu.corpus_bleu(hyps, streams, tokenize="none", smooth_method="none", force=True).score / 100


@pytest.mark.parametrize("case", range(len(BLEU_SUITE)))
def test_bleu_matches_reference_implementation(case):
    hyps, refs = BLEU_SUITE[case]
    ours = corpus_bleu([h.split() for h in hyps], [[r.split() for r in rs] for rs in refs])
    assert ours == pytest.approx(_sacre(hyps, refs), abs=1e-4)


def test_bleu_zero_order_floor():
    # "the cat" vs "the cat sat": unigram 2/2, bigram 1/1, no trigram or 4-gram candidates.
    # The E2E scorer floors the empty orders at 1e-15 / 1e-9 instead of returning zero.
    expected = math.exp(1 - 3 / 2) * math.exp((2 * math.log(1e-15 / 1e-9)) / 4)
    assert corpus_bleu([["the", "cat"]], [[["the", "cat", "sat"]]]) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(6.0653e-4, abs=1e-8)


def test_bleu_identity_and_disjoint():
    refs = [[["a", "b", "c", "d", "e"]], [["x", "y", "z", "w"]]]
    assert corpus_bleu([r[0] for r in refs], refs) == pytest.approx(1.0)
    assert corpus_bleu([["p", "q", "r", "s"]], [[["a", "b", "c", "d"]]]) < 1e-6


def test_bleu_rejects_empty_and_misaligned():
    with pytest.raises(ValueError):
        corpus_bleu([], [])
    with pytest.raises(ValueError):
        corpus_bleu([["a"]], [])


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(range(len(BLEU_SUITE[4][0]) + len(BLEU_SUITE[8][0])))))
def test_bleu_invariant_to_example_order(order):
    hyps = BLEU_SUITE[4][0] + BLEU_SUITE[8][0]
    refs = BLEU_SUITE[4][1] + BLEU_SUITE[8][1]
    base = corpus_bleu([h.split() for h in hyps], [[r.split() for r in rs] for rs in refs])
    shuffled = corpus_bleu([hyps[k].split() for k in order], [[r.split() for r in refs[k]] for k in order])
    assert shuffled == pytest.approx(base, abs=1e-12)


# -- slot error rate ---------------------------------------------------------

DA4 = D.parse_da("name[blue spice], food[thai], area[riverside], near[the bridge]")


def test_err_all_realized():
    utt = D.tokenize("blue spice serves thai food in riverside near the bridge")
    err, det = slot_error_rate([DA4], [utt])
    assert err == 0.0 and det[0].scored == 4


def test_err_one_missing():
    utt = D.tokenize("blue spice serves thai food near the bridge")
    err, det = slot_error_rate([DA4], [utt])
    assert err == 0.25 and det[0].missing == ["area"]


def test_err_one_missing_one_redundant():
    utt = D.tokenize("blue spice serves thai thai food near the bridge")
    err, det = slot_error_rate([DA4], [utt])
    assert err == 0.5
    assert det[0].missing == ["area"] and det[0].redundant == ["food"]


def test_err_redundancy_allowed_by_references():
    da = D.parse_da("name[x]")
    utt = D.tokenize("x is x")
    assert slot_error_rate([da], [utt], [[utt]])[0] == 0.0
    assert slot_error_rate([da], [utt], [[["x", "is", "good"]]])[0] == 1.0


def test_err_excludes_reworded_slots():
    da = D.parse_da("name[x], familyFriendly[yes]")
    err, det = slot_error_rate([da], [["x", "is", "for", "kids"]], [[["x", "is", "kid", "friendly"]]])
    assert err == 0.0 and det[0].scored == 1 and det[0].excluded == 1


def test_err_pattern_dictionary_scores_indicative_slot():
    da = D.parse_da("name[x], familyFriendly[yes]")
    patterns = {("familyFriendly", ("yes",)): [["kid", "friendly"]]}
    refs = [[["x", "is", "kid", "friendly"]]]
    assert slot_error_rate([da], [["x", "is", "kid", "friendly"]], refs, patterns)[0] == 0.0
    assert slot_error_rate([da], [["x", "is", "nice"]], refs, patterns)[0] == 0.5


def test_err_lexicon_flags_foreign_values():
    da = D.parse_da("name[x], food[thai]")
    err, det = slot_error_rate([da], [D.tokenize("x serves thai and chinese food")],
                               lexicon={"food": [["thai"], ["chinese"]]})
    assert det[0].redundant == ["food"] and err == 0.5


def test_adding_a_satisfied_slot_only_grows_n():
    utt = D.tokenize("blue spice serves thai food near the bridge")
    small = D.parse_da("name[blue spice], area[riverside]")
    big = D.parse_da("name[blue spice], area[riverside], near[the bridge]")
    (e1, d1), (e2, d2) = slot_error_rate([small], [utt]), slot_error_rate([big], [utt])
    assert d2[0].scored == d1[0].scored + 1
    assert len(d2[0].missing) == len(d1[0].missing) and e2 == 1 / 3 and e1 == 1 / 2


# -- alignment ---------------------------------------------------------------

def _step(text, renderer, source=None, slot=None):
    return TraceStep(text, renderer, source, slot, [], [], None, [])


def _trace(da, steps):
    return RenderTrace(da, steps, 0.0)


def test_alignment_all_pointer_claims():
    da = D.parse_da("name[x], food[thai]")
    tr = _trace(da, [_step("x", "P", 1, "name"), _step("serves", "L"), _step("thai", "P", 2, "food"),
                     _step("<eos>", "EOS")])
    tally = alignment_tally([tr], [{"name": [0], "food": [2]}])
    assert tally["claimed"] == 2 and tally["N"] == 2 and tally["p"] == 2 and tally["score"] == 1.0


def test_alignment_language_model_only_claims_nothing():
    da = D.parse_da("name[x], food[thai]")
    tally = alignment_tally([_trace(da, [_step("hello", "L"), _step("<eos>", "EOS")])])
    assert tally["claimed"] == 0 and tally["score"] is None and tally["N"] == 2


def test_alignment_against_gold():
    da = D.parse_da("name[x], food[thai], area[riverside]")
    tr = _trace(da, [_step("x", "P", 1, "name"), _step("serves", "C", 2, "food"), _step("thai", "P", 2, "food"),
                     _step("riverside", "C", 1, "name")])
    gold = {"name": [0], "food": [2], "area": [3]}
    tally = alignment_tally([tr], [gold])
    # name over-claims item 3, food over-claims item 1, area is unclaimed
    assert tally["p"] == 0 and tally["score"] == 0.0
    tally = alignment_tally([tr], [{"name": [0, 3], "food": [1, 2], "area": [3]}])
    assert tally["p"] == 2 and tally["score"] == pytest.approx(2 / 3)


def test_alignment_rejects_foreign_slots():
    da = D.parse_da("name[x]")
    with pytest.raises(ValueError):
        alignment_tally([_trace(da, [_step("thai", "P", 2, "food")])])


def test_evaluate_report_consistent():
    das = [DA4, D.parse_da("name[x]")]
    hyps = [D.tokenize("blue spice serves thai food near the bridge"), ["x", "is", "good"]]
    refs = [[D.tokenize("blue spice serves thai food in riverside near the bridge")], [["x", "is", "good"]]]
    rep = evaluate(das, hyps, refs)
    assert rep.err == pytest.approx(1 / 5)
    assert rep.missing == {"0": ["area"]} and rep.redundant == {}
    assert rep.n_scored_slots == 5 and 0.0 <= rep.bleu <= 1.0
    assert "ERR   0.2000" in rep.text()
