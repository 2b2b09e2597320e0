import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_pair_corpus, random_tagging, random_words
from slu.errors import ValidationError
from slu.metrics import (
    align,
    corpus_wer,
    extract_spans,
    intent_f1,
    slots_edit_f1,
    span_slot_f1,
    wer,
)


def as_tuples(trace):
    return [(op.kind, op.ref_idx, op.hyp_idx) for op in trace.ops]


def test_align_identity():
    trace = align(["a", "b", "c"], ["a", "b", "c"])
    assert trace.cost == 0
    assert all(op.kind == "match" for op in trace.ops)


def test_align_deletion_example():
    trace = align(["show", "me", "flights"], ["show", "flights"])
    assert as_tuples(trace) == [("match", 0, 0), ("del", 1, None), ("match", 2, 1)]
    assert trace.cost == 1


def test_align_empty_reference():
    trace = align([], ["a"])
    assert as_tuples(trace) == [("ins", None, 0)]
    assert trace.cost == 1


def test_align_tie_break_prefers_late_match():
    # two optimal traces exist; the backtrace preference keeps the MATCH last
    trace = align(["a"], ["a", "a"])
    assert as_tuples(trace) == [("ins", None, 0), ("match", 0, 1)]


def test_alignment_indices_cover_both_sides():
    rng = random.Random(5)
    for _ in range(200):
        ref, hyp = random_words(rng), random_words(rng)
        trace = align(ref, hyp)
        assert [op.ref_idx for op in trace.ops if op.ref_idx is not None] == list(range(len(ref)))
        assert [op.hyp_idx for op in trace.ops if op.hyp_idx is not None] == list(range(len(hyp)))
        assert trace.cost == oracles.lev_distance(ref, hyp)


def test_align_matches_exhaustive_canonical_trace():
    rng = random.Random(11)
    for _ in range(150):
        ref = [rng.choice("abc") for _ in range(rng.randint(0, 4))]
        hyp = [rng.choice("abc") for _ in range(rng.randint(0, 4))]
        assert as_tuples(align(ref, hyp)) == oracles.canonical_alignment(ref, hyp)
        assert as_tuples(align(ref, hyp)) == oracles.reference_align(ref, hyp)


def test_wer_examples():
    assert wer(["a", "b", "c"], ["a", "b", "c"]) == 0.0
    assert wer(["show", "me", "flights"], ["show", "flights"]) == pytest.approx(1 / 3)
    assert wer(["a"], ["b", "c"]) == 2.0
    with pytest.raises(ValidationError):
        wer([], ["a"])


def test_wer_cost_symmetry_and_relabel_invariance():
    rng = random.Random(2)
    for _ in range(100):
        a, b = random_words(rng), random_words(rng)
        assert align(a, b).cost == align(b, a).cost
        mapping = {w: f"w{idx}" for idx, w in enumerate(dict.fromkeys(a + b))}
        assert wer(a, b) == wer([mapping[w] for w in a], [mapping[w] for w in b])


def test_slots_edit_f1_perfect_hyps():
    rng = random.Random(3)
    refs = []
    for _ in range(10):
        words = random_words(rng)
        refs.append((words, random_tagging(rng, len(words))))
    if not any(t != "O" for _, slots in refs for t in slots):
        refs[0] = (refs[0][0], ["B-toloc"] + refs[0][1][1:])
    report = slots_edit_f1(refs, refs)
    assert report.f1 == 1.0
    assert all(t.fp == 0 and t.fn == 0 for t in report.per_label.values())


def test_identical_corpus_perfect_under_all_metrics():
    rng = random.Random(7)
    refs = []
    for _ in range(8):
        words = random_words(rng)
        refs.append((words, random_tagging(rng, len(words))))
    refs[0] = (refs[0][0], ["B-toloc"] + refs[0][1][1:])  # at least one span
    assert slots_edit_f1(refs, refs).f1 == 1.0
    assert span_slot_f1(refs, refs).f1 == 1.0
    assert corpus_wer([w for w, _ in refs], [w for w, _ in refs]) == 0.0


def test_slots_edit_f1_substitution_is_fn_plus_fp():
    refs = [(["flights", "to", "boston"], ["O", "O", "toloc"])]
    hyps = [(["flights", "to", "austin"], ["O", "O", "toloc"])]
    report = slots_edit_f1(refs, hyps)
    tally = report.per_label["toloc"]
    assert (tally.tp, tally.fp, tally.fn) == (0, 1, 1)
    assert report.f1 == 0.0


def test_slots_edit_f1_deletion_example():
    refs = [(["to", "boston"], ["O", "toloc"])]
    hyps = [(["to"], ["O"])]
    report = slots_edit_f1(refs, hyps)
    assert report.per_label["toloc"].fn == 1
    assert report.f1 == 0.0


def test_slots_edit_f1_value_match_flag():
    refs = [(["to", "boston"], ["O", "B-toloc"])]
    hyps = [(["to", "austin"], ["O", "B-toloc"])]
    assert slots_edit_f1(refs, hyps).f1 == 0.0
    assert slots_edit_f1(refs, hyps, require_value_match=False).f1 == 1.0


def test_slots_edit_f1_matches_bruteforce_tallies():
    rng = random.Random(17)
    for _ in range(150):
        refs, hyps = random_pair_corpus(rng, rng.randint(1, 4))
        report = slots_edit_f1(refs, hyps)
        expected = oracles.slots_edit_tallies(refs, hyps)
        got = {label: [t.tp, t.fp, t.fn] for label, t in report.per_label.items()}
        assert got == expected
        assert report.f1 == pytest.approx(oracles.f1_from_tallies(expected))


def test_slots_edit_f1_aggregates_over_corpus_not_per_utterance():
    rng = random.Random(23)
    refs, hyps = random_pair_corpus(rng, 6)
    base = slots_edit_f1(refs, hyps)
    order = list(range(len(refs)))
    rng.shuffle(order)
    permuted = slots_edit_f1([refs[i] for i in order], [hyps[i] for i in order])
    assert permuted.f1 == base.f1
    assert {k: vars(v) for k, v in permuted.per_label.items()} == {
        k: vars(v) for k, v in base.per_label.items()
    }


def test_slots_edit_f1_validation():
    with pytest.raises(ValidationError):
        slots_edit_f1([(["a"], ["O", "O"])], [(["a"], ["O"])])
    with pytest.raises(ValidationError):
        slots_edit_f1([(["a"], ["O"])], [])
    empty = slots_edit_f1([], [])
    assert empty.f1 == 0.0 and empty.per_label == {}


def test_span_extraction():
    assert extract_spans(["O", "O"]) == []
    assert extract_spans(["B-x", "I-x", "O", "B-y"]) == [("x", 0, 1), ("y", 3, 3)]
    assert extract_spans(["I-x", "I-y"]) == [("x", 0, 0), ("y", 1, 1)]
    assert extract_spans(["B-x", "B-x"]) == [("x", 0, 0), ("x", 1, 1)]
    # bare labels behave like B- tags
    assert extract_spans(["toloc", "toloc"]) == [("toloc", 0, 0), ("toloc", 1, 1)]


def test_span_extraction_matches_reference():
    rng = random.Random(31)
    for _ in range(300):
        tags = random_tagging(rng, rng.randint(0, 8))
        assert set(extract_spans(tags)) == oracles.reference_spans(tags)


def test_span_slot_f1_examples():
    words = ["flights", "to", "new", "york"]
    ref = [(words, ["O", "O", "B-toloc", "I-toloc"])]
    assert span_slot_f1(ref, ref).f1 == 1.0

    hyp_boundary = [(words, ["O", "O", "B-toloc", "O"])]
    report = span_slot_f1(ref, hyp_boundary)
    assert report.per_label["toloc"].fn == 1
    assert report.per_label["toloc"].fp == 1
    assert report.f1 == 0.0

    hyp_none = [(words, ["O", "O", "O", "O"])]
    report = span_slot_f1(ref, hyp_none)
    assert report.per_label["toloc"].fn == 1
    assert report.f1 == 0.0


def test_span_slot_f1_requires_equal_lengths():
    with pytest.raises(ValidationError, match="slots_edit_f1"):
        span_slot_f1([(["a", "b"], ["O", "O"])], [(["a"], ["O"])])


def test_intent_f1():
    assert intent_f1(["a", "b"], ["a", "b"]) == 1.0
    assert intent_f1(["a", "b", "c", "d"], ["a", "b", "c", "x"]) == 0.75
    with pytest.raises(ValidationError):
        intent_f1(["a"], [])
    with pytest.raises(ValidationError):
        intent_f1([], [])


def test_intent_f1_matches_confusion_matrix_oracle():
    rng = random.Random(41)
    for _ in range(100):
        labels = ["p", "q", "r", "s"]
        refs = [rng.choice(labels) for _ in range(rng.randint(1, 30))]
        hyps = [rng.choice(labels + ["unseen"]) for _ in refs]
        assert intent_f1(refs, hyps) == pytest.approx(oracles.confusion_f1(refs, hyps))
        assert intent_f1(refs, hyps) == pytest.approx(
            sum(r == h for r, h in zip(refs, hyps)) / len(refs)
        )


@given(
    st.lists(st.text("ab", min_size=1, max_size=2), min_size=1, max_size=6),
    st.lists(st.text("ab", min_size=1, max_size=2), max_size=6),
)
@settings(max_examples=200, deadline=None)
def test_wer_matches_distance_oracle(ref, hyp):
    assert wer(ref, hyp) == oracles.lev_distance(ref, hyp) / len(ref)


def test_corpus_wer_is_total_edits_over_total_words():
    refs = [["a", "b"], ["c"]]
    hyps = [["a", "x"], ["c", "d"]]
    assert corpus_wer(refs, hyps) == pytest.approx(2 / 3)
    with pytest.raises(ValidationError):
        corpus_wer([], [])
