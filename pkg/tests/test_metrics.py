import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xlkp.metrics import aggregate, evaluate_predictions, prf_at_m, score_example

phrases = st.lists(st.sampled_from(["a", "b", "c", "d", "e", "A", " b ", "c d"]), max_size=8)


def test_worked_example():
    p, r, f1, ng, npred, nm, flagged = prf_at_m(["a", "b", "c"], ["a", "b", "d", "e"])
    assert (p, r) == (0.5, 2 / 3)
    assert f1 == pytest.approx(4 / 7, abs=1e-15)
    assert (ng, npred, nm, flagged) == (3, 4, 2, False)


@pytest.mark.parametrize(
    "gold, pred, expected",
    [
        (["x", "y"], ["y", "x"], (1.0, 1.0, 1.0, False)),
        (["x"], ["y"], (0.0, 0.0, 0.0, False)),
        (["x"], [], (0.0, 0.0, 0.0, False)),
        ([], ["x"], (0.0, 0.0, 0.0, True)),
        ([], [], (1.0, 1.0, 1.0, True)),
    ],
)
def test_edge_cases(gold, pred, expected):
    p, r, f1, *_, flagged = prf_at_m(gold, pred)
    assert (p, r, f1, flagged) == expected


def test_normalization_applies_before_matching():
    assert prf_at_m(["Teddy  Bear"], ["teddy bear", "TEDDY BEAR"])[:3] == (1.0, 1.0, 1.0)


@given(phrases, phrases)
def test_bounds_and_symmetry(gold, pred):
    p, r, f1, *_ = prf_at_m(gold, pred)
    assert 0 <= p <= 1 and 0 <= r <= 1 and 0 <= f1 <= 1
    assert min(p, r) - 1e-12 <= f1 <= max(p, r) + 1e-12
    p2, r2, f2, *_ = prf_at_m(pred, gold)
    if gold and pred:
        assert (p2, r2) == (r, p) and f2 == pytest.approx(f1, abs=1e-15)


@given(phrases)
def test_order_never_matters(pred):
    assert prf_at_m(["a", "b"], pred) == prf_at_m(["b", "a"], list(reversed(pred)))


def test_aggregate_single_language():
    scores = [score_example("1", "DE", ["a"], ["a"]), score_example("2", "DE", ["a"], ["b"])]
    rep = aggregate(scores)
    assert rep.overall.f1 == rep.per_language["DE"].f1 == 0.5


def test_aggregate_is_unweighted_over_languages():
    scores = [score_example(f"d{i}", "DE", ["a"], ["a", "b", "c", "d"]) for i in range(7)]  # F1 0.4
    scores += [score_example(f"f{i}", "FR", ["a", "b", "c"], ["a", "b"]) for i in range(2)]  # F1 0.8
    rep = aggregate(scores)
    assert rep.per_language["DE"].f1 == pytest.approx(0.4)
    assert rep.per_language["FR"].f1 == pytest.approx(0.8)
    assert rep.overall.f1 == pytest.approx(0.6)
    assert rep.overall.count == 9


def test_aggregate_empty_raises():
    with pytest.raises(ValueError):
        aggregate([])


def test_table_renders_percent_with_average_row():
    rep = aggregate([score_example("1", "KO", ["a", "b", "c"], ["a", "b", "d", "e"])])
    lines = rep.table().splitlines()
    assert lines[1].split() == ["KO", "50.00", "66.67", "57.14", "1"]
    assert lines[-1].startswith("Average")


def test_evaluate_predictions_missing_and_unknown():
    gold = {"1": ("DE", ["a"]), "2": ("DE", ["b"])}
    rep = evaluate_predictions(gold, {"1": ["a"]})
    assert rep.missing_predictions == ["2"]
    assert rep.overall.f1 == 0.5
    with pytest.raises(KeyError):
        evaluate_predictions(gold, {"3": ["x"]})


@given(st.lists(st.tuples(st.sampled_from(["DE", "FR", "ZH"]), phrases, phrases), min_size=1, max_size=30))
@settings(max_examples=50)
def test_aggregate_matches_direct_means(rows):
    scores = [score_example(str(i), lang, g, p) for i, (lang, g, p) in enumerate(rows)]
    rep = aggregate(scores)
    langs = sorted({s.lang for s in scores})
    means = [math.fsum(s.f1 for s in scores if s.lang == lang) / sum(s.lang == lang for s in scores) for lang in langs]
    assert rep.overall.f1 == pytest.approx(sum(means) / len(means), abs=1e-12)
