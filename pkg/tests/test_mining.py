import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xlkp.corpus import Corpus, Passage
from xlkp.encoder import FeaturizerConfig, init_model
from xlkp.mining import MarginConfig, cosine, margin_matrix, margin_score, mine_bitext, mine_vectors


def unit_pair(cos_xy):
    x = np.array([1.0, 0.0])
    y = np.array([cos_xy, math.sqrt(1 - cos_xy**2)])
    return x, y


def test_self_consistent_neighbourhood_scores_one():
    x, y = unit_pair(0.9)
    score, degenerate = margin_score(x, y, [0.9] * 4, [0.9] * 4, 4)
    assert score == pytest.approx(1.0) and not degenerate


def test_direct_formula():
    x, y = unit_pair(0.9)
    score, _ = margin_score(x, y, [0.7, 0.5, 0.6, 0.6], [0.6] * 4, 4)
    assert score == pytest.approx(1.5)


def test_degenerate_denominator():
    x, y = unit_pair(0.5)
    assert margin_score(x, y, [-0.5] * 2, [0.1] * 2, 2) == (0.0, True)


def test_short_neighbour_list_rejected():
    x, y = unit_pair(0.5)
    with pytest.raises(ValueError):
        margin_score(x, y, [0.5], [0.5, 0.5], 2)


def test_config_validation():
    for kwargs in (dict(k_neighbors=0), dict(threshold=0), dict(variant="absolute")):
        with pytest.raises(ValueError):
            MarginConfig(**kwargs)


@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_margin_matrix_scale_invariance(c, seed):
    rng = np.random.default_rng(seed)
    xv, ev = rng.standard_normal((6, 5)), rng.standard_normal((9, 5))
    a, _ = margin_matrix(xv, ev, 3)
    b, _ = margin_matrix(c * xv, c * ev, 3)
    assert np.allclose(a, b, rtol=1e-9, atol=0)


def test_matrix_agrees_with_scalar_formula():
    rng = np.random.default_rng(3)
    xv, ev = rng.standard_normal((5, 4)), rng.standard_normal((7, 4))
    k = 3
    mat, _ = margin_matrix(xv, ev, k)
    cos = np.array([[cosine(x, e) for e in ev] for x in xv])
    for i in range(5):
        for j in range(7):
            nn_x = sorted(cos[i], reverse=True)
            nn_y = sorted(cos[:, j], reverse=True)
            assert mat[i, j] == pytest.approx(margin_score(xv[i], ev[j], nn_x, nn_y, k)[0], rel=1e-12)


def test_copies_pair_with_themselves():
    texts = [f"passage {w} about {v}" for w, v in zip("abcdefgh", ["cats", "dogs", "cars", "tea", "rain", "maps", "jazz", "ink"])]
    xx = Corpus.from_passages(Passage(f"x{i}", "DE", t) for i, t in enumerate(texts))
    en = Corpus.from_passages(Passage(f"e{i}", "EN", t) for i, t in enumerate(texts))
    model = init_model(FeaturizerConfig(), dim=64, seed=0)
    pairs = mine_bitext(xx, en, model, MarginConfig(k_neighbors=2, threshold=1.0))
    assert [(p.xx_id, p.en_id) for p in pairs] == [(f"x{i}", f"e{i}") for i in range(8)]
    assert all(p.score >= 1 for p in pairs)


def test_infinite_threshold_is_empty():
    rng = np.random.default_rng(0)
    out = mine_vectors(["a", "b"], rng.standard_normal((2, 3)), ["c", "d", "e"], rng.standard_normal((3, 3)),
                       MarginConfig(threshold=math.inf))
    assert len(out) == 0


def test_output_sorted_by_xx_id_and_forward_only():
    rng = np.random.default_rng(5)
    xv = rng.standard_normal((6, 4))
    ids = ["f", "a", "e", "b", "d", "c"]
    out = mine_vectors(ids, xv, [f"e{i}" for i in range(6)], xv.copy(), MarginConfig(k_neighbors=2, threshold=0.5))
    assert [p.xx_id for p in out] == sorted(p.xx_id for p in out)


def test_bidirectional_is_subset():
    rng = np.random.default_rng(6)
    xv, ev = rng.standard_normal((20, 4)), rng.standard_normal((15, 4))
    xids, eids = [f"x{i:02d}" for i in range(20)], [f"e{i:02d}" for i in range(15)]
    fwd = mine_vectors(xids, xv, eids, ev, MarginConfig(threshold=0.1))
    both = mine_vectors(xids, xv, eids, ev, MarginConfig(threshold=0.1, bidirectional=True))
    assert set(both.pairs) <= set(fwd.pairs)
    assert len({p.en_id for p in both}) == len(both)


def test_k_larger_than_corpus_is_clamped():
    rng = np.random.default_rng(7)
    out = mine_vectors(["a", "b"], rng.standard_normal((2, 3)), ["c", "d"], rng.standard_normal((2, 3)),
                       MarginConfig(k_neighbors=10, threshold=0.01))
    assert len(out) <= 2
