import pytest

from xlkp.corpus import NP, PAR
from xlkp.synthetic import FixtureConfig, make_fixture


def test_fixture_is_deterministic():
    a = make_fixture(FixtureConfig(n_en=50, n_xx=20, seed=4))
    b = make_fixture(FixtureConfig(n_en=50, n_xx=20, seed=4))
    assert list(a.en) == list(b.en) and list(a.xx) == list(b.xx) and a.gold == b.gold


def test_xx_passages_are_word_by_word_translations(small_fixture):
    fx = small_fixture
    for pair in list(fx.gold)[:30]:
        en, xx = fx.en[pair.en_id], fx.xx[pair.xx_id]
        assert [fx.dictionary.get(t, t) for t in en.text.split()] == xx.text.split()
        assert tuple(fx.dictionary[k] for k in en.keyphrases) == xx.keyphrases


def test_present_and_absent_keyphrases(small_fixture):
    cfg = FixtureConfig()
    for p in list(small_fixture.en)[:30]:
        words = p.text.split()
        present = [k for k in p.keyphrases if k in words]
        assert len(present) == cfg.present_kps
        assert all(words.count(k) == 2 for k in present)


def test_split_kinds_and_sizes(small_fixture):
    par, np_set, dev = small_fixture.split(10, 100, 50)
    assert (par.kind, np_set.kind, dev.kind) == (PAR, NP, PAR)
    assert (len(par), len(np_set), len(dev)) == (10, 100, 50)
    assert not set(par.xx_ids) & set(dev.xx_ids)
    with pytest.raises(ValueError):
        small_fixture.split(100, 100, 100)
