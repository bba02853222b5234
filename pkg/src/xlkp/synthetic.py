"""Deterministic token-mapped bilingual fixture.

Every XX passage is a word-by-word "translation" of one EN passage through a
fixed random dictionary.  Product-code tokens are shared verbatim across the
two languages (like brand or model names in product listings), so an
untrained encoder sees some lexical overlap but has to learn the dictionary
to disambiguate.  Each EN passage carries present keyphrases (repeated in
the text) and absent ones (category-level concepts never written out); XX
keyphrases are their translations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import NP, PAR, Corpus, Pair, PairSet, Passage


@dataclass
class FixtureConfig:
    seed: int = 0
    lang: str = "KO"
    script: str = "hangul"
    n_en: int = 2000
    n_xx: int = 400
    filler_vocab: int = 100
    concepts: int = 24
    codes: int = 3000
    codes_per_passage: int = 3
    fillers_per_passage: tuple[int, int] = (6, 9)
    present_kps: int = 2
    absent_kps: int = 2


@dataclass
class Fixture:
    en: Corpus
    xx: Corpus
    gold: PairSet  # every XX passage with its EN source
    dictionary: dict[str, str]

    def pairs(self, ids) -> PairSet:
        partner = self.gold.partner_map()
        return PairSet(PAR, [Pair(i, partner[i]) for i in ids])

    def split(self, n_par: int, n_np: int, n_dev: int) -> tuple[PairSet, PairSet, PairSet]:
        """Consecutive slices of the XX ids: seed PAR, NP, held-out dev PAR."""
        ids = self.xx.ids
        if n_par + n_np + n_dev > len(ids):
            raise ValueError("fixture too small for the requested split")
        par = self.pairs(ids[:n_par])
        np_set = PairSet(NP, [Pair(i) for i in ids[n_par : n_par + n_np]])
        dev = self.pairs(ids[n_par + n_np : n_par + n_np + n_dev])
        return par, np_set, dev


def _latin_word(rng: np.random.Generator) -> str:
    return "".join(chr(97 + int(c)) for c in rng.integers(26, size=int(rng.integers(4, 9))))


def _hangul_word(rng: np.random.Generator) -> str:
    return "".join(chr(0xAC00 + int(c)) for c in rng.integers(11172, size=int(rng.integers(2, 4))))


def _code(rng: np.random.Generator) -> str:
    letters = "".join(chr(65 + int(c)) for c in rng.integers(26, size=2))
    return f"{letters}-{int(rng.integers(1000, 10000))}"


def _words(rng: np.random.Generator, n: int, make, taken: set[str]) -> list[str]:
    out: list[str] = []
    while len(out) < n:
        w = make(rng)
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def make_fixture(cfg: FixtureConfig = FixtureConfig()) -> Fixture:
    rng = np.random.default_rng(cfg.seed)
    taken: set[str] = set()
    xx_make = _hangul_word if cfg.script == "hangul" else _latin_word
    en_fill = _words(rng, cfg.filler_vocab, _latin_word, taken)
    en_concepts = _words(rng, cfg.concepts, _latin_word, taken)
    xx_fill = _words(rng, cfg.filler_vocab, xx_make, taken)
    xx_concepts = _words(rng, cfg.concepts, xx_make, taken)
    codes = [_code(rng) for _ in range(cfg.codes)]
    dictionary = dict(zip(en_fill, xx_fill)) | dict(zip(en_concepts, xx_concepts))

    def tr(tok: str) -> str:
        return dictionary.get(tok, tok)

    en_passages = []
    for i in range(cfg.n_en):
        kp_ids = rng.choice(cfg.concepts, size=cfg.present_kps + cfg.absent_kps, replace=False)
        kps = [en_concepts[k] for k in kp_ids]
        present = kps[: cfg.present_kps]
        lo, hi = cfg.fillers_per_passage
        fill = [en_fill[j] for j in rng.choice(cfg.filler_vocab, size=int(rng.integers(lo, hi + 1)), replace=False)]
        own = [codes[int(c)] for c in rng.integers(cfg.codes, size=cfg.codes_per_passage)]
        toks = own + present + present + fill
        order = rng.permutation(len(toks))
        text = " ".join(toks[j] for j in order)
        en_passages.append(Passage(f"en{i:05d}", "EN", text, tuple(kps)))

    src = rng.choice(cfg.n_en, size=cfg.n_xx, replace=False)
    xx_passages = []
    gold = []
    for j, s in enumerate(src):
        e = en_passages[int(s)]
        text = " ".join(tr(t) for t in e.text.split())
        xid = f"{cfg.lang.lower()}{j:05d}"
        xx_passages.append(Passage(xid, cfg.lang, text, tuple(tr(k) for k in e.keyphrases)))
        gold.append(Pair(xid, e.id))
    return Fixture(
        Corpus.from_passages(en_passages),
        Corpus.from_passages(xx_passages),
        PairSet(PAR, gold),
        dictionary,
    )
