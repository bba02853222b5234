"""Multilingual keyphrase corpora: records, pair sets, and line-delimited I/O."""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

logger = logging.getLogger(__name__)

KNOWN_LANGS = frozenset({"EN", "DE", "ES", "FR", "IT", "KO", "ZH"})

PAR = "PAR"
NP = "NP"
PSEUDO = "PSEUDO"
PAIR_KINDS = (PAR, NP, PSEUDO)

_WS = re.compile(r"\s+")
_LANG = re.compile(r"^[A-Z]{2}$")


class CorpusError(ValueError):
    """Raised for malformed corpus or pair files and broken references."""


def normalize_phrase(raw: str) -> str:
    """NFKC-fold, lowercase, and collapse whitespace. Idempotent."""
    # NFKC can emit uppercase (e.g. U+210C -> "H") and lower() can emit
    # non-NFKC sequences, so iterate to a fixed point
    text = unicodedata.normalize("NFKC", raw)
    for _ in range(8):
        folded = unicodedata.normalize("NFKC", text.lower())
        if folded == text:
            break
        text = folded
    return _WS.sub(" ", text).strip()


def check_lang(code: str) -> str:
    """Return `code` if it is a two-letter uppercase code, else raise."""
    if not isinstance(code, str) or not _LANG.match(code):
        raise CorpusError(f"invalid language code {code!r}")
    return code


def is_known_lang(code: str) -> bool:
    return code in KNOWN_LANGS


@dataclass(frozen=True)
class Passage:
    id: str
    lang: str
    text: str
    keyphrases: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "lang": self.lang,
            "text": self.text,
            "keyphrases": list(self.keyphrases),
        }


def dedup_keyphrases(phrases: Iterable[str]) -> tuple[tuple[str, ...], int]:
    """Normalize and drop repeats, keeping first occurrences.

    Returns the kept phrases and the number of dropped duplicates. Phrases
    that normalize to the empty string are dropped as well.
    """
    seen: set[str] = set()
    kept: list[str] = []
    dropped = 0
    for raw in phrases:
        kp = normalize_phrase(raw)
        if not kp or kp in seen:
            dropped += 1
            continue
        seen.add(kp)
        kept.append(kp)
    return tuple(kept), dropped


@dataclass
class Corpus:
    """Id-indexed passages in insertion order."""

    passages: dict[str, Passage] = field(default_factory=dict)
    skipped_lines: int = 0
    duplicate_keyphrases: int = 0
    lang_mismatches: int = 0

    @classmethod
    def from_passages(cls, passages: Iterable[Passage]) -> "Corpus":
        corpus = cls()
        for p in passages:
            corpus.add(p)
        return corpus

    def add(self, passage: Passage) -> None:
        if passage.id in self.passages:
            raise CorpusError(f"duplicate passage id {passage.id!r}")
        if not passage.text.strip():
            raise CorpusError(f"passage {passage.id!r} has empty text")
        self.passages[passage.id] = passage

    def __len__(self) -> int:
        return len(self.passages)

    def __iter__(self) -> Iterator[Passage]:
        return iter(self.passages.values())

    def __contains__(self, pid: str) -> bool:
        return pid in self.passages

    def __getitem__(self, pid: str) -> Passage:
        return self.passages[pid]

    @property
    def ids(self) -> list[str]:
        return list(self.passages)

    @property
    def lang_histogram(self) -> dict[str, int]:
        hist: dict[str, int] = {}
        for p in self.passages.values():
            hist[p.lang] = hist.get(p.lang, 0) + 1
        return hist

    @property
    def unknown_langs(self) -> list[str]:
        return sorted(c for c in self.lang_histogram if not is_known_lang(c))

    def subset(self, ids: Iterable[str]) -> "Corpus":
        return Corpus.from_passages(self.passages[i] for i in ids)


def _parse_passage(rec: dict, lineno: int) -> tuple[Passage, int]:
    if not isinstance(rec, dict):
        raise CorpusError(f"line {lineno}: record is not an object")
    try:
        pid, lang, text = rec["id"], rec["lang"], rec["text"]
    except KeyError as exc:
        raise CorpusError(f"line {lineno}: missing field {exc.args[0]!r}") from None
    kps = rec.get("keyphrases", [])
    if not isinstance(pid, str) or not isinstance(text, str):
        raise CorpusError(f"line {lineno}: id and text must be strings")
    if not isinstance(kps, list) or not all(isinstance(k, str) for k in kps):
        raise CorpusError(f"line {lineno}: keyphrases must be a list of strings")
    if not text.strip():
        raise CorpusError(f"line {lineno}: empty text for id {pid!r}")
    try:
        lang = check_lang(lang)
    except CorpusError as exc:
        raise CorpusError(f"line {lineno}: {exc}") from None
    kept, dropped = dedup_keyphrases(kps)
    return Passage(pid, lang, text, kept), dropped


def iter_records(path: str | Path) -> Iterator[tuple[int, Optional[dict]]]:
    """Yield (line number, parsed record); blank lines yield None."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                yield lineno, None
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from None


def load_corpus(path: str | Path, expected_lang: Optional[str] = None) -> Corpus:
    corpus = Corpus()
    for lineno, rec in iter_records(path):
        if rec is None:
            corpus.skipped_lines += 1
            continue
        try:
            passage, dropped = _parse_passage(rec, lineno)
        except CorpusError as exc:
            raise CorpusError(f"{path}: {exc}") from None
        if passage.id in corpus:
            raise CorpusError(f"{path}: line {lineno}: duplicate id {passage.id!r}")
        corpus.add(passage)
        corpus.duplicate_keyphrases += dropped
        if expected_lang is not None and passage.lang != expected_lang:
            corpus.lang_mismatches += 1
    if corpus.duplicate_keyphrases:
        logger.warning("%s: dropped %d duplicate keyphrases", path, corpus.duplicate_keyphrases)
    if corpus.lang_mismatches:
        logger.warning(
            "%s: %d records not in expected language %s", path, corpus.lang_mismatches, expected_lang
        )
    return corpus


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class Pair:
    xx_id: str
    en_id: Optional[str] = None
    score: Optional[float] = None

    def to_record(self) -> dict:
        rec: dict = {"xx_id": self.xx_id}
        if self.en_id is not None:
            rec["en_id"] = self.en_id
        if self.score is not None:
            rec["score"] = self.score
        return rec


@dataclass
class PairSet:
    kind: str
    pairs: list[Pair] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in PAIR_KINDS:
            raise CorpusError(f"unknown pair kind {self.kind!r}")
        seen: set[tuple[str, Optional[str]]] = set()
        for p in self.pairs:
            self._check(p, seen)

    def _check(self, pair: Pair, seen: set) -> None:
        if self.kind == NP and pair.en_id is not None:
            raise CorpusError(f"NP pair for {pair.xx_id!r} must not carry an en_id")
        if self.kind != NP and pair.en_id is None:
            raise CorpusError(f"{self.kind} pair for {pair.xx_id!r} lacks an en_id")
        key = (pair.xx_id, pair.en_id)
        if key in seen:
            raise CorpusError(f"duplicate pair {key}")
        seen.add(key)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[Pair]:
        return iter(self.pairs)

    @property
    def xx_ids(self) -> list[str]:
        return [p.xx_id for p in self.pairs]

    def partner_map(self) -> dict[str, str]:
        """xx_id -> en_id (first occurrence wins)."""
        out: dict[str, str] = {}
        for p in self.pairs:
            if p.en_id is not None:
                out.setdefault(p.xx_id, p.en_id)
        return out


def validate_pairs(pairs: PairSet, xx_corpus: Corpus, en_corpus: Optional[Corpus] = None) -> None:
    for p in pairs:
        if p.xx_id not in xx_corpus:
            raise CorpusError(f"pair references unknown xx_id {p.xx_id!r}")
        if p.en_id is not None:
            if en_corpus is None:
                raise CorpusError(f"{pairs.kind} pairs need an EN corpus to resolve {p.en_id!r}")
            if p.en_id not in en_corpus:
                raise CorpusError(f"pair references unknown en_id {p.en_id!r}")


def load_pairs(
    path: str | Path, kind: str, xx_corpus: Corpus, en_corpus: Optional[Corpus] = None
) -> PairSet:
    pairs: list[Pair] = []
    seen: set[tuple[str, Optional[str]]] = set()
    for lineno, rec in iter_records(path):
        if rec is None:
            continue
        if not isinstance(rec, dict) or not isinstance(rec.get("xx_id"), str):
            raise CorpusError(f"{path}: line {lineno}: record needs a string xx_id")
        en_id = rec.get("en_id")
        if kind == NP:
            en_id = None
        elif not isinstance(en_id, str):
            raise CorpusError(f"{path}: line {lineno}: {kind} record needs a string en_id")
        score = rec.get("score")
        if score is not None and not isinstance(score, (int, float)):
            raise CorpusError(f"{path}: line {lineno}: score must be a number")
        pair = Pair(rec["xx_id"], en_id, None if score is None else float(score))
        key = (pair.xx_id, pair.en_id)
        if key in seen:
            raise CorpusError(f"{path}: line {lineno}: duplicate pair {key}")
        seen.add(key)
        pairs.append(pair)
    pairset = PairSet(kind, pairs)
    try:
        validate_pairs(pairset, xx_corpus, en_corpus)
    except CorpusError as exc:
        raise CorpusError(f"{path}: {exc}") from None
    return pairset


def save_pairs(pairs: PairSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")


def split_par_np(xx_corpus: Corpus, par: PairSet) -> tuple[list[Passage], list[Passage]]:
    """Partition `xx_corpus` into passages named by `par` and the rest."""
    if par.kind != PAR:
        raise CorpusError(f"expected PAR pairs, got {par.kind}")
    named = set(par.xx_ids)
    missing = named.difference(xx_corpus.passages)
    if missing:
        raise CorpusError(f"PAR pairs reference unknown xx ids: {sorted(missing)[:5]}")
    par_examples = [p for p in xx_corpus if p.id in named]
    np_examples = [p for p in xx_corpus if p.id not in named]
    return par_examples, np_examples
