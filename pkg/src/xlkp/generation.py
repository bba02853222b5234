"""Code-mixed sequence formats and the desk-scale keyphrase generators.

Input sequence::

    [ENKPS] kp1 [SEP] kp2 ... [SEP] kpN [CTX] <passage> [XX]

Target sequence::

    [XX] kp1 [SEP] kp2 ... [SEP] kpn

Two generators are provided.  The extractive one scores passage n-grams by
frequency and earliness and ignores retrieved knowledge.  The lexicon one
adds projections of retrieved English keyphrases through EN->XX phrase
co-occurrence counts collected on parallel data.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol, Sequence

from .corpus import Corpus, CorpusError, PairSet, Passage, normalize_phrase

logger = logging.getLogger(__name__)

ENKPS = "[ENKPS]"
SEP = "[SEP]"
CTX = "[CTX]"
CONTROL_TOKENS = (ENKPS, SEP, CTX)

_LANG_TOKEN = re.compile(r"^\[([A-Z]{2})\](?:\s+|$)")
_WS = re.compile(r"\s+")


class FormatError(ValueError):
    pass


def _check_phrase(kp: str) -> str:
    if any(tok in kp for tok in CONTROL_TOKENS):
        raise FormatError(f"keyphrase {kp!r} contains a control token")
    if not kp.strip():
        raise FormatError("empty keyphrase")
    return kp


def assemble_codemix_input(retrieved_kps: Sequence[str], passage_text: str, lang: str) -> str:
    parts = [ENKPS]
    if retrieved_kps:
        parts.append(f" {SEP} ".join(_check_phrase(k) for k in retrieved_kps))
    parts += [CTX, _WS.sub(" ", passage_text).strip(), f"[{lang}]"]
    return " ".join(parts)


def assemble_target(keyphrases: Sequence[str], lang: str) -> str:
    if not keyphrases:
        raise FormatError("target needs at least one keyphrase")
    return f"[{lang}] " + f" {SEP} ".join(_check_phrase(k) for k in keyphrases)


def parse_target(seq: str) -> tuple[str, list[str]]:
    """Inverse of `assemble_target`; empty segments between separators are dropped."""
    m = _LANG_TOKEN.match(seq)
    if not m:
        raise FormatError(f"target does not start with a language token: {seq[:40]!r}")
    body = seq[m.end():]
    kps = [seg.strip() for seg in body.split(SEP)]
    return m.group(1), [k for k in kps if k]


class GeneratorKind(enum.Enum):
    EXTRACTIVE_BASE = "extractive"
    LEXICON_AUGMENTED = "lexicon"
    EXTERNAL_FILE = "external"


# --- candidate scoring ----------------------------------------------------------


def _clean_token(tok: str) -> str:
    start, end = 0, len(tok)
    while start < end and unicodedata.category(tok[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(tok[end - 1]).startswith("P"):
        end -= 1
    return tok[start:end]


@dataclass
class _Cand:
    score: float
    first: float
    length: int


def _passage_candidates(text: str, max_len: int = 4) -> dict[str, _Cand]:
    """n-grams of 1..max_len tokens, never spanning a punctuation-only token."""
    raw = text.split()
    n_tokens = len(raw)
    if not n_tokens:
        return {}
    counts: dict[str, int] = {}
    first: dict[str, int] = {}
    lengths: dict[str, int] = {}
    segment: list[tuple[int, str]] = []
    segments = []
    for pos, tok in enumerate(raw):
        clean = _clean_token(tok)
        if clean:
            segment.append((pos, clean))
        if not clean or clean != tok and unicodedata.category(tok[-1]).startswith("P"):
            # a trailing punctuation mark closes the phrase window
            if segment:
                segments.append(segment)
            segment = []
    if segment:
        segments.append(segment)
    for seg in segments:
        for i in range(len(seg)):
            for n in range(1, max_len + 1):
                if i + n > len(seg):
                    break
                phrase = normalize_phrase(" ".join(t for _, t in seg[i : i + n]))
                if not phrase:
                    continue
                counts[phrase] = counts.get(phrase, 0) + 1
                if phrase not in first:
                    first[phrase] = seg[i][0]
                    lengths[phrase] = n
    return {
        p: _Cand(counts[p] / (1 + first[p] / n_tokens), first[p], lengths[p]) for p in counts
    }


def _rank(cands: Mapping[str, _Cand], max_kps: int) -> list[str]:
    # score desc, earlier first, longer phrase, then lexicographic
    order = sorted(cands.items(), key=lambda kv: (-kv[1].score, kv[1].first, -kv[1].length, kv[0]))
    return [p for p, _ in order[:max_kps]]


def extractive_generate(passage: Passage | str, max_kps: int = 5) -> list[str]:
    """Top n-grams by count / (1 + first_position / num_tokens)."""
    if max_kps < 1:
        raise ValueError("max_kps must be >= 1")
    text = passage.text if isinstance(passage, Passage) else passage
    return _rank(_passage_candidates(text), max_kps)


# --- lexicon ----------------------------------------------------------------------


@dataclass
class PhraseLexicon:
    entries: dict[str, dict[str, int]] = field(default_factory=dict)

    def add(self, en_kps: Iterable[str], xx_kps: Iterable[str]) -> None:
        en = {normalize_phrase(k) for k in en_kps} - {""}
        xx = {normalize_phrase(k) for k in xx_kps} - {""}
        for e in sorted(en):
            row = self.entries.setdefault(e, {})
            for x in sorted(xx):
                row[x] = row.get(x, 0) + 1

    def projections(self, en_kp: str) -> list[tuple[str, int]]:
        row = self.entries.get(normalize_phrase(en_kp), {})
        return sorted(row.items(), key=lambda kv: (-kv[1], kv[0]))

    def __len__(self) -> int:
        return sum(len(r) for r in self.entries.values())

    def to_record(self) -> dict:
        return {e: [[x, c] for x, c in self.projections(e)] for e in sorted(self.entries)}


def lexicon_from_examples(examples: Iterable[tuple[Sequence[str], Sequence[str]]]) -> PhraseLexicon:
    """Count every (EN kp, XX kp) pairing within each example."""
    lex = PhraseLexicon()
    skipped = 0
    for en_kps, xx_kps in examples:
        if not en_kps or not xx_kps:
            skipped += 1
            continue
        lex.add(en_kps, xx_kps)
    if skipped:
        logger.warning("lexicon: skipped %d examples lacking keyphrases on one side", skipped)
    return lex


def build_lexicon(par: PairSet, xx_corpus: Corpus, en_corpus: Corpus) -> PhraseLexicon:
    return lexicon_from_examples(
        (en_corpus[p.en_id].keyphrases, xx_corpus[p.xx_id].keyphrases) for p in par
    )


def augmented_generate(
    passage: Passage | str,
    retrieved_en_kps: Sequence[Sequence[str]],
    lexicon: PhraseLexicon,
    max_kps: int = 5,
) -> list[str]:
    """Extractive candidates merged with lexicon projections of retrieved keyphrases.

    `retrieved_en_kps[r]` holds the keyphrases of the rank-r retrieved
    passage; each projection contributes ``count / (1 + r)``.
    """
    if max_kps < 1:
        raise ValueError("max_kps must be >= 1")
    text = passage.text if isinstance(passage, Passage) else passage
    cands = _passage_candidates(text)
    for rank, group in enumerate(retrieved_en_kps):
        weight = 1.0 / (1 + rank)
        for en_kp in group:
            for xx_kp, count in lexicon.projections(en_kp):
                c = cands.get(xx_kp)
                if c is None:
                    cands[xx_kp] = _Cand(count * weight, math.inf, len(xx_kp.split()))
                else:
                    c.score += count * weight
    return _rank(cands, max_kps)


# --- generator handles ----------------------------------------------------------------


class Generator(Protocol):
    kind: GeneratorKind

    def predict(self, passage: Passage, retrieved: Sequence[Sequence[str]] = ()) -> list[str]: ...


@dataclass
class ExtractiveGenerator:
    max_kps: int = 5
    kind: GeneratorKind = GeneratorKind.EXTRACTIVE_BASE

    def predict(self, passage: Passage, retrieved: Sequence[Sequence[str]] = ()) -> list[str]:
        return extractive_generate(passage, self.max_kps)


@dataclass
class LexiconGenerator:
    lexicon: PhraseLexicon
    max_kps: int = 5
    kind: GeneratorKind = GeneratorKind.LEXICON_AUGMENTED

    def predict(self, passage: Passage, retrieved: Sequence[Sequence[str]] = ()) -> list[str]:
        return augmented_generate(passage, retrieved, self.lexicon, self.max_kps)


@dataclass
class FileGenerator:
    """Replays predictions produced outside this package."""

    predictions: dict[str, list[str]]
    kind: GeneratorKind = GeneratorKind.EXTERNAL_FILE
    missing: list[str] = field(default_factory=list)

    def predict(self, passage: Passage, retrieved: Sequence[Sequence[str]] = ()) -> list[str]:
        if passage.id not in self.predictions:
            self.missing.append(passage.id)
            return []
        return list(self.predictions[passage.id])


def train_base_generator(max_kps: int = 5) -> ExtractiveGenerator:
    return ExtractiveGenerator(max_kps)


def train_augmented_generator(
    examples: Iterable[tuple[Passage, Sequence[Sequence[str]]]], max_kps: int = 5
) -> LexiconGenerator:
    """Fit the lexicon generator on (XX passage with gold keyphrases, retrieved EN keyphrase groups)."""
    lex = lexicon_from_examples(
        ([k for g in groups for k in g], passage.keyphrases) for passage, groups in examples
    )
    return LexiconGenerator(lex, max_kps)


# --- exchange files ------------------------------------------------------------------


def flatten_knowledge(groups: Sequence[Sequence[str]]) -> list[str]:
    """Concatenate retrieved keyphrases in rank order; duplicates are kept."""
    return [k for g in groups for k in g]


def codemix_record(passage: Passage, groups: Sequence[Sequence[str]]) -> dict:
    rec = {
        "id": passage.id,
        "source": assemble_codemix_input(flatten_knowledge(groups), passage.text, passage.lang),
    }
    if passage.keyphrases:
        rec["target"] = assemble_target(passage.keyphrases, passage.lang)
    return rec


def export_codemix_dataset(
    examples: Sequence[Passage], knowledge: Mapping[str, Sequence[Sequence[str]]], path: str | Path
) -> int:
    """Write one {"id", "source", "target"} record per example; returns the count."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in examples:
            fh.write(json.dumps(codemix_record(p, knowledge.get(p.id, ())), ensure_ascii=False) + "\n")
    return len(examples)


def save_predictions(predictions: Mapping[str, Sequence[str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pid, kps in predictions.items():
            fh.write(json.dumps({"id": pid, "keyphrases": list(kps)}, ensure_ascii=False) + "\n")


def import_predictions(path: str | Path, known_ids: Optional[Iterable[str]] = None) -> dict[str, list[str]]:
    """Read {"id", "keyphrases"} records (or codemix records with a "target"); phrases are normalized."""
    known = set(known_ids) if known_ids is not None else None
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or not isinstance(rec.get("id"), str):
                raise CorpusError(f"{path}: line {lineno}: record needs a string id")
            if "keyphrases" in rec:
                kps = rec["keyphrases"]
                if not isinstance(kps, list) or not all(isinstance(k, str) for k in kps):
                    raise CorpusError(f"{path}: line {lineno}: keyphrases must be a list of strings")
            elif isinstance(rec.get("target"), str):
                try:
                    kps = parse_target(rec["target"])[1]
                except FormatError as exc:
                    raise CorpusError(f"{path}: line {lineno}: {exc}") from None
            else:
                raise CorpusError(f"{path}: line {lineno}: record needs keyphrases or a target")
            pid = rec["id"]
            if known is not None and pid not in known:
                raise CorpusError(f"{path}: line {lineno}: unknown id {pid!r}")
            if pid in out:
                raise CorpusError(f"{path}: line {lineno}: duplicate id {pid!r}")
            seen: list[str] = []
            for k in kps:
                n = normalize_phrase(k)
                if n and n not in seen:
                    seen.append(n)
            out[pid] = seen
    return out
