"""Exact top-k dot-product search over encoded English passages."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus, PairSet
from .encoder import EncoderModel, encode, encode_many

logger = logging.getLogger(__name__)

P2P = "P2P"
P2K = "P2K"
P2PK = "P2PK"
TARGET_MODES = (P2P, P2K, P2PK)

SEP = "[SEP]"
CTX = "[CTX]"


class DenseIndexError(ValueError):
    """Index construction or lookup failure."""


@dataclass(frozen=True)
class SearchResult:
    hits: list[tuple[str, float]]
    truncated: bool = False

    @property
    def ids(self) -> list[str]:
        return [h[0] for h in self.hits]


class DenseIndex:
    """Immutable (ids, vectors) table searched by full scan."""

    def __init__(self, ids: Sequence[str], vectors: np.ndarray, target_mode: str = P2P):
        ids = list(ids)
        vectors = np.array(vectors, dtype=np.float32)
        if target_mode not in TARGET_MODES:
            raise DenseIndexError(f"unknown target mode {target_mode!r}")
        if vectors.ndim != 2 or vectors.shape[0] != len(ids):
            raise DenseIndexError(f"{len(ids)} ids but vectors of shape {vectors.shape}")
        if len(set(ids)) != len(ids):
            raise DenseIndexError("index ids must be unique")
        if not np.all(np.isfinite(vectors)):
            raise DenseIndexError("index vectors must be finite")
        self.ids = ids
        self.vectors = vectors
        self.vectors.setflags(write=False)
        self.target_mode = target_mode
        # position of each row in ascending-id order, for tie-breaking
        order = sorted(range(len(ids)), key=ids.__getitem__)
        self._id_rank = np.empty(len(ids), dtype=np.int64)
        self._id_rank[order] = np.arange(len(ids))
        self._wide = self.vectors.astype(np.float64)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def scores(self, query: np.ndarray) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise DenseIndexError(f"query dimension {q.shape} does not match index dimension {self.dim}")
        # row-wise reduction: identical rows always get bit-identical scores
        return (self._wide * q).sum(axis=1)

    def search_vector(self, query: np.ndarray, k: int) -> SearchResult:
        if k < 1:
            raise DenseIndexError("k must be >= 1")
        s = self.scores(query)
        truncated = k > len(self.ids)
        k = min(k, len(self.ids))
        if k < len(s):
            # every row scoring at least the k-th best survives the cut, ties included
            kth = np.partition(-s, k - 1)[k - 1]
            cand = np.flatnonzero(-s <= kth)
        else:
            cand = np.arange(len(s))
        order = cand[np.lexsort((self._id_rank[cand], -s[cand]))][:k]
        return SearchResult([(self.ids[i], float(s[i])) for i in order], truncated)

    def save(self, path: str | Path) -> None:
        save_index(self, path)


def target_text(passage, mode: str) -> str:
    if mode == P2P:
        return passage.text
    if not passage.keyphrases:
        raise DenseIndexError(f"passage {passage.id!r} has no keyphrases for {mode} indexing")
    kps = f" {SEP} ".join(passage.keyphrases)
    if mode == P2K:
        return kps
    return f"{kps} {CTX} {passage.text}"


def build_index(corpus: Corpus, model: EncoderModel, target_mode: str = P2P) -> DenseIndex:
    if not len(corpus):
        raise DenseIndexError("cannot index an empty corpus")
    if target_mode not in TARGET_MODES:
        raise DenseIndexError(f"unknown target mode {target_mode!r}")
    texts = [target_text(p, target_mode) for p in corpus]
    return DenseIndex(corpus.ids, encode_many(model, texts), target_mode)


def search(index: DenseIndex, query_text: str, model: EncoderModel, k: int) -> SearchResult:
    if model.dim != index.dim:
        raise DenseIndexError(f"model dimension {model.dim} does not match index dimension {index.dim}")
    return index.search_vector(encode(model, query_text), k)


def search_many(index: DenseIndex, texts: Sequence[str], model: EncoderModel, k: int) -> list[SearchResult]:
    if model.dim != index.dim:
        raise DenseIndexError(f"model dimension {model.dim} does not match index dimension {index.dim}")
    if not texts:
        return []
    queries = encode_many(model, texts)
    return [index.search_vector(q, k) for q in queries]


def recall_at_k(
    index: DenseIndex,
    model: EncoderModel,
    eval_pairs: PairSet,
    xx_corpus: Corpus,
    ks: Sequence[int] = (1, 2, 5, 10, 20),
) -> dict[int, float]:
    """Fraction of queries whose gold partner is in the top k, for each k."""
    if not len(eval_pairs):
        raise DenseIndexError("empty evaluation set")
    known = set(index.ids)
    for p in eval_pairs:
        if p.en_id not in known:
            raise DenseIndexError(f"gold partner {p.en_id!r} not in index")
    kmax = max(ks)
    results = search_many(index, [xx_corpus[p.xx_id].text for p in eval_pairs], model, kmax)
    ranks = []
    for p, res in zip(eval_pairs, results):
        ids = res.ids
        ranks.append(ids.index(p.en_id) if p.en_id in ids else kmax)
    ranks_arr = np.array(ranks)
    return {k: float(np.mean(ranks_arr < k)) for k in sorted(ks)}


_MAGIC = b"XLKPIDX1"
_HEADER = struct.Struct("<8sIIII")
_VERSION = 1


def save_index(index: DenseIndex, path: str | Path) -> None:
    mode = TARGET_MODES.index(index.target_mode)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, len(index), index.dim, mode))
        for pid in index.ids:
            b = pid.encode("utf-8")
            fh.write(struct.pack("<I", len(b)) + b)
        fh.write(np.ascontiguousarray(index.vectors, dtype="<f4").tobytes())


def load_index(path: str | Path) -> DenseIndex:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DenseIndexError("index file truncated")
    magic, version, count, dim, mode = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise DenseIndexError("not a version-1 index file")
    off = _HEADER.size
    ids = []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", raw, off)
        off += 4
        ids.append(raw[off : off + n].decode("utf-8"))
        off += n
    if len(raw) - off != 4 * count * dim:
        raise DenseIndexError("index matrix size does not match header")
    vectors = np.frombuffer(raw, dtype="<f4", offset=off).reshape(count, dim).astype(np.float32)
    return DenseIndex(ids, vectors, TARGET_MODES[mode])


def index_from_vectors(ids: Sequence[str], vectors: np.ndarray, target_mode: str = P2P) -> DenseIndex:
    """Wrap externally computed passage embeddings."""
    return DenseIndex(ids, vectors, target_mode)

