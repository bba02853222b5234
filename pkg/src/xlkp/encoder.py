"""Hashed character n-gram features and the shared linear dual encoder.

One projection matrix of shape ``(d, num_buckets)`` serves as both the query
encoder and the passage encoder.  Relevance is the raw dot product of the two
projections, and training minimises the negative log-likelihood of the
positive passage against sampled negatives.  The model is linear, so the
gradient is written out by hand:

    s_j = (W x)^T (W y_j),   c = softmax(s) - e_0
    dL/dW = (W x)(sum_j c_j y_j)^T + (sum_j c_j W y_j) x^T
"""

from __future__ import annotations

import io
import logging
import struct
import unicodedata
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.utils import murmurhash3_32

logger = logging.getLogger(__name__)

BOW = "␂"
EOW = "␃"


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class FeaturizerConfig:
    ngram_min: int = 2
    ngram_max: int = 4
    num_buckets: int = 32768
    hash_seed: int = 0
    boundary_markers: bool = True

    def __post_init__(self) -> None:
        if not 1 <= self.ngram_min <= self.ngram_max <= 8:
            raise EncoderError(f"need 1 <= ngram_min <= ngram_max <= 8, got {self.ngram_min}, {self.ngram_max}")
        n = self.num_buckets
        if n < 64 or n & (n - 1):
            raise EncoderError(f"num_buckets must be a power of two >= 64, got {n}")
        if not 0 <= self.hash_seed < 2**32:
            raise EncoderError("hash_seed must fit in 32 bits")


@dataclass(frozen=True)
class SparseVec:
    indices: np.ndarray
    values: np.ndarray

    def dense(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        out[self.indices] = self.values
        return out


def _tokens(text: str) -> list[str]:
    return unicodedata.normalize("NFKC", text).lower().split()


@lru_cache(maxsize=1 << 18)
def _word_counts(cfg: FeaturizerConfig, word: str) -> tuple[tuple[int, int], ...]:
    unit = f"{BOW}{word}{EOW}" if cfg.boundary_markers else word
    counts: dict[int, int] = {}
    mask = cfg.num_buckets - 1
    for n in range(cfg.ngram_min, cfg.ngram_max + 1):
        for i in range(len(unit) - n + 1):
            b = murmurhash3_32(unit[i : i + n], seed=cfg.hash_seed, positive=True) & mask
            counts[b] = counts.get(b, 0) + 1
    return tuple(sorted(counts.items()))


def featurize(cfg: FeaturizerConfig, text: str) -> SparseVec:
    """L2-normalised bucket counts of per-word character n-grams."""
    words = _tokens(text)
    if not words:
        raise EncoderError("cannot featurize empty text")
    counts: dict[int, float] = {}
    for w in words:
        for b, c in _word_counts(cfg, w):
            counts[b] = counts.get(b, 0) + c
    if not counts:
        # every word shorter than ngram_min
        return SparseVec(np.zeros(0, dtype=np.int64), np.zeros(0))
    idx = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
    vals = np.array([counts[i] for i in idx.tolist()], dtype=np.float64)
    vals /= np.sqrt(np.dot(vals, vals))
    return SparseVec(idx, vals)


def featurize_many(cfg: FeaturizerConfig, texts: Sequence[str]) -> sp.csr_matrix:
    indptr = [0]
    indices: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for t in texts:
        v = featurize(cfg, t)
        indices.append(v.indices)
        data.append(v.values)
        indptr.append(indptr[-1] + len(v.indices))
    return sp.csr_matrix(
        (
            np.concatenate(data) if data else np.zeros(0),
            np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
            np.array(indptr),
        ),
        shape=(len(texts), cfg.num_buckets),
    )


@dataclass
class EncoderModel:
    featurizer: FeaturizerConfig
    projection: np.ndarray

    def __post_init__(self) -> None:
        if self.projection.ndim != 2 or self.projection.shape[1] != self.featurizer.num_buckets:
            raise EncoderError(
                f"projection shape {self.projection.shape} does not match {self.featurizer.num_buckets} buckets"
            )
        if self.projection.shape[0] < 2:
            raise EncoderError("embedding dimension must be >= 2")

    @property
    def dim(self) -> int:
        return self.projection.shape[0]

    @property
    def shared(self) -> bool:
        return True

    # query and passage encoders are the same map over the same weights
    def encode_query(self, text: str) -> np.ndarray:
        return encode(self, text)

    def encode_passage(self, text: str) -> np.ndarray:
        return encode(self, text)

    def copy(self) -> "EncoderModel":
        return EncoderModel(self.featurizer, self.projection.copy())

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        save_model(self, buf)
        return buf.getvalue()


def init_model(cfg: FeaturizerConfig, dim: int = 128, seed: int = 0, scale: Optional[float] = None) -> EncoderModel:
    """Gaussian init; the default scale keeps unit features at unit norm in expectation."""
    rng = np.random.default_rng(seed)
    s = 1.0 / np.sqrt(dim) if scale is None else scale
    w = rng.standard_normal((dim, cfg.num_buckets)) * s
    return EncoderModel(cfg, w.astype(np.float32))


def encode(model: EncoderModel, text: str) -> np.ndarray:
    v = featurize(model.featurizer, text)
    w = model.projection
    return w[:, v.indices].astype(np.float64) @ v.values


def encode_many(model: EncoderModel, texts: Sequence[str]) -> np.ndarray:
    return encode_features(model, featurize_many(model.featurizer, texts))


def encode_features(model: EncoderModel, feats: sp.csr_matrix) -> np.ndarray:
    wt = np.ascontiguousarray(model.projection.T, dtype=np.float64)
    return np.asarray(feats @ wt)


def sim(q: np.ndarray, p: np.ndarray) -> float:
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise EncoderError(f"dimension mismatch: {q.shape} vs {p.shape}")
    return float(np.dot(q, p))


def _log_softmax_at0(scores: np.ndarray) -> tuple[float, np.ndarray]:
    shift = scores.max()
    ex = np.exp(scores - shift)
    z = ex.sum()
    loss = float(np.log(z) + shift - scores[0])
    return max(loss, 0.0), ex / z


def nll_from_scores(scores: Sequence[float]) -> float:
    """-log softmax(scores)[0] with a max shift."""
    return _log_softmax_at0(np.asarray(scores, dtype=np.float64))[0]


def nll_loss(model: EncoderModel, query_text: str, positive_text: str, negative_texts: Sequence[str]) -> float:
    if not negative_texts:
        raise EncoderError("need at least one negative")
    q = encode(model, query_text)
    cands = encode_many(model, [positive_text, *negative_texts])
    return _log_softmax_at0(cands @ q)[0]


def grad_nll(model: EncoderModel, query_text: str, positive_text: str, negative_texts: Sequence[str]) -> np.ndarray:
    """Exact gradient of `nll_loss` with respect to the projection."""
    if not negative_texts:
        raise EncoderError("need at least one negative")
    cfg = model.featurizer
    w = model.projection.astype(np.float64)
    x = featurize(cfg, query_text)
    ys = featurize_many(cfg, [positive_text, *negative_texts])
    q = w[:, x.indices] @ x.values
    p = np.asarray(ys @ w.T)
    _, soft = _log_softmax_at0(p @ q)
    c = soft.copy()
    c[0] -= 1.0
    a = np.asarray(ys.T @ c).ravel()  # sum_j c_j y_j, dense over buckets
    b = p.T @ c  # sum_j c_j p_j
    grad = np.outer(q, a)
    grad[:, x.indices] += np.outer(b, x.values)
    return grad


@dataclass
class TrainConfig:
    dim: int = 128
    epochs: int = 15
    batch_size: int = 32
    negatives: int = 100
    lr: float = 0.1
    seed: int = 13
    in_batch_negatives: bool = False
    init_scale: Optional[float] = None


@dataclass
class TrainResult:
    model: EncoderModel
    epoch_losses: list[float] = field(default_factory=list)


class TrainingDiverged(RuntimeError):
    pass


def _batch_step(
    wt: np.ndarray,
    xq: sp.csr_matrix,
    ycand: sp.csr_matrix,
    cand: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean NLL over a batch and its gradient restricted to touched buckets.

    `cand[i]` lists rows of `ycand` scored for query i; column 0 is the
    positive.  Returns (loss, touched bucket ids, gradient columns).
    """
    bsz = xq.shape[0]
    q = np.asarray(xq @ wt)
    p = np.asarray(ycand @ wt)
    scores = q @ p.T
    s = np.take_along_axis(scores, cand, axis=1)
    shift = s.max(axis=1, keepdims=True)
    ex = np.exp(s - shift)
    z = ex.sum(axis=1, keepdims=True)
    losses = np.log(z[:, 0]) + shift[:, 0] - s[:, 0]
    coef = ex / z
    coef[:, 0] -= 1.0
    coef /= bsz
    cm = np.zeros((bsz, ycand.shape[0]))
    np.add.at(cm, (np.repeat(np.arange(bsz), cand.shape[1]), cand.ravel()), coef.ravel())
    cm_sp = sp.csr_matrix(cm)
    a = (cm_sp @ ycand).tocsr()
    bvec = cm @ p
    cols = np.union1d(a.indices, xq.indices)
    grad = a[:, cols].T @ q + xq[:, cols].T @ bvec
    return float(losses.mean()), cols, np.asarray(grad)


def train_retriever(
    pairs: Sequence[tuple[str, str]],
    en_negative_pool: Sequence[str],
    cfg: TrainConfig = TrainConfig(),
    featurizer: FeaturizerConfig = FeaturizerConfig(),
    init: Optional[EncoderModel] = None,
) -> TrainResult:
    """Mini-batch gradient descent on the sampled-negative NLL.

    `pairs` holds (query text, positive passage text).  Negatives are drawn
    uniformly from `en_negative_pool`, excluding the positive's own text,
    and resampled every epoch.
    """
    if not pairs:
        raise EncoderError("need at least one training pair")
    pool = list(en_negative_pool)
    if len(pool) <= cfg.negatives:
        raise EncoderError(f"negative pool of {len(pool)} is not larger than negatives={cfg.negatives}")
    if init is None:
        model = init_model(featurizer, cfg.dim, cfg.seed, cfg.init_scale)
    else:
        model = init.copy()
        featurizer = model.featurizer
    rng = np.random.default_rng(cfg.seed)
    wt = np.ascontiguousarray(model.projection.T, dtype=np.float64)

    xq_all = featurize_many(featurizer, [q for q, _ in pairs])
    pos_texts = [p for _, p in pairs]
    ypos_all = featurize_many(featurizer, pos_texts)
    ypool = featurize_many(featurizer, pool)
    pool_index: dict[str, list[int]] = {}
    for i, t in enumerate(pool):
        pool_index.setdefault(t, []).append(i)

    n = len(pairs)
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            bsz = len(idx)
            negs = np.empty((bsz, cfg.negatives), dtype=np.int64)
            for r, i in enumerate(idx):
                banned = pool_index.get(pos_texts[i], ())
                draw = rng.choice(len(pool), size=cfg.negatives + len(banned), replace=False)
                if banned:
                    draw = draw[~np.isin(draw, banned)]
                negs[r] = draw[: cfg.negatives]
            uniq, inv = np.unique(negs, return_inverse=True)
            inv = inv.reshape(negs.shape)
            ycand = sp.vstack([ypos_all[idx], ypool[uniq]], format="csr")
            cand = np.concatenate([np.arange(bsz)[:, None], bsz + inv], axis=1)
            if cfg.in_batch_negatives and bsz > 1:
                others = np.array([[j for j in range(bsz) if j != r] for r in range(bsz)])
                cand = np.concatenate([cand, others], axis=1)
            loss, cols, grad = _batch_step(wt, xq_all[idx], ycand, cand)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting {start}")
            if cfg.lr:
                wt[cols] -= cfg.lr * grad
            total += loss * bsz
        losses.append(total / n)
        logger.debug("epoch %d mean loss %.4f", epoch, losses[-1])
    out = EncoderModel(featurizer, wt.T.astype(np.float32) if cfg.lr else model.projection.copy())
    return TrainResult(out, losses)


_MAGIC = b"XLKPENC1"
_HEADER = struct.Struct("<8sIIIIIII")
_VERSION = 1


def save_model(model: EncoderModel, dest) -> None:
    """Little-endian header then the row-major float32 projection."""
    cfg = model.featurizer
    header = _HEADER.pack(
        _MAGIC, _VERSION, model.dim, cfg.num_buckets, cfg.ngram_min, cfg.ngram_max,
        cfg.hash_seed, int(cfg.boundary_markers),
    )
    body = np.ascontiguousarray(model.projection, dtype="<f4").tobytes()
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            fh.write(header + body)
    else:
        dest.write(header + body)


def load_model(src) -> EncoderModel:
    if isinstance(src, (str, Path)):
        raw = Path(src).read_bytes()
    else:
        raw = src.read()
    if len(raw) < _HEADER.size:
        raise EncoderError("model file truncated")
    magic, version, d, buckets, nmin, nmax, seed, flags = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise EncoderError("not an encoder model file")
    if version != _VERSION:
        raise EncoderError(f"unsupported model version {version}")
    expected = _HEADER.size + 4 * d * buckets
    if len(raw) != expected:
        raise EncoderError(f"model file has {len(raw)} bytes, expected {expected}")
    cfg = FeaturizerConfig(nmin, nmax, buckets, seed, bool(flags & 1))
    w = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(d, buckets).astype(np.float32)
    return EncoderModel(cfg, w)


_VEC_MAGIC = b"XLKPVEC1"


def save_vectors(ids: Sequence[str], vectors: np.ndarray, path: str | Path) -> None:
    """Precomputed embeddings: header (magic, dim, count), then (id, float32 row) records."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise EncoderError("vectors must be a (count, dim) matrix matching ids")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sII", _VEC_MAGIC, vectors.shape[1], len(ids)))
        for pid, row in zip(ids, vectors):
            b = pid.encode("utf-8")
            fh.write(struct.pack("<I", len(b)) + b)
            fh.write(np.ascontiguousarray(row, dtype="<f4").tobytes())


def load_vectors(path: str | Path) -> tuple[list[str], np.ndarray]:
    raw = Path(path).read_bytes()
    magic, dim, count = struct.unpack_from("<8sII", raw)
    if magic != _VEC_MAGIC:
        raise EncoderError("not a vector file")
    off = 16
    ids: list[str] = []
    out = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        (ln,) = struct.unpack_from("<I", raw, off)
        off += 4
        ids.append(raw[off : off + ln].decode("utf-8"))
        off += ln
        out[i] = np.frombuffer(raw, dtype="<f4", count=dim, offset=off)
        off += 4 * dim
    return ids, out


def with_projection(model: EncoderModel, projection: np.ndarray) -> EncoderModel:
    return replace(model, projection=projection)
