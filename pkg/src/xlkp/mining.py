"""Ratio-margin bitext mining between an XX corpus and an EN corpus.

Mining works on cosine similarity, unlike retrieval, which ranks by raw dot
product.  A candidate pair (x, y) is scored as

    cos(x, y) / (mean_k cos(x, NN_k(x)) / 2 + mean_k cos(y, NN_k(y)) / 2)

where NN_k(x) are the k nearest EN neighbours of x and NN_k(y) the k nearest
XX neighbours of y.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import PSEUDO, Corpus, Pair, PairSet
from .encoder import EncoderModel, encode_many

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarginConfig:
    k_neighbors: int = 4
    threshold: float = 1.03
    variant: str = "ratio"
    bidirectional: bool = False

    def __post_init__(self) -> None:
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.variant != "ratio":
            raise ValueError("only the ratio margin is supported")


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def cosine(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.dot(_unit(x), _unit(y)))


def margin_score(
    x: np.ndarray, y: np.ndarray, nn_x: Sequence[float], nn_y: Sequence[float], k: int
) -> tuple[float, bool]:
    """Ratio margin of (x, y) given neighbour cosines; returns (score, degenerate).

    Only the first `k` entries of each neighbour list are used.
    """
    if len(nn_x) < k or len(nn_y) < k:
        raise ValueError(f"need at least {k} neighbour similarities on each side")
    denom = math.fsum(nn_x[:k]) / (2 * k) + math.fsum(nn_y[:k]) / (2 * k)
    if denom <= 0:
        return 0.0, True
    return cosine(x, y) / denom, False


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def _topk_mean(sims: np.ndarray, k: int) -> np.ndarray:
    """Mean of each row's k largest entries."""
    k = min(k, sims.shape[1])
    part = np.partition(sims, sims.shape[1] - k, axis=1)[:, -k:]
    return np.sort(part, axis=1).sum(axis=1) / k


def margin_matrix(xv: np.ndarray, ev: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Full margin-score matrix (xx rows, en columns) plus a degenerate mask."""
    xu = _normalize_rows(np.asarray(xv, dtype=np.float64))
    eu = _normalize_rows(np.asarray(ev, dtype=np.float64))
    cos = xu @ eu.T
    kx = min(k, cos.shape[1])
    ky = min(k, cos.shape[0])
    if kx < k or ky < k:
        logger.warning("k_neighbors=%d exceeds a corpus size; using %d/%d", k, kx, ky)
    avg_x = _topk_mean(cos, kx)
    avg_y = _topk_mean(cos.T, ky)
    denom = avg_x[:, None] / 2 + avg_y[None, :] / 2
    degenerate = denom <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(degenerate, 0.0, cos / np.where(degenerate, 1.0, denom))
    return scores, degenerate


def mine_vectors(
    xx_ids: Sequence[str], xv: np.ndarray, en_ids: Sequence[str], ev: np.ndarray, cfg: MarginConfig = MarginConfig()
) -> PairSet:
    if not len(xx_ids) or not len(en_ids):
        raise ValueError("both corpora must be non-empty")
    scores, degenerate = margin_matrix(xv, ev, cfg.k_neighbors)
    if degenerate.any():
        logger.warning("%d candidate pairs had a non-positive margin denominator", int(degenerate.sum()))
    en_rank = np.argsort(np.argsort(np.asarray(en_ids, dtype=object), kind="stable"), kind="stable")
    xx_rank = np.argsort(np.argsort(np.asarray(xx_ids, dtype=object), kind="stable"), kind="stable")
    # best EN per XX row; ties go to the smaller id
    fwd = np.array([np.lexsort((en_rank, -row))[0] for row in scores])
    if cfg.bidirectional:
        bwd = np.array([np.lexsort((xx_rank, -col))[0] for col in scores.T])
    pairs = []
    for i, j in enumerate(fwd):
        s = float(scores[i, j])
        if s < cfg.threshold:
            continue
        if cfg.bidirectional and bwd[j] != i:
            continue
        pairs.append(Pair(xx_ids[i], en_ids[j], s))
    pairs.sort(key=lambda p: p.xx_id)
    return PairSet(PSEUDO, pairs)


def mine_bitext(
    xx_corpus: Corpus, en_corpus: Corpus, model: EncoderModel, cfg: MarginConfig = MarginConfig()
) -> PairSet:
    """Forward XX->EN margin mining; pairs scoring below the threshold are dropped."""
    if not len(xx_corpus) or not len(en_corpus):
        raise ValueError("both corpora must be non-empty")
    xv = encode_many(model, [p.text for p in xx_corpus])
    ev = encode_many(model, [p.text for p in en_corpus])
    return mine_vectors(xx_corpus.ids, xv, en_corpus.ids, ev, cfg)
