"""Retrieval-augmented multilingual keyphrase generation toolkit.

The package trains a hashed character n-gram dual encoder that maps passages
in any language into one vector space, retrieves English passages and their
keyphrases for non-English inputs, builds code-mixed generator inputs, scores
keyphrase predictions, and runs the retriever-generator iterative training
loop that mines pseudo-parallel passage pairs.
"""

from .corpus import Corpus, Pair, PairSet, Passage, load_corpus, load_pairs, normalize_phrase
from .encoder import EncoderModel, FeaturizerConfig, TrainConfig, load_model, save_model, train_retriever
from .index import DenseIndex, build_index, recall_at_k, search
from .metrics import evaluate_predictions, prf_at_m
from .mining import MarginConfig, mine_bitext
from .rgit import RgitConfig, run_rgit

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "DenseIndex",
    "EncoderModel",
    "FeaturizerConfig",
    "MarginConfig",
    "Pair",
    "PairSet",
    "Passage",
    "RgitConfig",
    "TrainConfig",
    "build_index",
    "evaluate_predictions",
    "load_corpus",
    "load_model",
    "load_pairs",
    "mine_bitext",
    "normalize_phrase",
    "prf_at_m",
    "recall_at_k",
    "run_rgit",
    "save_model",
    "search",
    "train_retriever",
]
