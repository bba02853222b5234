"""Retriever-generator iterative training.

Each iteration retrains the retriever on the parallel seed pairs plus the
current pseudo pairs, refits the retrieval-augmented generator on the
parallel split, and then rebuilds the pseudo-pair set from scratch.  A
non-parallel example is paired with its top retrieved EN passage when the
augmented generator beats the knowledge-free base generator by more than
`tau` F1 points on that example.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .corpus import PAR, PSEUDO, Corpus, Pair, PairSet, Passage, save_pairs
from .encoder import EncoderModel, FeaturizerConfig, TrainConfig, save_model, train_retriever
from .generation import (
    ExtractiveGenerator,
    FileGenerator,
    Generator,
    export_codemix_dataset,
    import_predictions,
    train_augmented_generator,
)
from .index import P2P, DenseIndex, SearchResult, build_index, recall_at_k, search_many
from .metrics import prf_at_m

logger = logging.getLogger(__name__)

RECALL_KS = (1, 2, 5, 10, 20)


def usefulness_gate(f1_aug: float, f1_base: float, tau: float) -> bool:
    """True when retrieved knowledge improves F1 (percentage points) by more than tau."""
    return f1_aug - f1_base > tau


def recall_early_stop(history: Sequence[float]) -> bool:
    """Stop once the latest recall fails to beat the best earlier one."""
    if len(history) < 2:
        return False
    return history[-1] <= max(history[:-1])


def pseudo_label_accuracy(pseudo: PairSet, gold: PairSet) -> float:
    partner = gold.partner_map()
    judged = [p for p in pseudo if p.xx_id in partner]
    if not judged:
        raise ValueError("no pseudo pair has a gold partner to check against")
    return sum(partner[p.xx_id] == p.en_id for p in judged) / len(judged)


@dataclass
class RgitConfig:
    iterations: int = 6
    tau: float = 5.0
    m: int = 5
    early_stop_on_recall: bool = True
    seed: int = 13
    max_kps: int = 5
    generator: str = "lexicon"
    threads: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    featurizer: FeaturizerConfig = field(default_factory=FeaturizerConfig)

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.generator not in ("lexicon", "external"):
            raise ValueError(f"unknown generator {self.generator!r}")

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{**asdict(self.train), "seed": self.seed})


@dataclass(frozen=True)
class Admission:
    xx_id: str
    en_id: str
    f1_aug: float
    f1_base: float
    score: float
    alternates: tuple[str, ...] = ()

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["alternates"] = list(self.alternates)
        return rec


@dataclass
class IterationLog:
    t: int
    train_pairs: int
    pseudo_count: int
    recall: dict[int, float] = field(default_factory=dict)
    label_accuracy: Optional[float] = None
    stopped: bool = False

    def to_record(self) -> dict:
        rec = {
            "t": self.t,
            "train_pairs": self.train_pairs,
            "pseudo_count": self.pseudo_count,
            "stopped": self.stopped,
        }
        rec.update({f"recall@{k}": v for k, v in sorted(self.recall.items())})
        if self.label_accuracy is not None:
            rec["label_accuracy"] = self.label_accuracy
        return rec


@dataclass
class RgitResult:
    model: EncoderModel
    pseudo: PairSet
    logs: list[IterationLog]
    admissions: list[list[Admission]]
    final_recall: dict[int, float] = field(default_factory=dict)
    par_only: bool = False


class AwaitingPredictions(RuntimeError):
    """Raised when an external generator's predictions have not been imported yet."""

    def __init__(self, missing: Sequence[Path]):
        self.missing = list(missing)
        super().__init__("waiting for external predictions: " + ", ".join(str(p) for p in self.missing))


def training_pairs(pairs: Sequence[Pair], xx_corpus: Corpus, en_corpus: Corpus) -> list[tuple[str, str]]:
    return [(xx_corpus[p.xx_id].text, en_corpus[p.en_id].text) for p in pairs]


def fit_retriever(
    pairs: Sequence[Pair], xx_corpus: Corpus, en_corpus: Corpus, cfg: RgitConfig, init: Optional[EncoderModel] = None
) -> EncoderModel:
    pool = [p.text for p in en_corpus]
    return train_retriever(
        training_pairs(pairs, xx_corpus, en_corpus), pool, cfg.train_config(), cfg.featurizer, init=init
    ).model


def retrieve(
    index: DenseIndex, model: EncoderModel, passages: Sequence[Passage], en_corpus: Corpus, m: int
) -> dict[str, tuple[SearchResult, list[tuple[str, ...]]]]:
    """Top-m hits and their keyphrase groups, in rank order, per passage id."""
    results = search_many(index, [p.text for p in passages], model, m)
    return {p.id: (r, [en_corpus[h].keyphrases for h in r.ids]) for p, r in zip(passages, results)}


def mine_pseudo_pairs(
    np_examples: Sequence[Passage],
    knowledge: dict[str, tuple[SearchResult, list[tuple[str, ...]]]],
    base: Generator,
    augmented: Generator,
    tau: float,
    threads: int = 1,
) -> tuple[PairSet, list[Admission]]:
    """One fresh pass of the usefulness gate over the non-parallel split."""

    def judge(p: Passage) -> Optional[Admission]:
        hits, groups = knowledge[p.id]
        if not hits.hits:
            return None
        f1_base = 100 * prf_at_m(p.keyphrases, base.predict(p))[2]
        f1_aug = 100 * prf_at_m(p.keyphrases, augmented.predict(p, groups))[2]
        if not usefulness_gate(f1_aug, f1_base, tau):
            return None
        top, score = hits.hits[0]
        return Admission(p.id, top, f1_aug, f1_base, score, tuple(hits.ids[1:]))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            judged = list(pool.map(judge, np_examples))
    else:
        judged = [judge(p) for p in np_examples]
    admitted = sorted((a for a in judged if a is not None), key=lambda a: a.xx_id)
    pairs = PairSet(PSEUDO, [Pair(a.xx_id, a.en_id, a.score) for a in admitted])
    return pairs, admitted


class _External:
    """File handshake with generators trained outside this package."""

    def __init__(self, run_dir: Path):
        self.dir = run_dir / "external"
        self.dir.mkdir(parents=True, exist_ok=True)

    def base(self, par: Sequence[Passage], np_examples: Sequence[Passage]) -> FileGenerator:
        export_codemix_dataset(par, {}, self.dir / "base_par.train.jsonl")
        export_codemix_dataset(np_examples, {}, self.dir / "base_np.input.jsonl")
        return self._load(self.dir / "base_np.pred.jsonl", np_examples)

    def augmented(self, t: int, par: Sequence[Passage], np_examples: Sequence[Passage], knowledge) -> FileGenerator:
        groups = {pid: g for pid, (_, g) in knowledge.items()}
        export_codemix_dataset(par, groups, self.dir / f"iter{t}_par.train.jsonl")
        export_codemix_dataset(np_examples, groups, self.dir / f"iter{t}_np.input.jsonl")
        return self._load(self.dir / f"iter{t}_np.pred.jsonl", np_examples)

    @staticmethod
    def _load(path: Path, examples: Sequence[Passage]) -> FileGenerator:
        if not path.exists():
            raise AwaitingPredictions([path])
        return FileGenerator(import_predictions(path, [p.id for p in examples]))


def run_rgit(
    xx_corpus: Corpus,
    en_corpus: Corpus,
    par: PairSet,
    np_examples: Sequence[Passage],
    cfg: RgitConfig = RgitConfig(),
    dev: Optional[PairSet] = None,
    gold: Optional[PairSet] = None,
    run_dir: Optional[str | Path] = None,
    before_mining: Optional[Callable[[int], None]] = None,
) -> RgitResult:
    """Run the full loop and train the final retriever.

    `dev` enables recall logging and early stopping; `gold` (true partners
    of non-parallel examples) enables label-accuracy logging.  With a
    `run_dir`, per-iteration pseudo pairs, retriever snapshots and log
    records are written there.
    """
    if par.kind != PAR or not len(par):
        raise ValueError("need a non-empty PAR pair set")
    out = Path(run_dir) if run_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "log.jsonl").write_text("")
    if cfg.generator == "external" and out is None:
        raise ValueError("external generators need a run directory for the file handshake")
    external = _External(out) if cfg.generator == "external" else None

    par_passages = [xx_corpus[p.xx_id] for p in par]
    base: Generator = (
        external.base(par_passages, np_examples) if external else ExtractiveGenerator(cfg.max_kps)
    )

    pseudo = PairSet(PSEUDO)
    pseudo_by_t: list[PairSet] = [pseudo]
    logs: list[IterationLog] = []
    admissions: list[list[Admission]] = []
    recall_history: list[float] = []
    chosen = pseudo

    for t in range(cfg.iterations):
        train_set = list(par) + list(pseudo)
        r_t = fit_retriever(train_set, xx_corpus, en_corpus, cfg)
        index = build_index(en_corpus, r_t, P2P)
        log = IterationLog(t, len(train_set), 0)
        if dev is not None and len(dev):
            log.recall = recall_at_k(index, r_t, dev, xx_corpus, RECALL_KS)
            recall_history.append(log.recall[5])
        if out is not None:
            save_model(r_t, out / f"retriever_{t}.bin")

        if cfg.early_stop_on_recall and recall_history and recall_early_stop(recall_history):
            log.stopped = True
            logs.append(log)
            _append_log(out, log)
            best = max(range(len(recall_history)), key=lambda i: (recall_history[i], -i))
            chosen = pseudo_by_t[best]
            logger.info("recall@5 did not improve at iteration %d; keeping pseudo set %d", t, best)
            break

        par_knowledge = retrieve(index, r_t, par_passages, en_corpus, cfg.m)
        np_knowledge = retrieve(index, r_t, np_examples, en_corpus, cfg.m)
        if external:
            augmented: Generator = external.augmented(t, par_passages, np_examples, np_knowledge)
        else:
            augmented = train_augmented_generator(
                ((p, par_knowledge[p.id][1]) for p in par_passages), cfg.max_kps
            )

        if before_mining is not None:
            before_mining(t)
        pseudo, admitted = mine_pseudo_pairs(np_examples, np_knowledge, base, augmented, cfg.tau, cfg.threads)
        pseudo_by_t.append(pseudo)
        admissions.append(admitted)
        chosen = pseudo
        log.pseudo_count = len(pseudo)
        if gold is not None and len(pseudo):
            try:
                log.label_accuracy = pseudo_label_accuracy(pseudo, gold)
            except ValueError:
                pass
        logs.append(log)
        _append_log(out, log)
        if out is not None:
            save_pairs(pseudo, out / f"pseudo_{t + 1}.jsonl")
            with open(out / f"admissions_{t + 1}.jsonl", "w", encoding="utf-8") as fh:
                for a in admitted:
                    fh.write(json.dumps(a.to_record()) + "\n")
        logger.info("iteration %d: %d pseudo pairs", t, len(pseudo))

    if not any(len(p) for p in pseudo_by_t):
        logger.warning("no pseudo pairs were admitted in any iteration; returning the PAR-only retriever")
    if len(chosen):
        warm = fit_retriever(list(chosen), xx_corpus, en_corpus, cfg)
        final = fit_retriever(list(par), xx_corpus, en_corpus, cfg, init=warm)
    else:
        final = fit_retriever(list(par), xx_corpus, en_corpus, cfg)
    result = RgitResult(final, chosen, logs, admissions, par_only=not len(chosen))
    if dev is not None and len(dev):
        result.final_recall = recall_at_k(build_index(en_corpus, final, P2P), final, dev, xx_corpus, RECALL_KS)
    if out is not None:
        save_model(final, out / "retriever_final.bin")
        save_pairs(chosen, out / "pseudo_final.jsonl")
        summary = {
            "iterations_run": len(logs),
            "pseudo_final": len(chosen),
            "par_only": result.par_only,
            "final_recall": {f"recall@{k}": v for k, v in result.final_recall.items()},
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return result


def _append_log(out: Optional[Path], log: IterationLog) -> None:
    if out is None:
        return
    with open(out / "log.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(log.to_record(), sort_keys=True) + "\n")
