"""Command-line entry point: one subcommand per pipeline stage.

Option values are resolved as command-line flags, then a JSON config file
(``--config`` or the ``XLKP_CONFIG`` environment variable), then built-in
defaults.  Every run writes its merged configuration next to its outputs so
the run can be repeated with ``--config <that file>``.

Failures print one JSON line ``{"error": <code>, "message": <text>}`` on
stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import __version__
from .corpus import NP, PAR, PSEUDO, Corpus, CorpusError, PairSet, load_corpus, load_pairs, save_corpus, save_pairs
from .encoder import (
    EncoderError,
    FeaturizerConfig,
    TrainConfig,
    encode_many,
    load_model,
    load_vectors,
    save_model,
    train_retriever,
)
from .generation import (
    ExtractiveGenerator,
    FileGenerator,
    FormatError,
    export_codemix_dataset,
    import_predictions,
    save_predictions,
    train_augmented_generator,
)
from .index import TARGET_MODES, DenseIndex, DenseIndexError, build_index, load_index, recall_at_k, save_index
from .metrics import evaluate_predictions
from .mining import MarginConfig, mine_bitext
from .rgit import RECALL_KS, AwaitingPredictions, RgitConfig, run_rgit

logger = logging.getLogger("xlkp")

CONFIG_ENV = "XLKP_CONFIG"


class UsageError(Exception):
    """Bad or missing command-line option."""


class ConfigError(Exception):
    """Config file does not match the option schema."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would print usage and exit 2
        raise UsageError(message)


# --- argument definitions ----------------------------------------------------------


def _common(p: argparse.ArgumentParser, seed: int = 13) -> None:
    p.add_argument("--config", help=f"JSON config file (falls back to ${CONFIG_ENV})")
    p.add_argument("--seed", type=int, default=seed, help="random seed")
    p.add_argument("--threads", type=int, default=1, help="worker cap; any value gives identical outputs")


def _train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("retriever training")
    t, f = TrainConfig(), FeaturizerConfig()
    g.add_argument("--dim", type=int, default=t.dim, help="embedding dimension")
    g.add_argument("--epochs", type=int, default=t.epochs, help="passes over the training pairs")
    g.add_argument("--batch-size", type=int, default=t.batch_size, help="pairs per gradient step")
    g.add_argument("--negatives", type=int, default=t.negatives, help="random EN negatives per positive")
    g.add_argument("--lr", type=float, default=t.lr, help="constant learning rate")
    g.add_argument("--in-batch-negatives", action="store_true", help="also score the other positives of a batch")
    g.add_argument("--buckets", type=int, default=f.num_buckets, help="hashed n-gram buckets (power of two)")
    g.add_argument("--ngram-min", type=int, default=f.ngram_min, help="shortest character n-gram")
    g.add_argument("--ngram-max", type=int, default=f.ngram_max, help="longest character n-gram")
    g.add_argument("--hash-seed", type=int, default=f.hash_seed, help="n-gram hash seed")
    g.add_argument("--no-boundary-markers", action="store_true", help="do not mark word starts and ends")


def build_parser() -> _Parser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="xlkp", description="Retrieval-augmented multilingual keyphrase pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", help="logging level for the stderr log stream")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name: str, func: Callable, help: str, seed: int = 13) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, description=help, formatter_class=fmt)
        _common(p, seed)
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "Validate and normalize a corpus file.")
    p.add_argument("--input", help="input corpus (line-delimited records)")
    p.add_argument("--lang", help="expected language code; mismatches are counted")
    p.add_argument("--out", help="normalized corpus output")

    p = add("train-retriever", cmd_train_retriever, "Train the shared dual encoder on passage pairs.")
    p.add_argument("--xx-corpus", help="target-language corpus")
    p.add_argument("--en-corpus", help="English corpus (also the negative pool)")
    p.add_argument("--pairs", help="training pairs file")
    p.add_argument("--pairs-kind", choices=(PAR, PSEUDO), default=PAR, help="kind of the pairs file")
    p.add_argument("--init-model", help="warm-start from this model file")
    p.add_argument("--out", help="model output file")
    _train_flags(p)

    p = add("build-index", cmd_build_index, "Encode the English corpus into a search index.")
    p.add_argument("--en-corpus", help="English corpus")
    p.add_argument("--model", help="encoder model file")
    p.add_argument("--vectors", help="precomputed passage vectors to index instead of encoding")
    p.add_argument("--mode", choices=TARGET_MODES, default="P2P", help="what each index row encodes")
    p.add_argument("--out", help="index output file")

    p = add("retrieve", cmd_retrieve, "Top-k English passages for every query passage.")
    p.add_argument("--index", help="index file")
    p.add_argument("--model", help="encoder model file")
    p.add_argument("--queries", help="query corpus (target language)")
    p.add_argument("--k", type=int, default=5, help="hits per query")
    p.add_argument("--out", default="-", help="output file, '-' for stdout")

    m = MarginConfig()
    p = add("mine", cmd_mine, "Margin-based mining of pseudo-parallel pairs.")
    p.add_argument("--xx-corpus", help="target-language corpus")
    p.add_argument("--en-corpus", help="English corpus")
    p.add_argument("--model", help="encoder model file")
    p.add_argument("--threshold", type=float, default=m.threshold, help="minimum ratio-margin score")
    p.add_argument("--k", type=int, default=m.k_neighbors, help="neighbours in the margin denominator")
    p.add_argument("--bidirectional", action="store_true", help="keep only mutual best matches")
    p.add_argument("--out", help="pseudo pair output file")

    p = add("format-codemix", cmd_format_codemix, "Export code-mixed generator inputs and targets.")
    p.add_argument("--xx-corpus", help="target-language corpus")
    p.add_argument("--ids", help="pairs file selecting the examples; all passages when omitted")
    p.add_argument("--en-corpus", help="English corpus supplying keyphrase knowledge")
    p.add_argument("--model", help="encoder model file")
    p.add_argument("--m", type=int, default=5, help="retrieved passages per example (0 = no knowledge)")
    p.add_argument("--retrieval-mode", choices=TARGET_MODES, default="P2P", help="index target mode")
    p.add_argument("--out", help="code-mix dataset output")

    p = add("generate", cmd_generate, "Predict keyphrases with a built-in or external generator.")
    p.add_argument("--xx-corpus", help="target-language corpus")
    p.add_argument("--ids", help="pairs file selecting the examples; all passages when omitted")
    p.add_argument("--generator", choices=("extractive", "lexicon", "external"), default="extractive",
                   help="generator kind")
    p.add_argument("--max-kps", type=int, default=5, help="keyphrases per prediction")
    p.add_argument("--par", help="parallel pairs for fitting the lexicon generator")
    p.add_argument("--en-corpus", help="English corpus (lexicon generator)")
    p.add_argument("--model", help="encoder model file (lexicon generator)")
    p.add_argument("--m", type=int, default=5, help="retrieved passages per example (lexicon generator)")
    p.add_argument("--predictions", help="external predictions to import (external generator)")
    p.add_argument("--out", help="predictions output")

    p = add("evaluate", cmd_evaluate, "Score predictions against gold keyphrases.")
    p.add_argument("--gold", help="gold corpus with keyphrases")
    p.add_argument("--pred", help="predictions file")
    p.add_argument("--ids", help="pairs file restricting the gold examples scored")
    p.add_argument("--dev", help="dev pairs for retrieval recall@k (optional)")
    p.add_argument("--en-corpus", help="English corpus (with --dev)")
    p.add_argument("--model", help="encoder model file (with --dev)")
    p.add_argument("--out-dir", help="directory for report.txt, report.json and figures")

    p = add("rgit", cmd_rgit, "Run retriever-generator iterative training.")
    r = RgitConfig()
    p.add_argument("--xx-corpus", help="target-language corpus")
    p.add_argument("--en-corpus", help="English corpus with keyphrases")
    p.add_argument("--par", help="seed parallel pairs")
    p.add_argument("--np", dest="np_pairs", help="non-parallel examples; when omitted, every passage outside par and dev")
    p.add_argument("--dev", help="held-out parallel pairs for recall@k and early stopping")
    p.add_argument("--gold-pairs", help="true partners of non-parallel examples, for label accuracy")
    p.add_argument("--iterations", type=int, default=r.iterations, help="maximum iterations T")
    p.add_argument("--tau", type=float, default=r.tau, help="usefulness gate margin in F1 points")
    p.add_argument("--m", type=int, default=r.m, help="retrieved passages per example")
    p.add_argument("--max-kps", type=int, default=r.max_kps, help="keyphrases per prediction")
    p.add_argument("--generator", choices=("lexicon", "external"), default=r.generator, help="generator kind")
    p.add_argument("--no-early-stop", action="store_true", help="run all iterations regardless of dev recall")
    p.add_argument("--out", help="run directory")
    _train_flags(p)

    p = add("make-fixture", cmd_make_fixture, "Write the synthetic bilingual fixture.", seed=0)
    p.add_argument("--out", help="output directory")
    p.add_argument("--lang", default="KO", help="fixture language code")
    p.add_argument("--script", choices=("hangul", "latin"), default="hangul", help="target-language script")
    p.add_argument("--n-en", type=int, default=2000, help="English passages")
    p.add_argument("--n-par", type=int, default=20, help="seed parallel pairs")
    p.add_argument("--n-np", type=int, default=500, help="non-parallel examples")
    p.add_argument("--n-dev", type=int, default=200, help="held-out parallel pairs")
    return parser


# --- config resolution ------------------------------------------------------------------


def _subparsers(parser: argparse.ArgumentParser) -> dict[str, argparse.ArgumentParser]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return dict(action.choices)
    return {}


def _option_actions(p: argparse.ArgumentParser) -> dict[str, argparse.Action]:
    return {a.dest: a for a in p._actions if a.option_strings and a.dest not in ("help", "config")}


def _coerce(action: argparse.Action, key: str, value):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true or false")
        return value
    if value is None:
        return None
    if action.type is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{key}: expected an integer")
    if action.type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number")
        value = float(value)
    if action.type is None and not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string")
    if action.choices is not None and value not in action.choices:
        raise ConfigError(f"{key}: {value!r} not one of {sorted(action.choices)}")
    return value


def load_config_values(path: str | Path, command: str, sub: argparse.ArgumentParser, all_dests: set[str]) -> dict:
    """Values for `command` from a config file.

    Top-level keys apply to every subcommand that has the option; a nested
    object under a subcommand name overrides them for that subcommand.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    actions = _option_actions(sub)
    values: dict = {}
    nested: dict = {}
    for key, value in raw.items():
        if key == "command":
            continue
        if isinstance(value, dict):
            nested[key] = value
            continue
        dest = key.replace("-", "_")
        if dest not in all_dests:
            raise ConfigError(f"unknown config key {key!r}")
        if dest in actions:
            values[dest] = _coerce(actions[dest], key, value)
    for key, section in nested.items():
        if key != command:
            continue
        for k, v in section.items():
            dest = k.replace("-", "_")
            if dest not in actions:
                raise ConfigError(f"unknown config key {command}.{k}")
            values[dest] = _coerce(actions[dest], f"{command}.{k}", v)
    return values


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    subs = _subparsers(parser)
    command = next((a for a in argv if a in subs), None)
    if command is not None:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(list(argv))
        config_path = known.config or os.environ.get(CONFIG_ENV)
        if config_path:
            if not Path(config_path).is_file():
                raise FileNotFoundError(f"config file not found: {config_path}")
            all_dests = {d for p in subs.values() for d in _option_actions(p)}
            subs[command].set_defaults(**load_config_values(config_path, command, subs[command], all_dests))
    args = parser.parse_args(list(argv))
    if args.command is None:
        raise UsageError("a subcommand is required")
    return args


def effective_config(args: argparse.Namespace) -> dict:
    skip = {"func", "config", "log_level"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def write_config(args: argparse.Namespace, dest: Path) -> None:
    dest.write_text(json.dumps(effective_config(args), indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def _sidecar(out: Path) -> Path:
    return out.with_name(out.name + ".config.json")


def _need(args: argparse.Namespace, *names: str) -> None:
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"missing required option --{n.replace('_', '-')}")


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True, ensure_ascii=False))


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        dim=args.dim,
        epochs=args.epochs,
        batch_size=args.batch_size,
        negatives=args.negatives,
        lr=args.lr,
        seed=args.seed,
        in_batch_negatives=args.in_batch_negatives,
    )


def _featurizer(args) -> FeaturizerConfig:
    return FeaturizerConfig(
        ngram_min=args.ngram_min,
        ngram_max=args.ngram_max,
        num_buckets=args.buckets,
        hash_seed=args.hash_seed,
        boundary_markers=not args.no_boundary_markers,
    )


def _select(corpus: Corpus, ids_path: Optional[str]) -> list:
    if ids_path is None:
        return list(corpus)
    ids = []
    with open(ids_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                ids.append(json.loads(line)["xx_id"])
            except (json.JSONDecodeError, KeyError, TypeError):
                raise CorpusError(f"{ids_path}: line {lineno}: expected a record with an xx_id") from None
    missing = [i for i in ids if i not in corpus]
    if missing:
        raise CorpusError(f"{ids_path}: unknown xx_id {missing[0]!r}")
    return [corpus[i] for i in ids]


def _search_all(index: DenseIndex, model, texts: Sequence[str], k: int, threads: int):
    if model.dim != index.dim:
        raise DenseIndexError(f"model dimension {model.dim} does not match index dimension {index.dim}")
    if not texts:
        return []
    queries = encode_many(model, texts)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda q: index.search_vector(q, k), queries))
    return [index.search_vector(q, k) for q in queries]


def _knowledge(passages, en: Corpus, model, m: int, mode: str, threads: int) -> dict:
    if m == 0:
        return {}
    index = build_index(en, model, mode)
    results = _search_all(index, model, [p.text for p in passages], m, threads)
    return {p.id: [en[h].keyphrases for h in r.ids] for p, r in zip(passages, results)}


# --- subcommands ----------------------------------------------------------------------------


def cmd_ingest(args) -> None:
    _need(args, "input", "out")
    corpus = load_corpus(args.input, expected_lang=args.lang)
    out = Path(args.out)
    save_corpus(corpus, out)
    write_config(args, _sidecar(out))
    _emit({
        "passages": len(corpus),
        "languages": corpus.lang_histogram,
        "unknown_languages": corpus.unknown_langs,
        "duplicate_keyphrases": corpus.duplicate_keyphrases,
        "language_mismatches": corpus.lang_mismatches,
        "skipped_lines": corpus.skipped_lines,
    })


def cmd_train_retriever(args) -> None:
    _need(args, "xx_corpus", "en_corpus", "pairs", "out")
    xx, en = load_corpus(args.xx_corpus), load_corpus(args.en_corpus)
    pairs = load_pairs(args.pairs, args.pairs_kind, xx, en)
    init = load_model(args.init_model) if args.init_model else None
    texts = [(xx[p.xx_id].text, en[p.en_id].text) for p in pairs]
    result = train_retriever(texts, [p.text for p in en], _train_config(args), _featurizer(args), init=init)
    out = Path(args.out)
    save_model(result.model, out)
    write_config(args, _sidecar(out))
    _emit({"pairs": len(pairs), "epoch_losses": result.epoch_losses, "model": str(out)})


def cmd_build_index(args) -> None:
    _need(args, "out")
    if args.vectors:
        ids, vectors = load_vectors(args.vectors)
        index = DenseIndex(ids, vectors, args.mode)
    else:
        _need(args, "en_corpus", "model")
        index = build_index(load_corpus(args.en_corpus), load_model(args.model), args.mode)
    out = Path(args.out)
    save_index(index, out)
    write_config(args, _sidecar(out))
    _emit({"count": len(index), "dim": index.dim, "mode": index.target_mode})


def cmd_retrieve(args) -> None:
    _need(args, "index", "model", "queries")
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    index = load_index(args.index)
    queries = load_corpus(args.queries)
    results = _search_all(index, load_model(args.model), [p.text for p in queries], args.k, args.threads)
    truncated = bool(results) and results[0].truncated
    if truncated:
        logger.warning("k=%d exceeds the index size %d; returning every passage", args.k, len(index))
    lines = []
    for p, r in zip(queries, results):
        rec = {"xx_id": p.id, "hits": [{"en_id": h, "score": s} for h, s in r.hits]}
        if r.truncated:
            rec["truncated"] = True
        lines.append(json.dumps(rec, ensure_ascii=False) + "\n")
    if args.out == "-":
        sys.stdout.write("".join(lines))
    else:
        out = Path(args.out)
        out.write_text("".join(lines), encoding="utf-8")
        write_config(args, _sidecar(out))
        _emit({"queries": len(lines), "k": args.k, "truncated": truncated})


def cmd_mine(args) -> None:
    _need(args, "xx_corpus", "en_corpus", "model", "out")
    cfg = MarginConfig(k_neighbors=args.k, threshold=args.threshold, bidirectional=args.bidirectional)
    pairs = mine_bitext(load_corpus(args.xx_corpus), load_corpus(args.en_corpus), load_model(args.model), cfg)
    out = Path(args.out)
    save_pairs(pairs, out)
    write_config(args, _sidecar(out))
    _emit({"pairs": len(pairs), "threshold": args.threshold})


def cmd_format_codemix(args) -> None:
    _need(args, "xx_corpus", "out")
    if args.m < 0:
        raise UsageError("--m must be >= 0")
    examples = _select(load_corpus(args.xx_corpus), args.ids)
    knowledge = {}
    if args.m > 0:
        _need(args, "en_corpus", "model")
        knowledge = _knowledge(
            examples, load_corpus(args.en_corpus), load_model(args.model), args.m, args.retrieval_mode, args.threads
        )
    out = Path(args.out)
    n = export_codemix_dataset(examples, knowledge, out)
    write_config(args, _sidecar(out))
    _emit({"examples": n, "m": args.m, "retrieval_mode": args.retrieval_mode})


def cmd_generate(args) -> None:
    _need(args, "xx_corpus", "out")
    xx = load_corpus(args.xx_corpus)
    examples = _select(xx, args.ids)
    knowledge: dict = {}
    if args.generator == "extractive":
        gen = ExtractiveGenerator(args.max_kps)
    elif args.generator == "external":
        _need(args, "predictions")
        gen = FileGenerator(import_predictions(args.predictions, xx.ids))
    else:
        _need(args, "par", "en_corpus", "model")
        en = load_corpus(args.en_corpus)
        model = load_model(args.model)
        par = load_pairs(args.par, PAR, xx, en)
        par_passages = [xx[p.xx_id] for p in par]
        par_knowledge = _knowledge(par_passages, en, model, args.m, "P2P", args.threads)
        gen = train_augmented_generator(((p, par_knowledge.get(p.id, [])) for p in par_passages), args.max_kps)
        knowledge = _knowledge(examples, en, model, args.m, "P2P", args.threads)
    preds = {p.id: gen.predict(p, knowledge.get(p.id, [])) for p in examples}
    out = Path(args.out)
    save_predictions(preds, out)
    write_config(args, _sidecar(out))
    summary = {"examples": len(preds), "generator": args.generator}
    if isinstance(gen, FileGenerator):
        summary["missing_predictions"] = len(gen.missing)
    _emit(summary)


def cmd_evaluate(args) -> None:
    _need(args, "gold", "pred")
    gold_corpus = load_corpus(args.gold)
    gold = {p.id: (p.lang, p.keyphrases) for p in _select(gold_corpus, args.ids)}
    preds = {k: v for k, v in import_predictions(args.pred, gold_corpus.ids).items() if k in gold}
    report = evaluate_predictions(gold, preds)
    record = report.to_record()
    if args.dev:
        _need(args, "en_corpus", "model")
        en = load_corpus(args.en_corpus)
        model = load_model(args.model)
        dev = load_pairs(args.dev, PAR, gold_corpus, en)
        recall = recall_at_k(build_index(en, model), model, dev, gold_corpus, RECALL_KS)
        record["retrieval"] = {f"recall@{k}": v for k, v in recall.items()}
    table = report.table()
    print(table)
    if args.out_dir:
        from .plotting import plot_language_f1

        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(table + "\n", encoding="utf-8")
        (out / "report.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        plot_language_f1(report, out / "f1_by_language.png")
        write_config(args, out / "config.json")


def cmd_rgit(args) -> None:
    _need(args, "xx_corpus", "en_corpus", "par", "out")
    xx, en = load_corpus(args.xx_corpus), load_corpus(args.en_corpus)
    par = load_pairs(args.par, PAR, xx, en)
    dev = load_pairs(args.dev, PAR, xx, en) if args.dev else None
    gold = load_pairs(args.gold_pairs, PAR, xx, en) if args.gold_pairs else None
    if args.np_pairs:
        np_examples = [xx[i] for i in load_pairs(args.np_pairs, NP, xx).xx_ids]
    else:
        held = set(par.xx_ids) | (set(dev.xx_ids) if dev else set())
        np_examples = [p for p in xx if p.id not in held]
    cfg = RgitConfig(
        iterations=args.iterations,
        tau=args.tau,
        m=args.m,
        early_stop_on_recall=not args.no_early_stop,
        seed=args.seed,
        max_kps=args.max_kps,
        generator=args.generator,
        threads=args.threads,
        train=_train_config(args),
        featurizer=_featurizer(args),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(args, out / "config.json")
    result = run_rgit(xx, en, par, np_examples, cfg, dev=dev, gold=gold, run_dir=out)

    from .plotting import plot_rgit_trajectory

    records = [log.to_record() for log in result.logs]
    plot_rgit_trajectory(records, out / "trajectory.png", result.final_recall.get(5))
    _emit({
        "iterations_run": len(result.logs),
        "pseudo_final": len(result.pseudo),
        "par_only": result.par_only,
        "final_recall": {f"recall@{k}": v for k, v in result.final_recall.items()},
    })


def cmd_make_fixture(args) -> None:
    from .synthetic import FixtureConfig, make_fixture

    _need(args, "out")
    n_xx = args.n_par + args.n_np + args.n_dev
    fx = make_fixture(FixtureConfig(seed=args.seed, lang=args.lang, script=args.script, n_en=args.n_en, n_xx=n_xx))
    par, np_set, dev = fx.split(args.n_par, args.n_np, args.n_dev)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(fx.en, out / "en.jsonl")
    save_corpus(fx.xx, out / "xx.jsonl")
    save_pairs(fx.gold, out / "gold.jsonl")
    save_pairs(par, out / "par.jsonl")
    save_pairs(np_set, out / "np.jsonl")
    save_pairs(dev, out / "dev.jsonl")
    write_config(args, out / "config.json")
    _emit({"en": len(fx.en), "xx": len(fx.xx), "par": len(par), "np": len(np_set), "dev": len(dev)})


# --- entry point ------------------------------------------------------------------------------


_ERROR_CODES: list[tuple[type, str, int]] = [
    (UsageError, "usage", 2),
    (ConfigError, "config_schema", 2),
    (FileNotFoundError, "missing_file", 1),
    (AwaitingPredictions, "awaiting_predictions", 3),
    (FormatError, "format", 1),
    (CorpusError, "invalid_input", 1),
    (EncoderError, "invalid_input", 1),
    (DenseIndexError, "invalid_input", 1),
    (KeyError, "invalid_input", 1),
    (ValueError, "invalid_input", 1),
    (OSError, "io", 1),
]


def _fail(exc: BaseException) -> int:
    for cls, code, status in _ERROR_CODES:
        if isinstance(exc, cls):
            break
    else:
        code, status = "internal", 1
    if isinstance(exc, KeyError) and exc.args:
        message = str(exc.args[0])
    elif isinstance(exc, FileNotFoundError) and exc.filename:
        message = f"no such file: {exc.filename}"
    else:
        message = str(exc)
    message = " ".join(message.split())
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        args.func(args)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one error line
        logger.debug("command failed", exc_info=True)
        return _fail(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
