"""Exact-match keyphrase scoring (P@M, R@M, F1@M) and per-language aggregation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .corpus import normalize_phrase


@dataclass(frozen=True)
class ExampleScore:
    id: str
    lang: str
    precision: float
    recall: float
    f1: float
    num_gold: int
    num_pred: int
    num_matched: int
    flagged: bool = False


def phrase_set(phrases: Iterable[str]) -> set[str]:
    out = {normalize_phrase(p) for p in phrases}
    out.discard("")
    return out


def prf_at_m(gold: Sequence[str], pred: Sequence[str]) -> tuple[float, float, float, int, int, int, bool]:
    """Precision, recall and F1 over the full normalized prediction set.

    Returns ``(p, r, f1, num_gold, num_pred, num_matched, flagged)``.
    `flagged` marks the degenerate empty-gold cases.
    """
    g = phrase_set(gold)
    y = phrase_set(pred)
    if not g and not y:
        return 1.0, 1.0, 1.0, 0, 0, 0, True
    if not g:
        return 0.0, 0.0, 0.0, 0, len(y), 0, True
    if not y:
        return 0.0, 0.0, 0.0, len(g), 0, 0, False
    matched = len(g & y)
    p = matched / len(y)
    r = matched / len(g)
    # equal to 2PR/(P+R), but one correctly rounded division of integers
    f1 = 2 * matched / (len(g) + len(y))
    return p, r, f1, len(g), len(y), matched, False


def score_example(ex_id: str, lang: str, gold: Sequence[str], pred: Sequence[str]) -> ExampleScore:
    return ExampleScore(ex_id, lang, *prf_at_m(gold, pred))


@dataclass
class LangSummary:
    precision: float
    recall: float
    f1: float
    count: int


@dataclass
class EvalReport:
    per_language: dict[str, LangSummary]
    overall: LangSummary
    flagged: list[str] = field(default_factory=list)
    missing_predictions: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "per_language": {k: asdict(v) for k, v in self.per_language.items()},
            "overall": asdict(self.overall),
            "flagged": list(self.flagged),
            "missing_predictions": list(self.missing_predictions),
        }

    def table(self) -> str:
        """Per-language P/R/F1 scaled to percent, two decimals."""
        rows = [f"{'lang':<8}{'P':>8}{'R':>8}{'F1':>8}{'n':>8}"]
        for lang in sorted(self.per_language):
            s = self.per_language[lang]
            rows.append(
                f"{lang:<8}{100 * s.precision:8.2f}{100 * s.recall:8.2f}{100 * s.f1:8.2f}{s.count:8d}"
            )
        o = self.overall
        rows.append(f"{'Average':<8}{100 * o.precision:8.2f}{100 * o.recall:8.2f}{100 * o.f1:8.2f}{o.count:8d}")
        return "\n".join(rows)


def aggregate(scores: Sequence[ExampleScore]) -> EvalReport:
    """Per-language example means, then an unweighted mean over languages."""
    if not scores:
        raise ValueError("cannot aggregate an empty score list")
    by_lang: dict[str, list[ExampleScore]] = {}
    for s in scores:
        by_lang.setdefault(s.lang, []).append(s)
    per_language = {}
    for lang in sorted(by_lang):
        group = by_lang[lang]
        per_language[lang] = LangSummary(
            math.fsum(s.precision for s in group) / len(group),
            math.fsum(s.recall for s in group) / len(group),
            math.fsum(s.f1 for s in group) / len(group),
            len(group),
        )
    n = len(per_language)
    overall = LangSummary(
        math.fsum(s.precision for s in per_language.values()) / n,
        math.fsum(s.recall for s in per_language.values()) / n,
        math.fsum(s.f1 for s in per_language.values()) / n,
        len(scores),
    )
    flagged = [s.id for s in scores if s.flagged]
    return EvalReport(per_language, overall, flagged)


def evaluate_predictions(
    gold: dict[str, tuple[str, Sequence[str]]], predictions: dict[str, Sequence[str]]
) -> EvalReport:
    """Score every gold example; ids absent from `predictions` score as empty.

    `gold` maps id -> (lang, keyphrases). Prediction ids unknown to `gold`
    raise ``KeyError``.
    """
    unknown = sorted(set(predictions).difference(gold))
    if unknown:
        raise KeyError(f"predictions for unknown ids: {unknown[:5]}")
    missing = [i for i in gold if i not in predictions]
    scores = [score_example(i, lang, kps, predictions.get(i, ())) for i, (lang, kps) in gold.items()]
    report = aggregate(scores)
    report.missing_predictions = missing
    return report
