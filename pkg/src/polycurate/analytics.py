"""Compute-efficiency and evaluation analytics.

FLOPs accounting (6*N*D, active parameters for MoE), benchmark
aggregation, relative-improvement arithmetic, Pareto frontiers over
(FLOPs, error rate), and per-language data-efficiency tables.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

BENCHMARKS = ("mmlu", "arc", "belebele")


class AnalyticsError(Exception):
    pass


@dataclass(frozen=True)
class ModelComputeRecord:
    model_id: str
    params: float
    tokens: float

    @property
    def flops(self) -> float:
        return flops(self.params, self.tokens)


@dataclass(frozen=True)
class EvalRecord:
    model_id: str
    lang: str
    benchmark: str
    accuracy: float

    def __post_init__(self):
        if self.benchmark not in BENCHMARKS:
            raise AnalyticsError(f"unknown benchmark {self.benchmark!r}")
        if not (0.0 <= self.accuracy <= 1.0):
            raise AnalyticsError(f"accuracy {self.accuracy} outside [0, 1]")


@dataclass(frozen=True)
class ParetoPoint:
    model_id: str
    x: float  # training FLOPs
    y: float  # error rate

    def __post_init__(self):
        if self.x <= 0:
            raise AnalyticsError("x must be positive")
        if not (0.0 <= self.y <= 1.0):
            raise AnalyticsError("y must be in [0, 1]")


@dataclass(frozen=True)
class DataEfficiencyRecord:
    model_id: str
    lang: str
    lang_tokens: float
    score: float

    def __post_init__(self):
        if self.lang_tokens <= 0:
            raise AnalyticsError("lang_tokens must be positive")


def flops(n_params: float, n_tokens: float) -> float:
    """Standard training-compute estimate: 6 * parameters * tokens."""
    if n_params < 0 or n_tokens < 0:
        raise AnalyticsError("params and tokens must be non-negative")
    return 6.0 * n_params * n_tokens


def error_rate(accuracy: float) -> float:
    if not (0.0 <= accuracy <= 1.0):
        raise AnalyticsError(f"accuracy {accuracy} outside [0, 1]")
    return 1.0 - accuracy


def relative_improvement(base: float, new: float) -> float:
    """(new - base) / base."""
    if base <= 0:
        raise AnalyticsError("base must be positive")
    return (new - base) / base


def load_eval_records(fh: IO[str]) -> list[EvalRecord]:
    records = []
    for line in fh:
        line = line.strip()
        if line:
            obj = json.loads(line)
            records.append(EvalRecord(obj["model_id"], obj["lang"], obj["benchmark"],
                                      float(obj["accuracy"])))
    return records


def load_model_cards(fh: IO[str]) -> list[ModelComputeRecord]:
    cards = []
    for line in fh:
        line = line.strip()
        if line:
            obj = json.loads(line)
            cards.append(ModelComputeRecord(obj["model_id"], float(obj["params"]),
                                            float(obj["tokens"])))
    return cards


def aggregate(records: Iterable[EvalRecord], model_id: str, lang: str) -> float:
    """Mean accuracy over the benchmarks available for (model, lang).

    Missing benchmarks are simply excluded; duplicate
    (model, lang, benchmark) entries are an error.
    """
    seen: dict[str, float] = {}
    for rec in records:
        if rec.model_id == model_id and rec.lang == lang:
            if rec.benchmark in seen:
                raise AnalyticsError(
                    f"duplicate record for ({model_id}, {lang}, {rec.benchmark})"
                )
            seen[rec.benchmark] = rec.accuracy
    if not seen:
        raise AnalyticsError(f"no records for ({model_id}, {lang})")
    return sum(seen.values()) / len(seen)


def multilingual_average(records: Iterable[EvalRecord], model_id: str,
                         langs: Sequence[str] | None = None) -> float:
    """Macro-average of per-language aggregates for one model."""
    recs = list(records)
    if langs is None:
        langs = sorted({r.lang for r in recs if r.model_id == model_id})
    per_lang = []
    for lang in langs:
        try:
            per_lang.append(aggregate(recs, model_id, lang))
        except AnalyticsError:
            continue
    if not per_lang:
        raise AnalyticsError(f"no records for model {model_id!r}")
    return sum(per_lang) / len(per_lang)


def pareto_frontier(points: Iterable[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated subset, sorted by x.

    A point survives iff no other point is <= on both axes with at least
    one strict inequality; exact ties on both axes all survive.
    """
    pts = list(points)
    kept = []
    for p in pts:
        dominated = any(
            q.x <= p.x and q.y <= p.y and (q.x < p.x or q.y < p.y) for q in pts
        )
        if not dominated:
            kept.append(p)
    return sorted(kept, key=lambda p: (p.x, p.y, p.model_id))


def efficiency_rows(records: Iterable[DataEfficiencyRecord]) -> list[DataEfficiencyRecord]:
    return sorted(records, key=lambda r: (r.lang, r.lang_tokens, r.model_id))


def write_efficiency_csv(records: Iterable[DataEfficiencyRecord], fh: IO[str]) -> None:
    writer = csv.writer(fh)
    writer.writerow(["lang", "lang_tokens", "model_id", "score"])
    for rec in efficiency_rows(records):
        writer.writerow([rec.lang, repr(rec.lang_tokens), rec.model_id, repr(rec.score)])


def per_lang_tokens(total_tokens: float, multilingual_fraction: float, n_langs: int) -> float:
    """Estimated language-specific tokens under a uniform multilingual split."""
    if n_langs <= 0:
        raise AnalyticsError("n_langs must be positive")
    return total_tokens * multilingual_fraction / n_langs


def eval_points(
    cards: Iterable[ModelComputeRecord],
    records: Iterable[EvalRecord],
    langs: Sequence[str] | None = None,
) -> list[ParetoPoint]:
    """Join model cards with multilingual-average error rates."""
    recs = list(records)
    models_with_evals = {r.model_id for r in recs}
    points = []
    for card in cards:
        if card.model_id not in models_with_evals:
            continue
        acc = multilingual_average(recs, card.model_id, langs)
        points.append(ParetoPoint(card.model_id, card.flops, error_rate(acc)))
    return points


def improvement_table(
    records: Iterable[EvalRecord],
    base_model: str,
    new_model: str,
    langs: Sequence[str],
) -> dict:
    """Per-language relative improvements of one model over another, plus
    their mean (the mean of elementwise relative deltas)."""
    recs = list(records)
    per_lang = {}
    for lang in langs:
        base = aggregate(recs, base_model, lang)
        new = aggregate(recs, new_model, lang)
        per_lang[lang] = relative_improvement(base, new)
    mean = sum(per_lang.values()) / len(per_lang) if per_lang else 0.0
    return {"per_lang": per_lang, "mean": mean}
