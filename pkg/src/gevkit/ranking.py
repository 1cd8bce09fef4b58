"""Orientation-aware model comparison: derived percent columns, ranks, and
report emission, plus the per-metric normalized-mean aggregation.

All printed numbers round half-away-from-zero at the stated decimal places.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .featurestore import VARIANT_LABELS, ModelVariantId
from .metrics_clip import HIGHER_BETTER, LOWER_COST, METRIC_IDS, ScoreSeries

DASH = "—"


def round_half_away(value: float, places: int) -> float:
    """Round with ties going away from zero, as in the printed tables."""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


def _fmt(value: float, places: int) -> str:
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


@dataclass
class ModelSummary:
    """One comparison row; derived fields are None on the baseline."""

    variant: ModelVariantId
    mean: float
    cost: float
    pct_quality: float | None = None
    vs_input: float | None = None
    rank: int | None = None

    def __post_init__(self):
        if self.variant.is_baseline:
            if not (self.pct_quality is None and self.vs_input is None and self.rank is None):
                raise ValueError("baseline row must not carry derived columns")


@dataclass
class ModelComparisonReport:
    metric: str
    summaries: list[ModelSummary]
    rounding: dict[str, int] = field(
        default_factory=lambda: {"mean": 4, "pct_quality": 1, "vs_input": 1}
    )

    def __post_init__(self):
        baselines = [s for s in self.summaries if s.variant.is_baseline]
        if len(baselines) != 1:
            raise ValueError(f"expected exactly one baseline row, got {len(baselines)}")
        ranks = sorted(s.rank for s in self.summaries if not s.variant.is_baseline)
        if ranks != list(range(1, len(self.summaries))):
            raise ValueError(f"ranks must be a permutation of 1..{len(self.summaries) - 1}")


def to_cost(mean: float, orientation: str) -> float:
    """Quality carrier for the percent formulas.

    Under lower_cost the magnitude |mean| is the cost; under higher_better the
    mean itself is carried (no reciprocal — the formulas branch instead).
    """
    if orientation == LOWER_COST:
        if mean == 0.0:
            raise ValueError("zero mean has no magnitude to rank under lower_cost")
        return abs(mean)
    if orientation == HIGHER_BETTER:
        return mean
    raise ValueError(f"unknown orientation {orientation!r}")


def derive_columns(means: dict[str, float], orientation: str) -> list[ModelSummary]:
    """Percent-quality and vs-input columns for one metric.

    pct_quality compares each non-baseline model against the best non-baseline
    model (100.0 for the best); vs_input compares against the baseline, signed
    so that positive always reads "better than the input distribution".
    """
    for label, value in means.items():
        if not math.isfinite(value):
            raise ValueError(f"non-finite mean for {label}")
    variants = {label: ModelVariantId(label) for label in means}
    baseline = [v for v in variants.values() if v.is_baseline]
    if len(baseline) != 1:
        raise ValueError("means must contain exactly one baseline entry (M0)")
    contenders = [label for label in means if not variants[label].is_baseline]
    if not contenders:
        raise ValueError("means must contain at least one non-baseline entry")

    cost = {label: to_cost(means[label], orientation) for label in means}
    m0 = "M0"
    if orientation == HIGHER_BETTER:
        best = max(contenders, key=lambda l: means[l])
        if means[best] == 0.0:
            raise ValueError("best mean is zero; percent-of-best undefined")
        if means[m0] == 0.0:
            raise ValueError("baseline mean is zero; vs_input undefined")
        pct = {l: 100.0 * means[l] / means[best] for l in contenders}
        vs = {l: 100.0 * (means[l] - means[m0]) / means[m0] for l in contenders}
    else:
        best = min(contenders, key=lambda l: cost[l])
        pct = {l: 100.0 * cost[best] / cost[l] for l in contenders}
        vs = {l: 100.0 * (cost[m0] - cost[l]) / cost[m0] for l in contenders}

    rows = [ModelSummary(variants[m0], means[m0], cost[m0])]
    for label in sorted(contenders):
        rows.append(
            ModelSummary(variants[label], means[label], cost[label], pct[label], vs[label])
        )
    return rows


def rank_models(summaries: list[ModelSummary]) -> list[ModelSummary]:
    """Rank non-baseline rows 1..n by descending pct_quality, ties by label."""
    contenders = [s for s in summaries if not s.variant.is_baseline]
    if any(s.pct_quality is None for s in contenders):
        raise ValueError("derive_columns must run before ranking")
    order = sorted(contenders, key=lambda s: (-s.pct_quality, s.variant.label))
    rank_of = {s.variant.label: i + 1 for i, s in enumerate(order)}
    return [
        ModelSummary(
            s.variant,
            s.mean,
            s.cost,
            s.pct_quality,
            s.vs_input,
            rank_of.get(s.variant.label),
        )
        for s in summaries
    ]


def build_report(means: dict[str, float], orientation: str, metric: str) -> ModelComparisonReport:
    """derive_columns + rank_models packaged as an emit-ready report."""
    if metric not in METRIC_IDS:
        raise ValueError(f"unknown metric {metric!r}")
    return ModelComparisonReport(metric, rank_models(derive_columns(means, orientation)))


def _display_cells(report: ModelComparisonReport, s: ModelSummary) -> list[str]:
    r = report.rounding
    if s.variant.is_baseline:
        return [s.variant.label, _fmt(s.mean, r["mean"]), DASH, DASH, DASH]
    vs = _fmt(s.vs_input, r["vs_input"])
    if not vs.startswith("-"):
        vs = "+" + vs
    return [
        s.variant.label,
        _fmt(s.mean, r["mean"]),
        _fmt(s.pct_quality, r["pct_quality"]) + "%",
        vs + "%",
        f"#{s.rank}",
    ]


def emit_report(report: ModelComparisonReport, format: str) -> str:
    """Render as markdown, csv, or json (json round-trips via parse_report)."""
    if format == "markdown":
        lines = [
            "| Model | Mean | % Quality | vs Input | Rank |",
            "| --- | --- | --- | --- | --- |",
        ]
        for s in report.summaries:
            lines.append("| " + " | ".join(_display_cells(report, s)) + " |")
        return "\n".join(lines) + "\n"
    if format == "csv":
        lines = ["model,mean,pct_quality,vs_input,rank"]
        r = report.rounding
        for s in report.summaries:
            if s.variant.is_baseline:
                lines.append(f"{s.variant.label},{_fmt(s.mean, r['mean'])},,,")
            else:
                lines.append(
                    f"{s.variant.label},{_fmt(s.mean, r['mean'])},"
                    f"{_fmt(s.pct_quality, r['pct_quality'])},"
                    f"{_fmt(s.vs_input, r['vs_input'])},{s.rank}"
                )
        return "\n".join(lines) + "\n"
    if format == "json":
        payload = {
            "metric": report.metric,
            "rounding": report.rounding,
            "rows": [
                {
                    "variant": s.variant.label,
                    "mean": s.mean,
                    "cost": s.cost,
                    "pct_quality": s.pct_quality,
                    "vs_input": s.vs_input,
                    "rank": s.rank,
                }
                for s in report.summaries
            ],
        }
        return json.dumps(payload, indent=2) + "\n"
    raise ValueError(f"unsupported format {format!r}")


def parse_report(text: str) -> ModelComparisonReport:
    """Inverse of emit_report(json)."""
    payload = json.loads(text)
    summaries = [
        ModelSummary(
            ModelVariantId(row["variant"]),
            row["mean"],
            row["cost"],
            row["pct_quality"],
            row["vs_input"],
            row["rank"],
        )
        for row in payload["rows"]
    ]
    return ModelComparisonReport(payload["metric"], summaries, dict(payload["rounding"]))


def average_normalized(
    series_by_metric: dict[str, list[ScoreSeries]],
) -> tuple[dict[str, dict[str, float]], str]:
    """Per-variant per-metric means of normalized scores, plus a plotting CSV.

    Every variant within a metric must cover the same image ids; a mismatch
    is an error that names the offending ids.
    """
    means: dict[str, dict[str, float]] = {}
    for metric, series_list in series_by_metric.items():
        if metric not in METRIC_IDS:
            raise ValueError(f"unknown metric {metric!r}")
        if not series_list:
            raise ValueError(f"no series for metric {metric}")
        reference_ids = set(series_list[0].per_image)
        for s in series_list:
            if s.metric != metric:
                raise ValueError(f"series metric {s.metric} filed under {metric}")
            for v in s.per_image.values():
                if not -1e-12 <= v <= 1.0 + 1e-12:
                    raise ValueError(
                        f"series for {s.variant.label} is not normalized: value {v}"
                    )
            ids = set(s.per_image)
            if ids != reference_ids:
                missing = sorted(reference_ids - ids)
                extra = sorted(ids - reference_ids)
                raise ValueError(
                    f"image-id mismatch in metric {metric} for variant "
                    f"{s.variant.label}: missing {missing}, extra {extra}"
                )
            per_metric = means.setdefault(s.variant.label, {})
            if metric in per_metric:
                raise ValueError(
                    f"duplicate series for variant {s.variant.label}, metric {metric}"
                )
            per_metric[metric] = float(
                sum(s.per_image.values()) / len(s.per_image)
            )

    lines = ["variant,metric,mean_normalized"]
    for variant in sorted(means):
        for metric in sorted(means[variant]):
            lines.append(f"{variant},{metric},{means[variant][metric]!r}")
    return means, "\n".join(lines) + "\n"
