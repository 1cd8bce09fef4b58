"""Prompt-image alignment scoring and score-series normalization."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .featurestore import ModelVariantId

METRIC_IDS = ("clip", "giqa_gmm", "giqa_knn")
HIGHER_BETTER = "higher_better"
LOWER_COST = "lower_cost"


def default_orientation(metric: str) -> str:
    """clip and giqa_gmm (log-likelihood) read higher-is-better; giqa_knn is a cost."""
    if metric not in METRIC_IDS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {METRIC_IDS}")
    return LOWER_COST if metric == "giqa_knn" else HIGHER_BETTER


@dataclass
class ScoreSeries:
    """Per-image raw scores for one (metric, variant) cell."""

    metric: str
    variant: ModelVariantId
    per_image: dict[str, float]
    orientation: str = ""

    def __post_init__(self):
        if self.metric not in METRIC_IDS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not self.orientation:
            self.orientation = default_orientation(self.metric)
        if self.orientation not in (HIGHER_BETTER, LOWER_COST):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        # clip is always higher-better and knn always a cost; gmm may be read
        # either way (log-likelihood vs. magnitude), so both are accepted there.
        if self.metric == "clip" and self.orientation != HIGHER_BETTER:
            raise ValueError("clip series must be higher_better")
        if self.metric == "giqa_knn" and self.orientation != LOWER_COST:
            raise ValueError("giqa_knn series must be lower_cost")
        if not self.per_image:
            raise ValueError("score series must be non-empty")
        self.per_image = {str(k): float(v) for k, v in self.per_image.items()}
        if not all(math.isfinite(v) for v in self.per_image.values()):
            raise ValueError("score series contains non-finite values")

    def values(self) -> np.ndarray:
        return np.array(list(self.per_image.values()), dtype=np.float64)


NORMALIZATION_KINDS = (
    "global_min_max",
    "per_image_min_max",
    "divide_by_global_max",
    "fixed_bounds",
)


@dataclass(frozen=True)
class NormalizationStrategy:
    kind: str = "global_min_max"
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in NORMALIZATION_KINDS:
            raise ValueError(
                f"unknown normalization kind {self.kind!r}, expected one of {NORMALIZATION_KINDS}"
            )
        if self.kind == "fixed_bounds":
            if self.bounds is None:
                raise ValueError("fixed_bounds requires (lo, hi)")
            lo, hi = self.bounds
            if not lo < hi:
                raise ValueError(f"fixed_bounds requires lo < hi, got ({lo}, {hi})")


def cosine(u, v) -> float:
    """Cosine similarity of two non-zero vectors."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("zero-norm vector has no direction")
    if np.array_equal(u, v):
        return 1.0  # self-similarity is exactly 1; dot/norm² can land 1 ulp low
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def clip_score(img, txt, w: float = 100.0) -> float:
    """w * max(cos(img, txt), 0): the standard rescaled-similarity score."""
    return w * max(cosine(img, txt), 0.0)


def score_images(
    image_embeddings, text_embedding, variant: ModelVariantId, w: float = 100.0
) -> ScoreSeries:
    """Score every row of an embedding matrix against one prompt vector."""
    per_image = {
        rid: clip_score(image_embeddings.values[i], text_embedding, w)
        for i, rid in enumerate(image_embeddings.row_ids)
    }
    return ScoreSeries(metric="clip", variant=variant, per_image=per_image)


def _rescale(value, lo, hi):
    return (value - lo) / (hi - lo)


def normalize_scores(
    all_series: list[ScoreSeries], strategy: NormalizationStrategy
) -> list[ScoreSeries]:
    """Map raw series onto [0, 1] without reordering values within any scope.

    Degenerate scopes (max equal to min, or a non-positive pooled max for the
    divide strategy) map to 0.5 with a warning instead of erroring, so batch
    reports survive constant columns.
    """
    if not all_series:
        raise ValueError("no series to normalize")
    metrics = {s.metric for s in all_series}
    if len(metrics) > 1:
        raise ValueError(f"series mix metrics: {sorted(metrics)}")

    def degenerate(scope: str) -> None:
        warnings.warn(
            f"degenerate normalization scope ({scope}): all values map to 0.5",
            stacklevel=3,
        )

    pooled = np.concatenate([s.values() for s in all_series])

    if strategy.kind == "global_min_max":
        lo, hi = float(pooled.min()), float(pooled.max())
        if hi == lo:
            degenerate("pooled max = min")
            mapper = lambda _sid, _v: 0.5
        else:
            mapper = lambda _sid, v: _rescale(v, lo, hi)
    elif strategy.kind == "divide_by_global_max":
        hi = float(pooled.max())
        if hi <= 0.0:
            degenerate(f"pooled max {hi} is not positive")
            mapper = lambda _sid, _v: 0.5
        else:
            mapper = lambda _sid, v: max(v, 0.0) / hi
    elif strategy.kind == "fixed_bounds":
        lo, hi = strategy.bounds
        mapper = lambda _sid, v: _rescale(min(max(v, lo), hi), lo, hi)
    else:  # per_image_min_max
        by_image: dict[str, list[float]] = {}
        for s in all_series:
            for sid, v in s.per_image.items():
                by_image.setdefault(sid, []).append(v)
        spans = {}
        for sid, vals in by_image.items():
            lo, hi = min(vals), max(vals)
            if hi == lo:
                degenerate(f"image {sid!r} max = min")
                spans[sid] = None
            else:
                spans[sid] = (lo, hi)
        mapper = lambda sid, v: 0.5 if spans[sid] is None else _rescale(v, *spans[sid])

    return [
        ScoreSeries(
            metric=s.metric,
            variant=s.variant,
            per_image={sid: mapper(sid, v) for sid, v in s.per_image.items()},
            orientation=s.orientation,
        )
        for s in all_series
    ]


def mean_score(series: ScoreSeries) -> float:
    """Arithmetic mean of the per-image values."""
    if not series.per_image:
        raise ValueError("empty series")
    return float(np.mean(series.values()))


def export_series_csv(
    raw: list[ScoreSeries], normalized: list[ScoreSeries]
) -> str:
    """CSV of raw and normalized scores joined on (variant, image id).

    Rows are sorted by variant label then image id so reruns are byte-stable.
    """
    norm_lookup = {
        (s.variant.label, sid): v for s in normalized for sid, v in s.per_image.items()
    }
    lines = ["image_id,variant,raw,normalized"]
    for s in sorted(raw, key=lambda s: s.variant.label):
        for sid in sorted(s.per_image):
            key = (s.variant.label, sid)
            if key not in norm_lookup:
                raise ValueError(f"no normalized value for variant={key[0]} image={key[1]}")
            lines.append(f"{sid},{key[0]},{s.per_image[sid]!r},{norm_lookup[key]!r}")
    return "\n".join(lines) + "\n"
