"""Realism scoring against a reference set: PCA reduction, a diagonal-covariance
Gaussian mixture fitted by EM (global realism), and exact K-nearest-neighbor
mean distance (local feature coherence).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .featurestore import EmbeddingMatrix, ModelVariantId
from .metrics_clip import ScoreSeries

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PcaModel:
    """Orthonormal projection onto the top-q principal directions."""

    mean: np.ndarray
    components: np.ndarray  # q x d, rows orthonormal
    q: int
    explained_variance: np.ndarray = field(default_factory=lambda: np.array([]))
    total_variance: float = 0.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).ravel()
        self.components = np.atleast_2d(np.asarray(self.components, dtype=np.float64))
        if self.components.shape != (self.q, self.mean.shape[0]):
            raise ValueError(
                f"components shape {self.components.shape} inconsistent with "
                f"q={self.q}, d={self.mean.shape[0]}"
            )
        gram = self.components @ self.components.T
        if np.max(np.abs(gram - np.eye(self.q))) >= 1e-8:
            raise ValueError("component rows are not orthonormal within 1e-8")

    @property
    def variance_fraction(self) -> float:
        if self.total_variance <= 0.0:
            return 0.0
        return float(np.sum(self.explained_variance) / self.total_variance)


def _cov_eigh(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample-covariance eigendecomposition, eigenvalues descending."""
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (X.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    return mean, eigvals[order], eigvecs[:, order]


def _rank_from_eigvals(eigvals: np.ndarray) -> int:
    max_eig = float(eigvals[0]) if eigvals.size else 0.0
    if max_eig <= 0:
        return 0
    return int(np.sum(eigvals > max_eig * 1e-10))


def numerical_rank(features: EmbeddingMatrix) -> int:
    """Rank of the sample covariance at the tolerance pca_fit uses."""
    if features.n_rows < 2:
        return 0
    _, eigvals, _ = _cov_eigh(features.values.astype(np.float64))
    return _rank_from_eigvals(eigvals)


def pca_fit(features: EmbeddingMatrix, q: int) -> PcaModel:
    """Top-q eigenvectors of the sample covariance, descending by eigenvalue.

    Sign convention: the first nonzero coordinate of each component is
    positive, so refits are reproducible. Raises if q exceeds the numerical
    rank of the data.
    """
    X = features.values.astype(np.float64)
    n, d = X.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows to fit, got {n}")
    if not 1 <= q <= min(n - 1, d):
        raise ValueError(f"q={q} outside valid range [1, {min(n - 1, d)}]")

    mean, eigvals, eigvecs = _cov_eigh(X)
    rank = _rank_from_eigvals(eigvals)
    if q > rank:
        raise ValueError(f"q={q} exceeds numerical rank {rank} of the data")

    components = eigvecs[:, :q].T.copy()
    for row in components:
        nz = np.nonzero(np.abs(row) > 1e-12)[0]
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return PcaModel(
        mean=mean,
        components=components,
        q=q,
        explained_variance=eigvals[:q].copy(),
        total_variance=float(np.sum(np.clip(eigvals, 0.0, None))),
    )


def pca_project(model: PcaModel, x) -> np.ndarray:
    """components @ (x - mean); accepts a single vector or a stack of rows."""
    x = np.asarray(x, dtype=np.float64)
    d = model.mean.shape[0]
    if x.shape[-1] != d:
        raise ValueError(f"dimension mismatch: input {x.shape[-1]}, model {d}")
    return (x - model.mean) @ model.components.T


@dataclass
class GmmModel:
    """Diagonal-covariance Gaussian mixture with floored variances."""

    K: int
    weights: np.ndarray
    means: np.ndarray  # K x q
    covariances: np.ndarray  # K x q diagonal entries
    eps: float
    loglik_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.covariances = np.atleast_2d(np.asarray(self.covariances, dtype=np.float64))
        if self.weights.shape != (self.K,):
            raise ValueError(f"weights shape {self.weights.shape} != ({self.K},)")
        if self.means.shape[0] != self.K or self.covariances.shape != self.means.shape:
            raise ValueError("means/covariances inconsistent with K")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a simplex vector (sum 1)")
        if self.eps <= 0 or np.any(self.covariances < self.eps):
            raise ValueError("covariance entries must be >= eps > 0")

    @property
    def dims(self) -> int:
        return self.means.shape[1]


def _log_density_matrix(model: GmmModel, X: np.ndarray) -> np.ndarray:
    """(n, K) matrix of log w_k + log N(x_i; mu_k, diag sigma_k)."""
    n = X.shape[0]
    out = np.empty((n, model.K))
    for k in range(model.K):
        var = model.covariances[k]
        diff = X - model.means[k]
        out[:, k] = np.log(model.weights[k]) - 0.5 * (
            np.sum(np.log(2.0 * np.pi * var)) + np.sum(diff * diff / var, axis=1)
        )
    return out


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=1, keepdims=True))).ravel()


def gmm_fit(
    features: EmbeddingMatrix,
    K: int,
    max_iter: int = 200,
    tol: float = 1e-6,
    seed: int = 0,
) -> GmmModel:
    """EM fit with k-means++-style seeded initialization.

    The per-iteration total log-likelihood is non-decreasing (within floating
    slack) and is recorded on the model; iteration stops when the improvement
    drops below tol or max_iter is reached. Identical seeds give bit-identical
    parameters.
    """
    X = features.values.astype(np.float64)
    n, d = X.shape
    if not 1 <= K <= n:
        raise ValueError(f"K={K} outside valid range [1, {n}]")
    if tol <= 0:
        raise ValueError("tol must be > 0")

    global_var = X.var(axis=0, ddof=0)
    eps = 1e-6 * float(global_var.mean())
    if eps <= 0.0:
        eps = 1e-12

    # k-means++ seeding: first center uniform, then D^2-weighted draws.
    rng = np.random.default_rng(seed)
    centers = [X[rng.integers(n)]]
    for _ in range(1, K):
        d2 = np.min(
            [np.sum((X - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0.0:
            centers.append(X[rng.integers(n)])
        else:
            centers.append(X[rng.choice(n, p=d2 / total)])

    weights = np.full(K, 1.0 / K)
    means = np.array(centers)
    covariances = np.tile(np.maximum(global_var, eps), (K, 1))

    history: list[float] = []
    model = GmmModel(K, weights, means, covariances, eps)
    for _ in range(max_iter):
        log_dens = _log_density_matrix(model, X)
        row_logsum = _logsumexp_rows(log_dens)
        ll = float(row_logsum.sum())
        history.append(ll)

        resp = np.exp(log_dens - row_logsum[:, None])
        Nk = resp.sum(axis=0)
        Nk = np.maximum(Nk, 1e-300)
        weights = Nk / n
        weights = weights / weights.sum()
        means = (resp.T @ X) / Nk[:, None]
        covariances = np.empty_like(means)
        for k in range(K):
            diff = X - means[k]
            covariances[k] = np.maximum((resp[:, k][:, None] * diff * diff).sum(axis=0) / Nk[k], eps)
        model = GmmModel(K, weights, means, covariances, eps)

        if len(history) >= 2 and history[-1] - history[-2] < tol:
            break

    model.loglik_history = history
    return model


def gmm_loglik(model: GmmModel, x) -> float:
    """log sum_k w_k N(x; mu_k, Sigma_k), evaluated via log-sum-exp."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.dims:
        raise ValueError(f"dimension mismatch: input {x.shape[0]}, model {model.dims}")
    return float(_logsumexp_rows(_log_density_matrix(model, x[None, :]))[0])


def giqa_gmm_score(
    model: GmmModel,
    pca: PcaModel | None,
    generated: EmbeddingMatrix,
    variant: ModelVariantId | None = None,
) -> ScoreSeries:
    """Per-image density score of generated features under the reference fit.

    Pass pca=None when the features are already in the model's space.
    """
    X = generated.values.astype(np.float64)
    if pca is not None:
        X = pca_project(pca, X)
    per_image = {
        rid: gmm_loglik(model, X[i]) for i, rid in enumerate(generated.row_ids)
    }
    return ScoreSeries(
        metric="giqa_gmm",
        variant=variant or ModelVariantId("M0"),
        per_image=per_image,
        orientation="higher_better",
    )


@dataclass
class KnnIndex:
    """Exhaustive nearest-neighbor scorer over a reference feature matrix."""

    reference: EmbeddingMatrix
    K: int = 5

    def __post_init__(self):
        if not 1 <= self.K <= self.reference.n_rows:
            raise ValueError(
                f"K={self.K} outside valid range [1, {self.reference.n_rows}]"
            )


def knn_score(index: KnnIndex, x, neg_log: bool = False) -> float:
    """Mean Euclidean distance from x to its K nearest reference rows.

    Lower is better. neg_log=True returns -ln(mean distance) for a
    likelihood-flavored reading (distance floored at 1e-300 to stay finite).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    ref = index.reference.values.astype(np.float64)
    if x.shape[0] != ref.shape[1]:
        raise ValueError(f"dimension mismatch: input {x.shape[0]}, reference {ref.shape[1]}")
    diff = ref - x
    distances = np.sort(np.sqrt(np.sum(diff * diff, axis=1)))
    score = float(np.mean(distances[: index.K]))
    if neg_log:
        return float(-np.log(max(score, 1e-300)))
    return score


def giqa_knn_score(
    index: KnnIndex,
    generated: EmbeddingMatrix,
    pca: PcaModel | None = None,
    variant: ModelVariantId | None = None,
) -> ScoreSeries:
    """Per-image mean-distance score series (lower_cost orientation)."""
    X = generated.values.astype(np.float64)
    if pca is not None:
        X = pca_project(pca, X)
        ref = EmbeddingMatrix(
            pca_project(pca, index.reference.values).astype(np.float32),
            index.reference.row_ids,
        )
        index = KnnIndex(reference=ref, K=index.K)
    per_image = {
        rid: knn_score(index, X[i]) for i, rid in enumerate(generated.row_ids)
    }
    return ScoreSeries(
        metric="giqa_knn",
        variant=variant or ModelVariantId("M0"),
        per_image=per_image,
        orientation="lower_cost",
    )


# ------------------------------------------------------------- serialization


def save_model(model: PcaModel | GmmModel, path: str | Path) -> None:
    """Write all parameters to JSON at full decimal precision."""
    if isinstance(model, PcaModel):
        payload = {
            "type": "pca",
            "q": model.q,
            "mean": model.mean.tolist(),
            "components": model.components.tolist(),
            "explained_variance": model.explained_variance.tolist(),
            "total_variance": model.total_variance,
        }
    elif isinstance(model, GmmModel):
        payload = {
            "type": "gmm",
            "K": model.K,
            "weights": model.weights.tolist(),
            "means": model.means.tolist(),
            "covariances": model.covariances.tolist(),
            "eps": model.eps,
            "loglik_history": model.loglik_history,
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> PcaModel | GmmModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = payload.get("type")
    if kind == "pca":
        return PcaModel(
            mean=np.array(payload["mean"]),
            components=np.array(payload["components"]),
            q=payload["q"],
            explained_variance=np.array(payload["explained_variance"]),
            total_variance=payload["total_variance"],
        )
    if kind == "gmm":
        return GmmModel(
            K=payload["K"],
            weights=np.array(payload["weights"]),
            means=np.array(payload["means"]),
            covariances=np.array(payload["covariances"]),
            eps=payload["eps"],
            loglik_history=list(payload.get("loglik_history", [])),
        )
    raise ValueError(f"unknown model type {kind!r}")
