"""Crisp base regressors that can report a per-prediction standard deviation.

Three techniques: ordinary least squares (standard error from the hat
matrix), unweighted k-nearest neighbours on standardised features
(neighbour-target variance) and a CART-style regression tree (leaf
variance).  Every prediction is a NormalPrediction with sigma floored
away from zero so downstream Gaussian densities and quantiles stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset

RIDGE_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class NormalPrediction:
    """Conditional Gaussian belief for one instance: mean and sd in output units."""

    mu: float
    sigma: float


def sigma_floor_for(targets) -> float:
    """Smallest sigma a model trained on these targets may report.

    Proportional to the target range; absolute fallback when the range is
    zero.  Keeps log-densities and quantiles finite for pure leaves and
    duplicate neighbours.
    """
    targets = np.asarray(targets, dtype=float)
    span = float(np.max(targets) - np.min(targets))
    return 1e-8 * span if span > 0 else 1e-12


def _check_dim(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise ValueError(f"expected {d} features, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# Ordinary least squares


@dataclass(frozen=True)
class LinearModel:
    coefficients: np.ndarray  # intercept first, length d+1
    residual_sd: float
    normal_matrix_inverse: np.ndarray  # (d+1, d+1), possibly ridge-stabilised
    se_mode: str  # "predictive" | "fitted"
    sigma_floor: float

    def predict(self, x) -> NormalPrediction:
        x = _check_dim(x, self.coefficients.size - 1)
        xa = np.concatenate(([1.0], x))
        mu = float(xa @ self.coefficients)
        h = float(xa @ self.normal_matrix_inverse @ xa)
        h = max(h, 0.0)
        if self.se_mode == "predictive":
            sigma = self.residual_sd * math.sqrt(1.0 + h)
        else:
            sigma = self.residual_sd * math.sqrt(h)
        return NormalPrediction(mu, max(sigma, self.sigma_floor))


def fit_ols(train: Dataset, se_mode: str = "predictive") -> LinearModel:
    """Least-squares fit via the normal equations with a ridge fallback.

    When cond(X'X) exceeds RIDGE_CONDITION_LIMIT a small diagonal load
    lambda = 1e-8 * trace/(d+1) is added, so collinear designs never fail.
    """
    if se_mode not in ("predictive", "fitted"):
        raise ValueError(f"unknown se_mode {se_mode!r}")
    X = np.column_stack([np.ones(train.n_rows), train.features])
    y = train.targets
    n, p = X.shape
    xtx = X.T @ X
    cond = np.linalg.cond(xtx)
    if not np.isfinite(cond) or cond > RIDGE_CONDITION_LIMIT:
        lam = 1e-8 * float(np.trace(xtx)) / p
        xtx = xtx + lam * np.eye(p)
    inv = np.linalg.inv(xtx)
    inv = (inv + inv.T) / 2.0
    coef = inv @ (X.T @ y)
    resid = y - X @ coef
    sse = float(resid @ resid)
    dof = max(1, n - p)
    residual_sd = math.sqrt(max(sse, 0.0) / dof)
    inv.flags.writeable = False
    coef.flags.writeable = False
    return LinearModel(
        coefficients=coef,
        residual_sd=residual_sd,
        normal_matrix_inverse=inv,
        se_mode=se_mode,
        sigma_floor=sigma_floor_for(y),
    )


def predict_ols(model: LinearModel, x) -> NormalPrediction:
    return model.predict(x)


# ---------------------------------------------------------------------------
# k-nearest neighbours


@dataclass(frozen=True)
class KnnModel:
    k: int  # effective k after clamping to the stored row count
    standardized_training_features: np.ndarray
    training_targets: np.ndarray
    feature_means: np.ndarray
    feature_sds: np.ndarray
    kept_features: np.ndarray  # boolean mask of columns with sd > 0
    sigma_floor: float

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        return (x[self.kept_features] - self.feature_means[self.kept_features]) / self.feature_sds[
            self.kept_features
        ]

    def kneighbors(self, x) -> np.ndarray:
        """Indices of the k nearest stored rows; distance ties resolved by
        lower training index (stable sort)."""
        x = _check_dim(x, self.feature_means.size)
        z = self._standardize(x)
        if z.size:
            d2 = np.sum((self.standardized_training_features - z) ** 2, axis=1)
        else:
            d2 = np.zeros(self.training_targets.size)
        order = np.argsort(d2, kind="stable")
        return order[: self.k]

    def predict(self, x) -> NormalPrediction:
        idx = self.kneighbors(x)
        vals = self.training_targets[idx]
        mu = float(np.mean(vals))
        var = float(np.mean((vals - mu) ** 2))
        return NormalPrediction(mu, max(math.sqrt(var), self.sigma_floor))


def fit_knn(train: Dataset, k: int = 10) -> KnnModel:
    """Store standardised training rows; k is clamped to the row count and
    zero-sd features are dropped from the distance."""
    if k < 1:
        raise ValueError("k must be positive")
    n = train.n_rows
    means = train.features.mean(axis=0)
    sds = train.features.std(axis=0)  # population sd; only the >0 mask matters
    kept = sds > 0
    feats = (train.features[:, kept] - means[kept]) / sds[kept]
    feats = np.ascontiguousarray(feats)
    feats.flags.writeable = False
    return KnnModel(
        k=min(k, n),
        standardized_training_features=feats,
        training_targets=train.targets,
        feature_means=means,
        feature_sds=sds,
        kept_features=kept,
        sigma_floor=sigma_floor_for(train.targets),
    )


def predict_knn(model: KnnModel, x) -> NormalPrediction:
    return model.predict(x)


# ---------------------------------------------------------------------------
# CART regression tree


@dataclass(frozen=True)
class TreeParams:
    min_split: int = 10  # smallest node size that may attempt a split
    min_leaf: int = 5
    min_gain_fraction: float = 0.01  # of the root deviance
    max_depth: int = 31


@dataclass(frozen=True)
class TreeLeaf:
    mean: float
    variance: float
    count: int


@dataclass(frozen=True)
class TreeSplit:
    feature: int
    threshold: float  # x[feature] <= threshold routes left
    left: "TreeSplit | TreeLeaf"
    right: "TreeSplit | TreeLeaf"


@dataclass(frozen=True)
class TreeModel:
    root: TreeSplit | TreeLeaf
    params: TreeParams
    n_features: int
    sigma_floor: float

    def predict(self, x) -> NormalPrediction:
        x = _check_dim(x, self.n_features)
        node = self.root
        while isinstance(node, TreeSplit):
            node = node.left if x[node.feature] <= node.threshold else node.right
        return NormalPrediction(node.mean, max(math.sqrt(node.variance), self.sigma_floor))

    def leaves(self) -> list[TreeLeaf]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, TreeSplit):
                stack.extend((node.left, node.right))
            else:
                out.append(node)
        return out


def _leaf(y: np.ndarray) -> TreeLeaf:
    mean = float(np.mean(y))
    return TreeLeaf(mean=mean, variance=float(np.mean((y - mean) ** 2)), count=y.size)


def _sse(y: np.ndarray) -> float:
    return float(np.sum((y - np.mean(y)) ** 2))


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Exhaustive deviance-reduction search.

    Returns (gain, feature, threshold) with thresholds at midpoints of
    consecutive distinct sorted values; ties keep the lowest feature index
    and lowest threshold because only strict improvements replace the best.
    Targets are centred per node and gains below the float-noise level of
    the sums are ignored, so constant nodes never split.
    """
    n = y.size
    yc = y - float(np.mean(y))
    parent_sse = float(np.sum(yc * yc))
    noise = 1e-12 * float(np.sum(y * y) / n + np.mean(y) ** 2) * n
    best = (noise, -1, 0.0)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = yc[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total_sum = csum[-1]
        total_sq = csq[-1]
        # candidate cut after position i (1-based left size)
        for i in range(min_leaf, n - min_leaf + 1):
            if xs[i - 1] == xs[i]:
                continue
            left_sse = csq[i - 1] - csum[i - 1] ** 2 / i
            right_sum = total_sum - csum[i - 1]
            right_sse = (total_sq - csq[i - 1]) - right_sum**2 / (n - i)
            gain = parent_sse - left_sse - right_sse
            if gain > best[0]:
                best = (float(gain), f, float((xs[i - 1] + xs[i]) / 2.0))
    return best


def _grow(X, y, depth, root_deviance, params: TreeParams):
    n = y.size
    if n < params.min_split or depth >= params.max_depth:
        return _leaf(y)
    gain, feature, threshold = _best_split(X, y, params.min_leaf)
    if feature < 0 or gain <= 0 or gain < params.min_gain_fraction * root_deviance:
        return _leaf(y)
    mask = X[:, feature] <= threshold
    return TreeSplit(
        feature=feature,
        threshold=threshold,
        left=_grow(X[mask], y[mask], depth + 1, root_deviance, params),
        right=_grow(X[~mask], y[~mask], depth + 1, root_deviance, params),
    )


def fit_tree(train: Dataset, params: TreeParams | None = None) -> TreeModel:
    """Grow a binary regression tree by greedy squared-error reduction."""
    params = params or TreeParams()
    root_deviance = _sse(train.targets)
    root = _grow(train.features, train.targets, 0, root_deviance, params)
    return TreeModel(
        root=root,
        params=params,
        n_features=train.n_features,
        sigma_floor=sigma_floor_for(train.targets),
    )


def predict_tree(model: TreeModel, x) -> NormalPrediction:
    return model.predict(x)


BASE_NAMES = ("lr", "knn", "tree")


def fit_base(
    name: str,
    train: Dataset,
    *,
    k: int = 10,
    ols_se_mode: str = "predictive",
    tree_params: TreeParams | None = None,
):
    """Fit one of the named base techniques on a training fold."""
    if name == "lr":
        return fit_ols(train, se_mode=ols_se_mode)
    if name == "knn":
        return fit_knn(train, k=k)
    if name == "tree":
        return fit_tree(train, params=tree_params)
    raise ValueError(f"unknown base technique {name!r}; expected one of {BASE_NAMES}")
