"""Attach a conditional-variance estimator to any crisp regressor.

A SoftModel keeps the base model's mean untouched (bit-identical) and adds
a standard-deviation estimate per instance.  Most attachments here learn
sigma from the (estimate, actual) pairs of the training fold alone; the
feature-space variants (cnk, knc, cve) and conformal calibration are the
exceptions.

Method grammar for the CLI and the harness:

    own | rbe:knn | rbe:tree | bin | uknc | cnk | knc | cve:knn | cve:tree | conformal
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .data import Dataset
from .regressors import (
    KnnModel,
    NormalPrediction,
    TreeModel,
    fit_knn,
    fit_tree,
    sigma_floor_for,
)


class CrispModel(Protocol):
    def predict(self, x) -> NormalPrediction: ...


class MethodGrammarError(ValueError):
    """Raised when a variance-method string does not parse."""


METHOD_GRAMMAR = "own | rbe:knn | rbe:tree | bin | uknc | cnk | knc | cve:knn | cve:tree | conformal"


@dataclass(frozen=True)
class ResidualTransform:
    """Invertible map applied to residuals before the variance regression.

    ``invert`` clamps negative inputs to zero first, so attachments stay
    total when a residual model averages its way below zero.
    """

    name: str
    apply: Callable
    invert: Callable


THETA_SQUARE = ResidualTransform(
    name="square",
    apply=lambda u: np.asarray(u, dtype=float) ** 2,
    invert=lambda v: math.sqrt(max(0.0, v)),
)

THETA_ABS = ResidualTransform(
    name="abs",
    apply=lambda u: np.abs(np.asarray(u, dtype=float)),
    invert=lambda v: max(0.0, v),
)


@dataclass(frozen=True)
class SoftModel:
    """Crisp base plus a fitted variance attachment.

    ``predict`` forwards the base mean unchanged; only sigma is replaced
    (except for method "own", which forwards the base prediction whole).
    """

    base: CrispModel
    method: str
    attachment: object  # method-specific fitted state with .sigma(mu, x)
    sigma_floor: float

    def predict(self, x) -> NormalPrediction:
        base_pred = self.base.predict(x)
        if self.attachment is None:  # own variance
            return base_pred
        sigma = self.attachment.sigma(base_pred.mu, x)
        return NormalPrediction(base_pred.mu, max(sigma, self.sigma_floor))


def _base_predictions(base: CrispModel, train: Dataset) -> np.ndarray:
    return np.array([base.predict(x).mu for x in train.features])


def _univariate_dataset(xs: np.ndarray, ys: np.ndarray, name: str) -> Dataset:
    return Dataset(
        name=name,
        feature_names=("estimate",),
        features=np.asarray(xs, dtype=float).reshape(-1, 1),
        targets=np.asarray(ys, dtype=float),
    )


def _fit_residual_model(kind: str, ds: Dataset, k: int):
    if kind == "knn":
        return fit_knn(ds, k=k)
    if kind == "tree":
        return fit_tree(ds)
    raise MethodGrammarError(f"unknown residual regressor {kind!r}; use knn or tree")


# ---------------------------------------------------------------------------
# Attachments


@dataclass(frozen=True)
class _RegressorOnEstimate:
    """Residual-based enrichment: a univariate model of transformed
    residuals keyed by the estimate."""

    residual_model: KnnModel | TreeModel
    theta: ResidualTransform

    def sigma(self, mu: float, x) -> float:
        v = self.residual_model.predict(np.array([mu])).mu
        return self.theta.invert(max(0.0, v))


@dataclass(frozen=True)
class ResidualPairs:
    """(estimate, value) pairs sorted by estimate."""

    estimates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.estimates) < 0):
            raise ValueError("pairs must be sorted by estimate")


@dataclass(frozen=True)
class _SlidingWindow:
    """Binning enrichment: average the k/2 transformed residuals stored
    immediately above and below the query estimate.

    Near a boundary a side contributes as many values as it has; the
    window does not recentre.  Stored estimates equal to the query count
    as "above".
    """

    pairs: ResidualPairs
    k: int
    theta: ResidualTransform

    def sigma(self, mu: float, x) -> float:
        half = max(1, self.k // 2)
        pos = bisect.bisect_left(self.pairs.estimates, mu)
        lo = max(0, pos - half)
        hi = min(self.pairs.values.size, pos + half)
        window = self.pairs.values[lo:hi]
        return self.theta.invert(float(np.mean(window)))


@dataclass(frozen=True)
class _NearestEstimates:
    """k-nearest-comparison enrichment: spread of the true values around
    the query estimate, neighbours chosen by estimate distance."""

    estimates: np.ndarray  # training-order, ties resolved by lower index
    actuals: np.ndarray
    k: int

    def sigma(self, mu: float, x) -> float:
        order = np.argsort(np.abs(self.estimates - mu), kind="stable")[: self.k]
        return math.sqrt(float(np.mean((mu - self.actuals[order]) ** 2)))


@dataclass(frozen=True)
class _NeighbourCentre:
    """Reliability-style estimate: |kNN consensus - base estimate|."""

    knn: KnnModel

    def sigma(self, mu: float, x) -> float:
        centre = self.knn.predict(x).mu
        return abs(centre - mu)


@dataclass(frozen=True)
class _NeighbourSpread:
    """Mean squared deviation of the feature-space neighbours' true values
    from the base estimate."""

    knn: KnnModel

    def sigma(self, mu: float, x) -> float:
        idx = self.knn.kneighbors(np.asarray(x, dtype=float))
        vals = self.knn.training_targets[idx]
        return math.sqrt(float(np.mean((mu - vals) ** 2)))


@dataclass(frozen=True)
class _RegressorOnFeatures:
    """Two-step conditional variance: transformed residuals regressed on
    the full feature vector."""

    residual_model: KnnModel | TreeModel
    theta: ResidualTransform

    def sigma(self, mu: float, x) -> float:
        v = self.residual_model.predict(np.asarray(x, dtype=float)).mu
        return self.theta.invert(max(0.0, v))


@dataclass(frozen=True)
class _ConformalWidth:
    """Half-width of the symmetric conformal region at miscoverage epsilon."""

    epsilon: float
    calibration_scores: np.ndarray  # sorted ascending
    half_width: float

    def sigma(self, mu: float, x) -> float:
        return self.half_width


# ---------------------------------------------------------------------------
# Enrichment constructors


def enrich_own(base: CrispModel, train: Dataset | None = None) -> SoftModel:
    """Identity attachment: the base model's own (mu, sigma) pass through."""
    return SoftModel(base=base, method="own", attachment=None, sigma_floor=0.0)


def enrich_rbe(
    base: CrispModel,
    train: Dataset,
    residual_regressor: str = "knn",
    theta: ResidualTransform = THETA_SQUARE,
    k: int = 10,
) -> SoftModel:
    yhat = _base_predictions(base, train)
    v = theta.apply(train.targets - yhat)
    model = _fit_residual_model(residual_regressor, _univariate_dataset(yhat, v, "residuals"), k)
    return SoftModel(
        base=base,
        method=f"rbe:{residual_regressor}",
        attachment=_RegressorOnEstimate(residual_model=model, theta=theta),
        sigma_floor=sigma_floor_for(train.targets),
    )


def enrich_bin(
    base: CrispModel,
    train: Dataset,
    k: int = 10,
    theta: ResidualTransform = THETA_SQUARE,
) -> SoftModel:
    yhat = _base_predictions(base, train)
    v = theta.apply(train.targets - yhat)
    order = np.argsort(yhat, kind="stable")
    pairs = ResidualPairs(estimates=yhat[order], values=v[order])
    return SoftModel(
        base=base,
        method="bin",
        attachment=_SlidingWindow(pairs=pairs, k=k, theta=theta),
        sigma_floor=sigma_floor_for(train.targets),
    )


def enrich_uknc(base: CrispModel, train: Dataset, k: int = 10) -> SoftModel:
    yhat = _base_predictions(base, train)
    return SoftModel(
        base=base,
        method="uknc",
        attachment=_NearestEstimates(
            estimates=yhat, actuals=train.targets.copy(), k=min(k, yhat.size)
        ),
        sigma_floor=sigma_floor_for(train.targets),
    )


def estimate_cnk(base: CrispModel, train: Dataset, k: int = 10) -> SoftModel:
    return SoftModel(
        base=base,
        method="cnk",
        attachment=_NeighbourCentre(knn=fit_knn(train, k=k)),
        sigma_floor=sigma_floor_for(train.targets),
    )


def estimate_knc(base: CrispModel, train: Dataset, k: int = 10) -> SoftModel:
    return SoftModel(
        base=base,
        method="knc",
        attachment=_NeighbourSpread(knn=fit_knn(train, k=k)),
        sigma_floor=sigma_floor_for(train.targets),
    )


def cve_two_step(
    base: CrispModel,
    train: Dataset,
    residual_regressor: str = "knn",
    theta: ResidualTransform = THETA_SQUARE,
    k: int = 10,
) -> SoftModel:
    yhat = _base_predictions(base, train)
    v = theta.apply(train.targets - yhat)
    residual_ds = Dataset(
        name="residuals",
        feature_names=train.feature_names,
        features=train.features.copy(),
        targets=v,
    )
    model = _fit_residual_model(residual_regressor, residual_ds, k)
    return SoftModel(
        base=base,
        method=f"cve:{residual_regressor}",
        attachment=_RegressorOnFeatures(residual_model=model, theta=theta),
        sigma_floor=sigma_floor_for(train.targets),
    )


def conformal_half_width(scores: np.ndarray, epsilon: float) -> float:
    """Half-width of the symmetric region covering 1 - epsilon of the
    calibration scores: the ceil((1-eps)(n+1))-th smallest score (clamped
    to the largest for tiny calibration sets)."""
    scores = np.sort(np.asarray(scores, dtype=float))
    n = scores.size
    if n == 0:
        raise ValueError("empty calibration set")
    rank = math.ceil((1.0 - epsilon) * (n + 1))
    rank = min(max(rank, 1), n)
    return float(scores[rank - 1])


def conformal_attach(
    base: CrispModel, calibration: Dataset, epsilon: float = 0.3173
) -> SoftModel:
    """Constant-sigma attachment from absolute-residual conformal scores."""
    yhat = _base_predictions(base, calibration)
    scores = np.sort(np.abs(calibration.targets - yhat))
    q = conformal_half_width(scores, epsilon)
    floor = sigma_floor_for(calibration.targets)
    return SoftModel(
        base=base,
        method="conformal",
        attachment=_ConformalWidth(
            epsilon=epsilon, calibration_scores=scores, half_width=q
        ),
        sigma_floor=floor,
    )


def conformal_sigma(
    base: CrispModel, calibration: Dataset, x, epsilon: float = 0.3173
) -> NormalPrediction:
    """One-shot conformal prediction for a single instance."""
    return conformal_attach(base, calibration, epsilon=epsilon).predict(x)


_SIMPLE_METHODS = {
    "own": enrich_own,
    "bin": enrich_bin,
    "uknc": enrich_uknc,
    "cnk": estimate_cnk,
    "knc": estimate_knc,
    "conformal": conformal_attach,
}


def parse_method(text: str) -> tuple[str, str | None]:
    """Validate a method string against the grammar; returns (kind, variant)."""
    name = text.strip().lower()
    head, _, variant = name.partition(":")
    if head in ("rbe", "cve"):
        if variant not in ("knn", "tree"):
            raise MethodGrammarError(
                f"unknown method {text!r}; grammar: {METHOD_GRAMMAR}"
            )
        return head, variant
    if head in _SIMPLE_METHODS and not variant:
        return head, None
    raise MethodGrammarError(f"unknown method {text!r}; grammar: {METHOD_GRAMMAR}")


def enrich(base: CrispModel, train: Dataset, method: str, k: int = 10) -> SoftModel:
    """Dispatch on the method grammar.  ``k`` feeds every neighbour-count
    parameter (bin window, estimate/feature-space neighbours, residual kNN).
    """
    head, variant = parse_method(method)
    if head == "rbe":
        return enrich_rbe(base, train, residual_regressor=variant, k=k)
    if head == "cve":
        return cve_two_step(base, train, residual_regressor=variant, k=k)
    if head == "own":
        return enrich_own(base, train)
    if head == "conformal":
        return conformal_attach(base, train)
    return _SIMPLE_METHODS[head](base, train, k=k)
