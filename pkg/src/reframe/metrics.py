"""Standardised [0, 1] metrics for conditional mean, density and variance quality.

All three scores run from 0 (best) to 1 (worst) via the logistic squashing,
so results are commensurate across datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gaussian
from .data import Dataset

LN3 = math.log(3.0)


@dataclass(frozen=True)
class MetricReport:
    mrse: float
    msll: float
    msvr: float


def logistic(t: float) -> float:
    """1 / (1 + e^-t), overflow-safe; +/-inf map to 1/0."""
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def mrse(predictions, targets, train_mean: float) -> float:
    """Relative squared error against the constant training-mean model,
    squashed so 0 is perfect, 0.5 matches the trivial model and 1 is worst."""
    preds = np.asarray(predictions, dtype=float)
    ys = np.asarray(targets, dtype=float)
    if preds.shape != ys.shape or ys.size == 0:
        raise ValueError("predictions and targets must be equal-length and nonempty")
    denom = float(np.sum((ys - train_mean) ** 2))
    if denom == 0.0:
        raise ValueError("constant evaluation targets")
    ratio = float(np.sum((ys - preds) ** 2)) / denom
    return 2.0 * logistic(ratio * LN3) - 1.0


def msll_values(mus, sigmas, targets) -> float:
    """Mean of 1 / (1 + density) with a Gaussian density per row."""
    mus = np.asarray(mus, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    ys = np.asarray(targets, dtype=float)
    z = (ys - mus) / sigmas
    dens = np.exp(-0.5 * z * z) / (sigmas * gaussian.SQRT_2PI)
    return float(np.mean(1.0 / (1.0 + dens)))


def msvr_values(mus, sigmas, targets) -> float:
    """Mean of |1 - 2/(1 + vr)| with vr the variance / squared-residual ratio.

    0/0 counts as a perfect ratio of 1; a zero residual with positive
    variance gives vr = +inf and contributes the worst score 1.
    """
    mus = np.asarray(mus, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    ys = np.asarray(targets, dtype=float)
    var = sigmas**2
    res2 = (mus - ys) ** 2
    terms = np.empty(ys.shape, dtype=float)
    both_zero = (var == 0) & (res2 == 0)
    inf_ratio = (res2 == 0) & ~both_zero
    ok = ~(both_zero | inf_ratio)
    terms[both_zero] = 0.0  # vr = 1 by definition
    terms[inf_ratio] = 1.0
    vr = var[ok] / res2[ok]
    terms[ok] = np.abs(1.0 - 2.0 / (1.0 + vr))
    return float(np.mean(terms))


def _soft_predictions(soft, ds: Dataset):
    preds = [soft.predict(x) for x in ds.features]
    return np.array([p.mu for p in preds]), np.array([p.sigma for p in preds])


def msll(soft, eval_ds: Dataset) -> float:
    if eval_ds.n_rows == 0:
        raise ValueError("empty evaluation dataset")
    mus, sigmas = _soft_predictions(soft, eval_ds)
    return msll_values(mus, sigmas, eval_ds.targets)


def msvr(soft, eval_ds: Dataset) -> float:
    if eval_ds.n_rows == 0:
        raise ValueError("empty evaluation dataset")
    mus, sigmas = _soft_predictions(soft, eval_ds)
    return msvr_values(mus, sigmas, eval_ds.targets)


def evaluate_soft(soft, eval_ds: Dataset, train_mean: float) -> MetricReport:
    """All three scores for one soft model on one evaluation fold."""
    mus, sigmas = _soft_predictions(soft, eval_ds)
    return MetricReport(
        mrse=mrse(mus, eval_ds.targets, train_mean),
        msll=msll_values(mus, sigmas, eval_ds.targets),
        msvr=msvr_values(mus, sigmas, eval_ds.targets),
    )
