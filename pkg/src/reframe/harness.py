"""Evaluation protocol driver: parameter grids, per-cell deployment losses,
aggregation, average ranks and the Friedman / Nemenyi significance tests.

Every table cell is the mean test-fold loss of one (dataset, base
technique, reframing method, parameter point, fold) combination under the
ordered 2-fold protocol.  Methods are compared per base technique via
average ranks over datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import chi2, rankdata

from . import gaussian
from .data import Dataset, split_two_fold_ordered
from .enrichment import conformal_attach, enrich, parse_method
from .losses import (
    REJECT_SPECS,
    AsymAbsolute,
    AsymAbsoluteReject,
    AsymSquared,
    AsymSquaredReject,
    Bid,
    BidNonLosing,
    LossSpec,
    eval_loss,
    loss_on_actuals,
    underlying_spec,
)
from .metrics import MetricReport, evaluate_soft
from .reframing import (
    GlobalRejectRate,
    _clamp_alpha,
    cosh_fit,
    global_reject_fit,
    posh_fit,
    reframe,
    solve_asym_sq_tprime,
)
from .regressors import NormalPrediction, TreeParams, fit_base

FAMILIES = ("bid", "bidneg", "asym_abs", "asym_sq", "asym_abs_reject", "asym_sq_reject")
GLOBAL_METHODS = ("cosh", "posh")

# two-tailed Nemenyi critical values q_{0.05, k} (studentized range / sqrt 2)
# for k = 2..10 compared models
NEMENYI_Q_05 = {
    2: 1.960,
    3: 2.343,
    4: 2.569,
    5: 2.728,
    6: 2.850,
    7: 2.949,
    8: 3.031,
    9: 3.102,
    10: 3.164,
}


# ---------------------------------------------------------------------------
# Parameter grids


def beta_grid(dataset_targets, steps: int = 10) -> np.ndarray:
    """Base costs (max - min) * a^2 for a evenly spaced in [0, 1]; the
    square makes low-cost cases more frequent."""
    targets = np.asarray(dataset_targets, dtype=float)
    if targets.size == 0:
        raise ValueError("empty targets")
    span = float(targets.max() - targets.min())
    a = np.linspace(0.0, 1.0, steps)
    return span * a**2


def alpha_grid(steps: int = 10) -> np.ndarray:
    """Cost proportions evenly spaced over [0, 1], endpoints included."""
    return np.linspace(0.0, 1.0, steps)


def rho_grid(train_targets, steps: int = 10) -> np.ndarray:
    """Abstention costs 0.5 sd r/(1-r) for r evenly spaced in [0, 1];
    r = 0 makes rejection free, r = 1 makes it infinitely expensive."""
    targets = np.asarray(train_targets, dtype=float)
    if targets.size == 0:
        raise ValueError("empty targets")
    sd = float(np.std(targets, ddof=1)) if targets.size > 1 else 0.0
    rs = np.linspace(0.0, 1.0, steps)
    out = np.empty(rs.size)
    for i, r in enumerate(rs):
        out[i] = math.inf if r >= 1.0 else 0.5 * sd * r / (1.0 - r)
    return out


def default_methods(family: str) -> tuple[str, ...]:
    if family in ("bid", "bidneg"):
        return ("none", "own", "uknc", "bin", "cosh")
    return ("none", "own", "uknc", "bin", "cosh", "posh")


def family_param_points(
    family: str,
    dataset_targets,
    *,
    alpha_steps: int | None = None,
    beta_steps: int = 10,
    rho_steps: int = 10,
) -> tuple[tuple[float, ...], ...]:
    """Parameter tuples per family: (beta,), (alpha,) or (alpha, rho)."""
    if family in ("bid", "bidneg"):
        return tuple((float(b),) for b in beta_grid(dataset_targets, beta_steps))
    if family in ("asym_abs", "asym_sq"):
        steps = 10 if alpha_steps is None else alpha_steps
        return tuple((float(a),) for a in alpha_grid(steps))
    if family in ("asym_abs_reject", "asym_sq_reject"):
        steps = 5 if alpha_steps is None else alpha_steps
        alphas = alpha_grid(steps)
        rhos = rho_grid(dataset_targets, rho_steps)
        return tuple((float(a), float(r)) for a in alphas for r in rhos)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def family_spec(family: str, point: tuple[float, ...]) -> LossSpec:
    if family == "bid":
        return Bid(beta=point[0])
    if family == "bidneg":
        return BidNonLosing(beta=point[0])
    if family == "asym_abs":
        return AsymAbsolute(alpha=point[0])
    if family == "asym_sq":
        return AsymSquared(alpha=point[0])
    if family == "asym_abs_reject":
        return AsymAbsoluteReject(alpha=point[0], rho=point[1])
    if family == "asym_sq_reject":
        return AsymSquaredReject(alpha=point[0], rho=point[1])
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


# ---------------------------------------------------------------------------
# Pipeline options and soft-model construction


@dataclass(frozen=True)
class HarnessOptions:
    knn_k: int = 10
    enrichment_k: int = 10
    ols_se_mode: str = "predictive"
    tree_params: TreeParams | None = None
    conformal_holdout: float = 0.0


def fit_soft_model(base_name: str, train: Dataset, method: str, opts: HarnessOptions):
    """Fit base + variance attachment for one training fold.

    With a conformal holdout fraction p the base is refitted on the first
    1-p of the fold (order preserved) and calibrated on the remainder;
    otherwise the training fold itself calibrates.
    """
    if method == "conformal" and opts.conformal_holdout > 0.0:
        n = train.n_rows
        cut = int(round(n * (1.0 - opts.conformal_holdout)))
        cut = min(max(cut, 1), n - 1)
        proper = train.subset(range(cut))
        calibration = train.subset(range(cut, n))
        base = fit_base(
            base_name,
            proper,
            k=opts.knn_k,
            ols_se_mode=opts.ols_se_mode,
            tree_params=opts.tree_params,
        )
        return conformal_attach(base, calibration)
    base = fit_base(
        base_name, train, k=opts.knn_k, ols_se_mode=opts.ols_se_mode, tree_params=opts.tree_params
    )
    return enrich(base, train, method, k=opts.enrichment_k)


def _mean_loss_local(spec: LossSpec, mus: np.ndarray, sigmas: np.ndarray, ys: np.ndarray) -> float:
    """Mean realised test loss of the per-instance optimal decisions.

    Asymmetric families use the standardised optimum (one quantile / root
    per alpha, affine per instance); other families reframe per instance.
    """
    if isinstance(spec, AsymAbsolute):
        t = mus + sigmas * gaussian.ppf(_clamp_alpha(spec.alpha))
        return float(np.mean(loss_on_actuals(spec, t, ys)))
    if isinstance(spec, AsymSquared):
        t = mus + sigmas * solve_asym_sq_tprime(spec.alpha)
        return float(np.mean(loss_on_actuals(spec, t, ys)))
    if isinstance(spec, AsymAbsoluteReject):
        z = gaussian.ppf(_clamp_alpha(spec.alpha))
        t = mus + sigmas * z
        expected = (z * gaussian.cdf(z) + gaussian.pdf(z) - spec.alpha * z) * sigmas
        realised = loss_on_actuals(spec, t, ys)
        return float(np.mean(np.where(expected > spec.rho, spec.rho, realised)))
    if isinstance(spec, AsymSquaredReject):
        tp = solve_asym_sq_tprime(spec.alpha)
        t = mus + sigmas * tp
        c = gaussian.cdf(tp)
        p = gaussian.pdf(tp)
        unit = (1.0 - 2.0 * spec.alpha) * (c * (tp * tp + 1.0) + tp * p) + spec.alpha * (
            tp * tp + 1.0
        )
        expected = sigmas**2 * unit
        realised = loss_on_actuals(spec, t, ys)
        return float(np.mean(np.where(expected > spec.rho, spec.rho, realised)))
    total = 0.0
    for mu, sigma, y in zip(mus, sigmas, ys):
        decision = reframe(spec, NormalPrediction(float(mu), float(sigma)))
        total += eval_loss(spec, decision, float(y))
    return total / len(ys)


def _mean_loss_global(
    spec: LossSpec, policy, test_yhat: np.ndarray, ys: np.ndarray
) -> float:
    if isinstance(policy, GlobalRejectRate):
        if policy.reject_all:
            return spec.rho
        policy = policy.inner
    applied = policy.apply(test_yhat)
    return float(np.mean(loss_on_actuals(underlying_spec(spec), applied, ys)))


def evaluate_cells(
    ds: Dataset,
    spec_builder: Callable[[tuple[float, ...]], LossSpec],
    bases: Sequence[str],
    methods: Sequence[str],
    params: Sequence[tuple[float, ...]],
    opts: HarnessOptions,
) -> dict:
    """All (base, method, param, fold) mean test losses for one dataset."""
    cells = {}
    for fold in split_two_fold_ordered(ds):
        train = ds.subset(fold.train_indices)
        test = ds.subset(fold.test_indices)
        for base_name in bases:
            base = fit_base(
                base_name,
                train,
                k=opts.knn_k,
                ols_se_mode=opts.ols_se_mode,
                tree_params=opts.tree_params,
            )
            train_yhat = np.array([base.predict(x).mu for x in train.features])
            test_yhat = np.array([base.predict(x).mu for x in test.features])
            soft_cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}
            for method in methods:
                if method == "none":
                    for point in params:
                        spec = spec_builder(point)
                        loss = float(
                            np.mean(loss_on_actuals(spec, test_yhat, test.targets))
                        )
                        cells[(ds.name, base_name, method, point, fold.fold_id)] = loss
                elif method in GLOBAL_METHODS:
                    fitter = cosh_fit if method == "cosh" else posh_fit
                    for point in params:
                        spec = spec_builder(point)
                        policy = fitter(spec, train_yhat, train.targets)
                        if isinstance(spec, REJECT_SPECS):
                            policy = global_reject_fit(
                                spec, train_yhat, train.targets, policy
                            )
                        loss = _mean_loss_global(spec, policy, test_yhat, test.targets)
                        cells[(ds.name, base_name, method, point, fold.fold_id)] = loss
                else:
                    if method not in soft_cache:
                        soft = fit_soft_model(base_name, train, method, opts)
                        preds = [soft.predict(x) for x in test.features]
                        soft_cache[method] = (
                            np.array([p.mu for p in preds]),
                            np.array([p.sigma for p in preds]),
                        )
                    mus, sigmas = soft_cache[method]
                    for point in params:
                        spec = spec_builder(point)
                        loss = _mean_loss_local(spec, mus, sigmas, test.targets)
                        cells[(ds.name, base_name, method, point, fold.fold_id)] = loss
    return cells


# ---------------------------------------------------------------------------
# Tables, ranks, significance


@dataclass
class ExperimentTable:
    family: str
    bases: tuple[str, ...]
    methods: tuple[str, ...]
    datasets: tuple[str, ...]
    param_points: dict[str, tuple[tuple[float, ...], ...]]
    cells: dict[tuple, float]
    aggregated: dict[tuple[str, str, str], float]
    scale_factor: float = 10.0
    failures: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RankSummary:
    average_ranks: dict[str, float]
    friedman_statistic: float = math.nan
    critical_value: float = math.nan
    nemenyi_cd: float = math.nan
    significant: bool = False


def _validate_methods(methods: Sequence[str]):
    for m in methods:
        if m in ("none",) + GLOBAL_METHODS:
            continue
        parse_method(m)  # raises MethodGrammarError on bad strings


def run_family(
    datasets: Sequence[Dataset],
    family: str,
    bases: Sequence[str] = ("lr", "knn", "tree"),
    methods: Sequence[str] | None = None,
    *,
    alpha_steps: int | None = None,
    beta_steps: int = 10,
    rho_steps: int = 10,
    options: HarnessOptions = HarnessOptions(),
    scale_factor: float = 10.0,
    log: Callable[[str], None] | None = None,
) -> ExperimentTable:
    """Full protocol for one loss family over several datasets.

    A failure in any cell excludes that dataset entirely (the design must
    stay rectangular for the rank tests) and records the diagnostic.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    methods = tuple(methods) if methods else default_methods(family)
    _validate_methods(methods)
    bases = tuple(bases)
    cells: dict[tuple, float] = {}
    included: list[str] = []
    param_points: dict[str, tuple] = {}
    failures: dict[str, str] = {}
    spec_builder = lambda point, _family=family: family_spec(_family, point)
    for ds in datasets:
        try:
            params = family_param_points(
                family,
                ds.targets,
                alpha_steps=alpha_steps,
                beta_steps=beta_steps,
                rho_steps=rho_steps,
            )
            ds_cells = evaluate_cells(ds, spec_builder, bases, methods, params, options)
        except Exception as exc:  # noqa: BLE001 - any cell failure drops the dataset
            failures[ds.name] = f"{type(exc).__name__}: {exc}"
            if log is not None:
                log(f"dataset {ds.name} excluded: {failures[ds.name]}")
            continue
        cells.update(ds_cells)
        included.append(ds.name)
        param_points[ds.name] = params

    aggregated: dict[tuple[str, str, str], float] = {}
    for name in included:
        params = param_points[name]
        for base_name in bases:
            for method in methods:
                vals = [
                    cells[(name, base_name, method, point, fold_id)]
                    for point in params
                    for fold_id in (1, 2)
                ]
                aggregated[(name, base_name, method)] = float(np.mean(vals))
    return ExperimentTable(
        family=family,
        bases=bases,
        methods=methods,
        datasets=tuple(included),
        param_points=param_points,
        cells=cells,
        aggregated=aggregated,
        scale_factor=scale_factor,
        failures=failures,
    )


def run_fixed_loss(
    datasets: Sequence[Dataset],
    spec: LossSpec,
    bases: Sequence[str] = ("lr", "knn", "tree"),
    methods: Sequence[str] | None = None,
    *,
    label: str | None = None,
    options: HarnessOptions = HarnessOptions(),
    scale_factor: float = 10.0,
    log: Callable[[str], None] | None = None,
) -> ExperimentTable:
    """Same protocol as run_family but for one explicit loss spec (single
    parameter point), e.g. a tolerance loss from the CLI grammar."""
    methods = tuple(methods) if methods else ("none", "own", "uknc", "bin", "cosh", "posh")
    _validate_methods(methods)
    bases = tuple(bases)
    label = label or type(spec).__name__.lower()
    params: tuple[tuple[float, ...], ...] = ((),)
    cells: dict[tuple, float] = {}
    included: list[str] = []
    param_points: dict[str, tuple] = {}
    failures: dict[str, str] = {}
    for ds in datasets:
        try:
            ds_cells = evaluate_cells(ds, lambda point: spec, bases, methods, params, options)
        except Exception as exc:  # noqa: BLE001
            failures[ds.name] = f"{type(exc).__name__}: {exc}"
            if log is not None:
                log(f"dataset {ds.name} excluded: {failures[ds.name]}")
            continue
        cells.update(ds_cells)
        included.append(ds.name)
        param_points[ds.name] = params
    aggregated = {
        (name, base_name, method): float(
            np.mean([cells[(name, base_name, method, (), fold_id)] for fold_id in (1, 2)])
        )
        for name in included
        for base_name in bases
        for method in methods
    }
    return ExperimentTable(
        family=label,
        bases=bases,
        methods=methods,
        datasets=tuple(included),
        param_points=param_points,
        cells=cells,
        aggregated=aggregated,
        scale_factor=scale_factor,
        failures=failures,
    )


def average_ranks(table: ExperimentTable, base: str) -> RankSummary:
    """Average rank of every method over datasets for one base technique;
    rank 1 is the lowest aggregated loss, ties share the mean rank."""
    if not table.datasets:
        raise ValueError("no datasets in table")
    sums = dict.fromkeys(table.methods, 0.0)
    for name in table.datasets:
        row = np.array([table.aggregated[(name, base, m)] for m in table.methods])
        ranks = rankdata(row, method="average")
        for m, r in zip(table.methods, ranks):
            sums[m] += float(r)
    n = len(table.datasets)
    return RankSummary(average_ranks={m: sums[m] / n for m in table.methods})


def friedman_nemenyi(
    avg_ranks: Mapping[str, float], k: int, n_datasets: int, level: float = 0.05
) -> RankSummary:
    """Friedman chi-square over average ranks plus the Nemenyi critical
    difference.  The critical value comes from the chi-square distribution
    with k-1 degrees of freedom."""
    if k != len(avg_ranks):
        raise ValueError("k does not match the number of ranked methods")
    if k < 2 or n_datasets < 2:
        raise ValueError("need at least 2 methods and 2 datasets")
    if k > 10:
        raise ValueError("Nemenyi table only covers up to 10 methods")
    if level != 0.05:
        raise ValueError("only the 0.05 level is tabulated")
    ranks = np.array(list(avg_ranks.values()), dtype=float)
    stat = 12.0 * n_datasets / (k * (k + 1)) * (float(np.sum(ranks**2)) - k * (k + 1) ** 2 / 4.0)
    critical = float(chi2.ppf(1.0 - level, k - 1))
    cd = NEMENYI_Q_05[k] * math.sqrt(k * (k + 1) / (6.0 * n_datasets))
    return RankSummary(
        average_ranks=dict(avg_ranks),
        friedman_statistic=float(stat),
        critical_value=critical,
        nemenyi_cd=float(cd),
        significant=bool(stat > critical),
    )


def rank_summaries(table: ExperimentTable, level: float = 0.05) -> dict[str, RankSummary]:
    """Per-base rank summary with significance tests filled in."""
    out = {}
    for base in table.bases:
        ranks = average_ranks(table, base)
        out[base] = friedman_nemenyi(
            ranks.average_ranks, len(table.methods), len(table.datasets), level
        )
    return out


# ---------------------------------------------------------------------------
# Parameter sweeps (per-dataset loss curves) and density-estimation metrics


def run_sweep(
    datasets: Sequence[Dataset],
    family: str,
    bases: Sequence[str] = ("lr", "knn", "tree"),
    methods: Sequence[str] | None = None,
    *,
    alpha_steps: int | None = None,
    beta_steps: int = 10,
    rho_steps: int = 10,
    options: HarnessOptions = HarnessOptions(),
) -> dict[tuple[str, str], tuple[np.ndarray, dict[str, np.ndarray]]]:
    """Loss per grid parameter (folds averaged) for every (dataset, base).

    The sweep parameter is the primitive grid variable: a in [0, 1] for
    bids, alpha for the asymmetric losses, r for the rejection families
    (with alpha pinned at 0.5, matching the usual presentation).
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    methods = tuple(methods) if methods else default_methods(family)
    _validate_methods(methods)
    out = {}
    for ds in datasets:
        if family in ("bid", "bidneg"):
            xs = np.linspace(0.0, 1.0, beta_steps)
            params = tuple((float(b),) for b in beta_grid(ds.targets, beta_steps))
        elif family in ("asym_abs", "asym_sq"):
            steps = 10 if alpha_steps is None else alpha_steps
            xs = alpha_grid(steps)
            params = tuple((float(a),) for a in xs)
        else:
            xs = np.linspace(0.0, 1.0, rho_steps)
            params = tuple((0.5, float(r)) for r in rho_grid(ds.targets, rho_steps))
        spec_builder = lambda point, _family=family: family_spec(_family, point)
        for base_name in bases:
            cells = evaluate_cells(ds, spec_builder, (base_name,), methods, params, options)
            curves = {}
            for method in methods:
                curves[method] = np.array(
                    [
                        np.mean(
                            [
                                cells[(ds.name, base_name, method, point, fold_id)]
                                for fold_id in (1, 2)
                            ]
                        )
                        for point in params
                    ]
                )
            out[(ds.name, base_name)] = (xs, curves)
    return out


def evaluate_ncde(
    datasets: Sequence[Dataset],
    bases: Sequence[str],
    methods: Sequence[str],
    options: HarnessOptions = HarnessOptions(),
) -> list[dict]:
    """Fold-averaged mrse/msll/msvr rows per (dataset, base, method)."""
    for m in methods:
        parse_method(m)
    rows = []
    for ds in datasets:
        folds = split_two_fold_ordered(ds)
        for base_name in bases:
            per_method: dict[str, list[MetricReport]] = {m: [] for m in methods}
            for fold in folds:
                train = ds.subset(fold.train_indices)
                test = ds.subset(fold.test_indices)
                train_mean = float(np.mean(train.targets))
                for method in methods:
                    soft = fit_soft_model(base_name, train, method, options)
                    per_method[method].append(evaluate_soft(soft, test, train_mean))
            for method in methods:
                reports = per_method[method]
                rows.append(
                    {
                        "dataset": ds.name,
                        "base": base_name,
                        "method": method,
                        "mrse": float(np.mean([r.mrse for r in reports])),
                        "msll": float(np.mean([r.msll for r in reports])),
                        "msvr": float(np.mean([r.msvr for r in reports])),
                    }
                )
    return rows
