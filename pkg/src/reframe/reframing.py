"""Loss-optimal predictions from conditional Gaussian beliefs.

Two routes to the expected loss of a candidate prediction:

* ``expected_loss_quadrature`` integrates the raw loss against the
  Gaussian density (the module-wide verification oracle), and
* closed forms for the asymmetric absolute / squared families derived
  from the truncated-normal partial moments, cross-checked against the
  oracle in the test suite.

Per-instance reframers minimise the expected loss (closed form, analytic
product objective, or a grid + golden-section numeric search).  Global
policies (constant shift, degree-1 polynomial shift, all-or-nothing
reject rate) are fitted on training predictions instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import gaussian
from .losses import (
    REJECT,
    REJECT_SPECS,
    AsymAbsolute,
    AsymAbsoluteReject,
    AsymSquared,
    AsymSquaredReject,
    Bid,
    BidNonLosing,
    Decision,
    LossSpec,
    Predict,
    Reject,
    Tolerance,
    loss_on_actuals,
    loss_properties,
    underlying_spec,
)

ALPHA_CLAMP = 1e-9
_GOLDEN_RATIO_CONJ = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ExpectedLoss:
    value: float
    method: str  # "closed_form" | "quadrature"


# ---------------------------------------------------------------------------
# Quadrature oracle


def _simpson_piece(spec, t, a, b, mu, sigma, n_points):
    n = n_points if n_points % 2 == 1 else n_points + 1
    ys = np.linspace(a, b, n)
    # nudge the endpoints inward so branch boundaries resolve to the
    # piece's interior side
    tiny = (b - a) * 1e-12
    ys[0] += tiny
    ys[-1] -= tiny
    vals = loss_on_actuals(spec, t, ys) * gaussian.density(ys, mu, sigma)
    h = (b - a) / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(h / 3.0 * (w @ vals))


def expected_loss_quadrature(
    spec: LossSpec, t, pred, n_points: int = 2001, span: float = 10.0
) -> ExpectedLoss:
    """Numerically integrate l(t, y) phi(y; mu, sigma^2) over a +/- span*sigma
    window, splitting at every point where the integrand is not smooth.

    ``t`` may be a plain value, Predict, or Reject (which costs rho flat).
    """
    if isinstance(t, Reject):
        if not isinstance(spec, REJECT_SPECS):
            raise ValueError("Reject is only legal for rejection-variant losses")
        return ExpectedLoss(spec.rho, "quadrature")
    if isinstance(t, Predict):
        t = t.value
    t = float(t)
    mu, sigma = pred.mu, pred.sigma
    lo, hi = mu - span * sigma, mu + span * sigma
    props = loss_properties(spec)
    cuts = sorted(p for p in props.integrand_breakpoints(t) if lo < p < hi)
    edges = [lo, *cuts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            total += _simpson_piece(spec, t, a, b, mu, sigma, n_points)
    return ExpectedLoss(total, "quadrature")


# ---------------------------------------------------------------------------
# Scalar minimisation helpers


def _golden_min(f, a, b, tol, max_iter=200):
    """Golden-section minimum of a unimodal f on [a, b]; returns (x, f(x))."""
    if b < a:
        a, b = b, a
    c = b - _GOLDEN_RATIO_CONJ * (b - a)
    d = a + _GOLDEN_RATIO_CONJ * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while (b - a) > tol and it < max_iter:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN_RATIO_CONJ * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN_RATIO_CONJ * (b - a)
            fd = f(d)
        it += 1
    x = (a + b) / 2.0
    return x, f(x)


def _grid_then_golden(objective, candidates, tol, vectorized=None):
    """Score all candidates, then refine around the best with golden section.

    Never returns a point worse than the best grid candidate.
    """
    vals = vectorized(candidates) if vectorized is not None else np.array(
        [objective(t) for t in candidates]
    )
    i = int(np.argmin(vals))
    best_t, best_v = float(candidates[i]), float(vals[i])
    a = float(candidates[max(0, i - 1)])
    b = float(candidates[min(len(candidates) - 1, i + 1)])
    if b > a:
        x, v = _golden_min(objective, a, b, tol)
        if v < best_v:
            best_t, best_v = float(x), float(v)
    return best_t, best_v


# ---------------------------------------------------------------------------
# Generic numeric reframer


def _candidate_grid(spec: LossSpec, pred) -> np.ndarray:
    mu, sigma = pred.mu, pred.sigma
    grid = np.linspace(mu - 8.0 * sigma, mu + 8.0 * sigma, 2001)
    base = underlying_spec(spec)
    if isinstance(base, (Bid, BidNonLosing)):
        grid = np.concatenate([grid, [base.beta, mu]])
    return np.unique(grid)


def reframe_numeric(spec: LossSpec, pred) -> Decision:
    """Minimise the quadrature expected loss over a candidate grid, refine
    with golden section; rejection variants abstain when even the best
    prediction is expected to cost more than rho."""
    objective = lambda t: expected_loss_quadrature(spec, t, pred).value
    tol = 1e-10 * pred.sigma
    best_t, best_v = _grid_then_golden(objective, _candidate_grid(spec, pred), tol)
    if isinstance(spec, REJECT_SPECS) and best_v > spec.rho:
        return REJECT
    return Predict(best_t)


# ---------------------------------------------------------------------------
# Bid losses: analytic product objective, numeric argmin


def reframe_bid(beta: float, pred) -> float:
    """argmin over t of (beta - t)(1 - F(t)) for the Gaussian belief."""
    mu, sigma = pred.mu, pred.sigma

    def objective(t):
        return (beta - t) * (1.0 - gaussian.cdf((t - mu) / sigma))

    def vectorized(ts):
        return (beta - ts) * (1.0 - gaussian.cdf((ts - mu) / sigma))

    cands = _candidate_grid(Bid(beta), pred)
    t, _ = _grid_then_golden(objective, cands, 1e-10 * sigma, vectorized)
    return t


def reframe_bidneg(beta: float, pred) -> float:
    """Non-losing variant: minimise (beta - t)(1 - F(t)) restricted to
    t >= beta.

    Below beta the loss is identically zero while t = beta already attains
    zero and t > beta attains <= 0, so the restricted argmin is global.
    """
    mu, sigma = pred.mu, pred.sigma

    def objective(t):
        t = max(t, beta)
        return (beta - t) * (1.0 - gaussian.cdf((t - mu) / sigma))

    cands = _candidate_grid(BidNonLosing(beta), pred)
    cands = cands[cands >= beta]
    if cands.size == 0:
        return beta
    vectorized = lambda ts: (beta - ts) * (1.0 - gaussian.cdf((ts - mu) / sigma))
    t, _ = _grid_then_golden(objective, cands, 1e-10 * sigma, vectorized)
    return max(beta, t)


# ---------------------------------------------------------------------------
# Asymmetric absolute: quantile reframer and closed-form expected loss


def _clamp_alpha(alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return min(max(alpha, ALPHA_CLAMP), 1.0 - ALPHA_CLAMP)


def reframe_asym_abs(alpha: float, pred) -> float:
    """Optimal prediction is the alpha-quantile of the belief."""
    return pred.mu + pred.sigma * gaussian.ppf(_clamp_alpha(alpha))


def expected_loss_asym_abs_normal(alpha: float, t: float, pred) -> ExpectedLoss:
    """[t' Phi(t') + phi(t') - alpha t'] sigma with t' = (t - mu)/sigma."""
    tp = (t - pred.mu) / pred.sigma
    value = (tp * gaussian.cdf(tp) + gaussian.pdf(tp) - alpha * tp) * pred.sigma
    return ExpectedLoss(value, "closed_form")


# ---------------------------------------------------------------------------
# Asymmetric squared: standardised root, affine map, closed-form loss


def _std_asym_sq_loss(alpha: float, tp: float) -> float:
    # expected loss for mu = 0, sigma = 1 (derived via truncated-normal
    # partial moments; symmetric case reduces to 0.5 (t'^2 + 1))
    c = gaussian.cdf(tp)
    p = gaussian.pdf(tp)
    return (1.0 - 2.0 * alpha) * (c * (tp * tp + 1.0) + tp * p) + alpha * (tp * tp + 1.0)


def _stationarity_residual(alpha: float, tp: float) -> float:
    # t' Phi(t') + phi(t') + t' alpha / (1 - 2 alpha); zero at the optimum
    return tp * gaussian.cdf(tp) + gaussian.pdf(tp) + tp * alpha / (1.0 - 2.0 * alpha)


_TPRIME_BRACKET = 10.0
_tprime_memo: dict[float, float] = {}


def solve_asym_sq_tprime(alpha: float) -> float:
    """Standardised optimal prediction for the asymmetric squared loss.

    Golden-section on the (convex) standardised expected-loss curve, then
    a guarded Newton polish on its stationarity residual; memoised per
    alpha since the value only depends on the asymmetry.
    """
    a = _clamp_alpha(alpha)
    if a == 0.5:
        return 0.0
    key = round(a, 12)
    cached = _tprime_memo.get(key)
    if cached is not None:
        return cached
    t, _ = _golden_min(
        lambda tp: _std_asym_sq_loss(a, tp), -_TPRIME_BRACKET, _TPRIME_BRACKET, 1e-12
    )
    for _ in range(8):
        r = _stationarity_residual(a, t)
        slope = gaussian.cdf(t) + a / (1.0 - 2.0 * a)
        if r == 0.0 or slope == 0.0:
            break
        t_next = t - r / slope
        if not -_TPRIME_BRACKET <= t_next <= _TPRIME_BRACKET:
            break
        if abs(_stationarity_residual(a, t_next)) < abs(r):
            t = t_next
        else:
            break
    _tprime_memo[key] = t
    return t


def reframe_asym_sq(alpha: float, pred) -> float:
    return pred.mu + pred.sigma * solve_asym_sq_tprime(alpha)


def expected_loss_asym_sq_normal(alpha: float, t: float, pred) -> ExpectedLoss:
    tp = (t - pred.mu) / pred.sigma
    value = pred.sigma**2 * _std_asym_sq_loss(alpha, tp)
    return ExpectedLoss(value, "closed_form")


# ---------------------------------------------------------------------------
# Rejection rule


def reject_decision(spec: AsymAbsoluteReject | AsymSquaredReject, pred) -> Decision:
    """Abstain iff the best prediction's expected loss exceeds rho."""
    if isinstance(spec, AsymAbsoluteReject):
        t_star = reframe_asym_abs(spec.alpha, pred)
        loss = expected_loss_asym_abs_normal(spec.alpha, t_star, pred).value
    elif isinstance(spec, AsymSquaredReject):
        t_star = reframe_asym_sq(spec.alpha, pred)
        loss = expected_loss_asym_sq_normal(spec.alpha, t_star, pred).value
    else:
        raise TypeError(f"reject_decision needs a rejection-variant spec, got {spec!r}")
    if loss > spec.rho:
        return REJECT
    return Predict(t_star)


def reframe(spec: LossSpec, pred) -> Decision:
    """Loss-optimal decision for one Gaussian belief, dispatching to the
    dedicated reframer of each family (numeric fallback for tolerance)."""
    if isinstance(spec, Bid):
        return Predict(reframe_bid(spec.beta, pred))
    if isinstance(spec, BidNonLosing):
        return Predict(reframe_bidneg(spec.beta, pred))
    if isinstance(spec, AsymAbsolute):
        return Predict(reframe_asym_abs(spec.alpha, pred))
    if isinstance(spec, AsymSquared):
        return Predict(reframe_asym_sq(spec.alpha, pred))
    if isinstance(spec, REJECT_SPECS):
        return reject_decision(spec, pred)
    if isinstance(spec, Tolerance):
        return reframe_numeric(spec, pred)
    # symmetric commutative losses: the mean is optimal for a symmetric belief
    return Predict(pred.mu)


# ---------------------------------------------------------------------------
# Global reframing policies


@dataclass(frozen=True)
class NoReframe:
    """Use the conditional mean as-is (and never abstain)."""


@dataclass(frozen=True)
class LocalProbabilistic:
    """Marker: decisions come from the per-instance reframers above."""


@dataclass(frozen=True)
class GlobalConstantShift:
    shift: float

    def apply(self, yhat):
        return yhat + self.shift


@dataclass(frozen=True)
class GlobalPolynomialShift:
    coeffs: tuple[float, ...]  # ascending powers of the prediction

    def apply(self, yhat):
        yhat = np.asarray(yhat, dtype=float)
        out = np.zeros_like(yhat)
        for c in reversed(self.coeffs):
            out = out * yhat + c
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GlobalRejectRate:
    """All-or-nothing abstention around an inner global policy.

    Random rejection at rate q costs q rho + (1-q) Lbar, linear in q, so
    the training optimum sits at an endpoint: abstain on everything iff
    rho < Lbar.
    """

    reject_all: bool
    inner: Union[GlobalConstantShift, GlobalPolynomialShift]


ReframePolicy = Union[
    NoReframe, LocalProbabilistic, GlobalConstantShift, GlobalPolynomialShift, GlobalRejectRate
]


def apply_policy(policy, yhat: float) -> Decision:
    if isinstance(policy, NoReframe):
        return Predict(float(yhat))
    if isinstance(policy, GlobalRejectRate):
        if policy.reject_all:
            return REJECT
        return apply_policy(policy.inner, yhat)
    if isinstance(policy, (GlobalConstantShift, GlobalPolynomialShift)):
        return Predict(float(policy.apply(yhat)))
    raise TypeError(f"cannot apply policy {policy!r}")


def _mean_shift_losses(spec, preds, ys, shifts):
    """Mean training loss of preds + s for every candidate shift, chunked."""
    out = np.empty(shifts.size)
    chunk = max(1, int(5_000_000 // max(1, preds.size)))
    for start in range(0, shifts.size, chunk):
        block = shifts[start : start + chunk]
        shifted = preds[None, :] + block[:, None]
        out[start : start + chunk] = loss_on_actuals(spec, shifted, ys[None, :]).mean(axis=1)
    return out


def _smallest_abs_argmin(candidates, values):
    m = values.min()
    tied = candidates[values == m]
    return float(tied[int(np.argmin(np.abs(tied)))])


def cosh_fit(spec: LossSpec, train_predictions, train_targets) -> GlobalConstantShift:
    """Best constant shift for the training set.

    Resolution-bounded covering search (2001 shifts across +/- the target
    range), then golden-section refinement for continuous losses or local
    grid halving (5 rounds of 101 points) for discontinuous ones.  Grid
    ties keep the smallest |shift|.  Rejection variants fit the underlying
    prediction loss.
    """
    spec = underlying_spec(spec)
    preds = np.asarray(train_predictions, dtype=float)
    ys = np.asarray(train_targets, dtype=float)
    if preds.size == 0 or preds.shape != ys.shape:
        raise ValueError("predictions and targets must be equal-length and nonempty")
    span = float(ys.max() - ys.min())
    if span == 0.0:
        shifts = np.array([0.0])
    else:
        shifts = np.linspace(-span, span, 2001)
    losses = _mean_shift_losses(spec, preds, ys, shifts)
    s0 = _smallest_abs_argmin(shifts, losses)
    best_v = float(losses.min())
    spacing = float(shifts[1] - shifts[0]) if shifts.size > 1 else 0.0
    if spacing > 0.0:
        if loss_properties(spec).continuous:
            objective = lambda s: float(np.mean(loss_on_actuals(spec, preds + s, ys)))
            x, v = _golden_min(objective, s0 - spacing, s0 + spacing, 1e-12 * max(1.0, span))
            if v < best_v:
                s0 = float(x)
        else:
            local_span = spacing
            for _ in range(5):
                local = np.linspace(s0 - local_span, s0 + local_span, 101)
                lv = _mean_shift_losses(spec, preds, ys, local)
                if lv.min() <= best_v:
                    s0 = _smallest_abs_argmin(local, lv)
                    best_v = float(lv.min())
                local_span /= 2.0
    return GlobalConstantShift(shift=s0)


def _hill_climb(objective, a, b, b_scale, max_moves=20000):
    scale = 0.1
    best = objective(a, b)
    moves = 0
    while scale >= 1e-8 and moves < max_moves:
        improved = False
        for da, db in (
            (scale, 0.0),
            (-scale, 0.0),
            (0.0, scale * b_scale),
            (0.0, -scale * b_scale),
        ):
            v = objective(a + da, b + db)
            if v < best:
                a, b, best = a + da, b + db, v
                improved = True
                moves += 1
        if not improved:
            scale /= 2.0
    return a, b, best


def posh_fit(spec: LossSpec, train_predictions, train_targets) -> GlobalPolynomialShift:
    """Degree-1 polynomial reframing s(yhat) = a yhat + b minimising mean
    training loss by coordinate hill-climbing with shrinking steps.

    Multi-start from identity, the best constant shift, and the
    least-squares line of targets on predictions; the constant-shift start
    guarantees the result never trains worse than cosh_fit.
    """
    spec = underlying_spec(spec)
    preds = np.asarray(train_predictions, dtype=float)
    ys = np.asarray(train_targets, dtype=float)
    if preds.size == 0 or preds.shape != ys.shape:
        raise ValueError("predictions and targets must be equal-length and nonempty")

    def objective(a, b):
        return float(np.mean(loss_on_actuals(spec, a * preds + b, ys)))

    yspan = float(ys.max() - ys.min())
    b_scale = yspan if yspan > 0 else 1.0
    var = float(np.var(preds))
    if var > 0:
        a_ls = float(np.cov(preds, ys, bias=True)[0, 1]) / var
        b_ls = float(np.mean(ys)) - a_ls * float(np.mean(preds))
    else:
        a_ls, b_ls = 1.0, float(np.mean(ys - preds))
    s0 = cosh_fit(spec, preds, ys).shift
    best = None
    for a0, b0 in ((1.0, 0.0), (1.0, s0), (a_ls, b_ls)):
        a, b, v = _hill_climb(objective, a0, b0, b_scale)
        if best is None or v < best[0]:
            best = (v, a, b)
    _, a, b = best
    return GlobalPolynomialShift(coeffs=(float(b), float(a)))


def global_reject_fit(
    spec: LossSpec, train_predictions, train_targets, inner
) -> GlobalRejectRate:
    """Endpoint rule for the optimal random-rejection rate: abstain on all
    instances iff rho is below the inner policy's mean training loss."""
    if not isinstance(spec, REJECT_SPECS):
        raise ValueError("global_reject_fit needs a rejection-variant loss")
    preds = np.asarray(train_predictions, dtype=float)
    ys = np.asarray(train_targets, dtype=float)
    applied = inner.apply(preds)
    mean_loss = float(np.mean(loss_on_actuals(underlying_spec(spec), applied, ys)))
    return GlobalRejectRate(reject_all=bool(spec.rho < mean_loss), inner=inner)
