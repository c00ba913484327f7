"""Loss families over (estimate, actual) pairs, and their structure.

Every loss is a pure function l(y_hat, y).  ``eval_loss`` scores a single
decision (a predicted value or an abstention); ``loss_on_actuals`` is the
vectorised core used by the quadrature oracle and the global shift
searches.  ``loss_properties`` exposes symmetry/continuity metadata and
breakpoint locations so numeric integration can split at them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np


class LossGrammarError(ValueError):
    """Raised when a loss specification string does not parse."""


def _check_unit(name, v):
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {v}")


def _check_nonneg(name, v):
    if not v >= 0.0:
        raise ValueError(f"{name} must be nonnegative, got {v}")


@dataclass(frozen=True)
class Absolute:
    pass


@dataclass(frozen=True)
class Squared:
    pass


@dataclass(frozen=True)
class BoundedAbsolute:
    beta: float

    def __post_init__(self):
        _check_nonneg("beta", self.beta)


@dataclass(frozen=True)
class Bid:
    """Deal at y_hat <= y pays beta - y_hat (negative is profit), else zero."""

    beta: float


@dataclass(frozen=True)
class BidNonLosing:
    """Like Bid but a deal additionally requires beta <= y_hat (never bid at a loss)."""

    beta: float


@dataclass(frozen=True)
class AsymAbsolute:
    """Linear loss with cost proportion alpha for underestimation."""

    alpha: float

    def __post_init__(self):
        _check_unit("alpha", self.alpha)


@dataclass(frozen=True)
class AsymSquared:
    alpha: float

    def __post_init__(self):
        _check_unit("alpha", self.alpha)


@dataclass(frozen=True)
class AsymAbsoluteReject:
    """Asymmetric absolute loss with an abstention option costing rho."""

    alpha: float
    rho: float

    def __post_init__(self):
        _check_unit("alpha", self.alpha)
        _check_nonneg("rho", self.rho)


@dataclass(frozen=True)
class AsymSquaredReject:
    alpha: float
    rho: float

    def __post_init__(self):
        _check_unit("alpha", self.alpha)
        _check_nonneg("rho", self.rho)


@dataclass(frozen=True)
class Tolerance:
    """Zero inside an asymmetric tolerance band, alpha / 1-alpha outside."""

    alpha: float
    tau_minus: float
    tau_plus: float

    def __post_init__(self):
        _check_unit("alpha", self.alpha)
        _check_nonneg("tau_minus", self.tau_minus)
        _check_nonneg("tau_plus", self.tau_plus)


LossSpec = Union[
    Absolute,
    Squared,
    BoundedAbsolute,
    Bid,
    BidNonLosing,
    AsymAbsolute,
    AsymSquared,
    AsymAbsoluteReject,
    AsymSquaredReject,
    Tolerance,
]

REJECT_SPECS = (AsymAbsoluteReject, AsymSquaredReject)


@dataclass(frozen=True)
class Predict:
    value: float


@dataclass(frozen=True)
class Reject:
    pass


REJECT = Reject()
Decision = Union[Predict, Reject]


def underlying_spec(spec: LossSpec) -> LossSpec:
    """Strip the rejection option, if any."""
    if isinstance(spec, AsymAbsoluteReject):
        return AsymAbsolute(spec.alpha)
    if isinstance(spec, AsymSquaredReject):
        return AsymSquared(spec.alpha)
    return spec


def loss_on_actuals(spec: LossSpec, t, y):
    """Vectorised l(t, y); ``t`` and ``y`` broadcast against each other.

    Rejection-variant specs score the prediction branch here (abstentions
    are handled by eval_loss).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    spec = underlying_spec(spec)
    if isinstance(spec, Absolute):
        out = np.abs(t - y)
    elif isinstance(spec, Squared):
        out = (t - y) ** 2
    elif isinstance(spec, BoundedAbsolute):
        out = np.minimum(np.abs(t - y), spec.beta)
    elif isinstance(spec, Bid):
        out = np.where(t <= y, spec.beta - t, 0.0)
    elif isinstance(spec, BidNonLosing):
        out = np.where((t <= y) & (spec.beta <= t), spec.beta - t, 0.0)
    elif isinstance(spec, AsymAbsolute):
        out = np.where(t < y, spec.alpha * (y - t), (1.0 - spec.alpha) * (t - y))
    elif isinstance(spec, AsymSquared):
        out = np.where(t < y, spec.alpha * (y - t) ** 2, (1.0 - spec.alpha) * (t - y) ** 2)
    elif isinstance(spec, Tolerance):
        out = np.where(
            t + spec.tau_minus < y,
            spec.alpha,
            np.where(t - spec.tau_plus > y, 1.0 - spec.alpha, 0.0),
        )
    else:
        raise TypeError(f"unknown loss spec {spec!r}")
    return float(out) if out.ndim == 0 else out


def eval_loss(spec: LossSpec, decision: Decision, y: float) -> float:
    """Score one decision against the actual value."""
    if isinstance(decision, Reject):
        if isinstance(spec, REJECT_SPECS):
            return spec.rho
        raise ValueError(f"Reject is not a legal decision under {type(spec).__name__}")
    if isinstance(decision, Predict):
        return float(loss_on_actuals(spec, decision.value, y))
    raise TypeError(f"decision must be Predict or Reject, got {decision!r}")


@dataclass(frozen=True)
class LossProperties:
    symmetric: bool
    commutative: bool
    continuous: bool
    spec: LossSpec

    def discontinuity_points(self, y: float) -> tuple[float, ...]:
        """Estimate values t at which t |-> l(t, y) jumps, for fixed y."""
        spec = underlying_spec(self.spec)
        if isinstance(spec, Bid):
            return (y,)
        if isinstance(spec, BidNonLosing):
            return (y, spec.beta)
        if isinstance(spec, Tolerance):
            return (y - spec.tau_minus, y + spec.tau_plus)
        return ()

    def integrand_breakpoints(self, t: float) -> tuple[float, ...]:
        """Actual values y at which y |-> l(t, y) is discontinuous or kinked,
        for fixed t.  Quadrature splits its range here so every piece is
        smooth."""
        spec = underlying_spec(self.spec)
        if isinstance(spec, (Absolute, AsymAbsolute, Squared, AsymSquared)):
            return (t,)
        if isinstance(spec, BoundedAbsolute):
            return (t - spec.beta, t, t + spec.beta)
        if isinstance(spec, Bid):
            return (t,)
        if isinstance(spec, BidNonLosing):
            return (t,) if spec.beta <= t else ()
        if isinstance(spec, Tolerance):
            return (t - spec.tau_plus, t + spec.tau_minus)
        return ()


def loss_properties(spec: LossSpec) -> LossProperties:
    base = underlying_spec(spec)
    if isinstance(base, (Absolute, Squared, BoundedAbsolute)):
        return LossProperties(symmetric=True, commutative=True, continuous=True, spec=spec)
    if isinstance(base, (Bid, BidNonLosing)):
        return LossProperties(symmetric=False, commutative=False, continuous=False, spec=spec)
    if isinstance(base, (AsymAbsolute, AsymSquared)):
        sym = base.alpha == 0.5
        return LossProperties(symmetric=sym, commutative=sym, continuous=True, spec=spec)
    if isinstance(base, Tolerance):
        sym = base.alpha == 0.5 and base.tau_minus == base.tau_plus
        return LossProperties(symmetric=sym, commutative=sym, continuous=False, spec=spec)
    raise TypeError(f"unknown loss spec {spec!r}")


# ---------------------------------------------------------------------------
# String grammar, e.g. "bid:beta=3" or "asym_abs_reject:alpha=0.5,rho=0.3"

LOSS_GRAMMAR = (
    "abs | sq | bounded_abs:beta=B | bid:beta=B | bidneg:beta=B | "
    "asym_abs:alpha=A | asym_sq:alpha=A | asym_abs_reject:alpha=A,rho=R | "
    "asym_sq_reject:alpha=A,rho=R | tolerance:alpha=A,tau_minus=T,tau_plus=T"
)

_LOSS_BUILDERS = {
    "abs": (Absolute, ()),
    "sq": (Squared, ()),
    "bounded_abs": (BoundedAbsolute, ("beta",)),
    "bid": (Bid, ("beta",)),
    "bidneg": (BidNonLosing, ("beta",)),
    "asym_abs": (AsymAbsolute, ("alpha",)),
    "asym_sq": (AsymSquared, ("alpha",)),
    "asym_abs_reject": (AsymAbsoluteReject, ("alpha", "rho")),
    "asym_sq_reject": (AsymSquaredReject, ("alpha", "rho")),
    "tolerance": (Tolerance, ("alpha", "tau_minus", "tau_plus")),
}


def parse_loss(text: str) -> LossSpec:
    """Parse a loss spec string; raises LossGrammarError listing the grammar."""
    name, _, argpart = text.strip().partition(":")
    if name not in _LOSS_BUILDERS:
        raise LossGrammarError(f"unknown loss {name!r}; grammar: {LOSS_GRAMMAR}")
    cls, param_names = _LOSS_BUILDERS[name]
    kwargs = {}
    if argpart:
        for item in argpart.split(","):
            key, _, val = item.partition("=")
            key = key.strip()
            if key not in param_names or not val:
                raise LossGrammarError(
                    f"bad parameter {item!r} for {name}; grammar: {LOSS_GRAMMAR}"
                )
            try:
                kwargs[key] = float(val)
            except ValueError:
                raise LossGrammarError(
                    f"non-numeric value in {item!r}; grammar: {LOSS_GRAMMAR}"
                ) from None
    missing = [p for p in param_names if p not in kwargs]
    if missing:
        raise LossGrammarError(
            f"loss {name} needs parameters {param_names}; grammar: {LOSS_GRAMMAR}"
        )
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise LossGrammarError(str(exc)) from None
