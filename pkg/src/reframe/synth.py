"""Seeded synthetic regression datasets with known conditional (mu, sigma).

Three generators:

* ``linear-homoscedastic``: linear mean, constant noise sd.
* ``linear-heteroscedastic``: linear mean, noise sd affine in the feature.
* ``step-heteroscedastic``: zero mean, noise sd doubling on the x = 1 block.

Each returns the dataset plus the true per-row (mu, sigma) so oracle soft
models and coverage checks need no estimation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

GENERATORS = ("linear-homoscedastic", "linear-heteroscedastic", "step-heteroscedastic")

_ALIASES = {
    "linear-hom": "linear-homoscedastic",
    "linear-het": "linear-heteroscedastic",
    "step-het": "step-heteroscedastic",
}


@dataclass(frozen=True)
class SyntheticTruth:
    dataset: Dataset
    mu: np.ndarray
    sigma: np.ndarray


def canonical_generator(name: str) -> str:
    name = name.strip().lower()
    name = _ALIASES.get(name, name)
    if name not in GENERATORS:
        raise ValueError(f"unknown generator {name!r}; expected one of {GENERATORS}")
    return name


def generate(kind: str, n: int, seed: int = 0) -> SyntheticTruth:
    kind = canonical_generator(kind)
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    if kind == "linear-homoscedastic":
        x = rng.uniform(0.0, 1.0, size=n)
        mu = 1.0 + 4.0 * x
        sigma = np.full(n, 1.0)
    elif kind == "linear-heteroscedastic":
        x = rng.uniform(0.0, 1.0, size=n)
        mu = 1.0 + 4.0 * x
        sigma = 0.5 + 2.0 * x
    else:  # step-heteroscedastic
        x = rng.integers(0, 2, size=n).astype(float)
        mu = np.zeros(n)
        sigma = 1.0 + x
    y = mu + sigma * rng.standard_normal(n)
    ds = Dataset(
        name=f"{kind}-n{n}-seed{seed}",
        feature_names=("x",),
        features=x.reshape(-1, 1),
        targets=y,
    )
    return SyntheticTruth(dataset=ds, mu=mu, sigma=sigma)
