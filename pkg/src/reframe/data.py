"""Numeric dataset ingestion, ordered two-fold splitting and shift statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


class IngestionError(ValueError):
    """Raised when a data file cannot be turned into a numeric dataset."""


class ConfigurationError(ValueError):
    """Raised when the requested ingestion configuration is impossible."""


@dataclass(frozen=True)
class Dataset:
    """Immutable numeric regression dataset.

    ``features`` is an (n, d) float array, ``targets`` the matching (n,)
    response.  Row order is significant everywhere in this package (folds
    are ordered splits), so constructors must preserve source order.
    """

    name: str
    feature_names: tuple[str, ...]
    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        targs = np.asarray(self.targets, dtype=float)
        if feats.ndim != 2:
            raise IngestionError("features must be a 2-d array")
        if feats.shape[1] < 1:
            raise IngestionError("dataset needs at least one feature column")
        if targs.shape != (feats.shape[0],):
            raise IngestionError("targets length does not match feature rows")
        if feats.shape[0] == 0:
            raise IngestionError("no rows")
        if len(self.feature_names) != feats.shape[1]:
            raise IngestionError("feature_names length does not match columns")
        if not (np.all(np.isfinite(feats)) and np.all(np.isfinite(targs))):
            raise IngestionError("dataset contains non-finite values")
        feats.flags.writeable = False
        targs.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "targets", targs)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            name=name if name is not None else self.name,
            feature_names=self.feature_names,
            features=self.features[idx].copy(),
            targets=self.targets[idx].copy(),
        )


@dataclass(frozen=True)
class FoldSplit:
    """Ordered train/test index split; indices keep original file order."""

    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    fold_id: int


@dataclass(frozen=True)
class ShiftStats:
    """Train/test distribution-shift summary.

    ``tr_te_md`` is |mean(train) - mean(test)| / sd(train) (NaN marks an
    undefined value when the training sd is zero); ``tr_te_ks`` is the
    two-sample Kolmogorov-Smirnov statistic in [0, 1].
    """

    tr_te_md: float
    tr_te_ks: float


def load_csv(path, target_column=None, sep: str = ",", name: str | None = None) -> Dataset:
    """Load a numeric CSV (header row, decimal point) into a Dataset.

    ``target_column`` may be a header name or a 0-based column index;
    default is the last column.  Every cell must parse as a float; the
    first offending cell is reported with its row and column.
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh, delimiter=sep)
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if len(rows) < 2:
        raise IngestionError(f"{path}: no rows")
    header = [h.strip() for h in rows[0]]
    n_cols = len(header)

    if target_column is None:
        target_idx = n_cols - 1
    elif isinstance(target_column, int) or (
        isinstance(target_column, str) and target_column.lstrip("-").isdigit()
    ):
        target_idx = int(target_column)
        if target_idx < 0:
            target_idx += n_cols
        if not 0 <= target_idx < n_cols:
            raise ConfigurationError(
                f"{path}: target column index {target_column} out of range for {n_cols} columns"
            )
    else:
        try:
            target_idx = header.index(target_column)
        except ValueError:
            raise ConfigurationError(
                f"{path}: target column {target_column!r} not in header {header}"
            ) from None

    if n_cols < 2:
        raise IngestionError(f"{path}: need at least one feature column besides the target")

    values = np.empty((len(rows) - 1, n_cols), dtype=float)
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols:
            raise IngestionError(f"{path}: row {i} has {len(row)} cells, expected {n_cols}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise IngestionError(
                    f"{path}: non-numeric cell at row {i}, column {header[j]!r}: {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise IngestionError(
                    f"{path}: non-finite cell at row {i}, column {header[j]!r}: {cell!r}"
                )
            values[i - 2, j] = v

    feature_idx = [j for j in range(n_cols) if j != target_idx]
    import os

    return Dataset(
        name=name if name is not None else os.path.splitext(os.path.basename(str(path)))[0],
        feature_names=tuple(header[j] for j in feature_idx),
        features=values[:, feature_idx],
        targets=values[:, target_idx],
    )


def split_two_fold_ordered(d: Dataset) -> tuple[FoldSplit, FoldSplit]:
    """Two-fold split without shuffling: fold 1 trains on the first
    ceil(n/2) rows and tests on the rest, fold 2 swaps the roles."""
    n = d.n_rows
    if n < 2:
        raise ValueError("need at least 2 rows for a 2-fold split")
    cut = (n + 1) // 2
    first = tuple(range(cut))
    second = tuple(range(cut, n))
    return (
        FoldSplit(train_indices=first, test_indices=second, fold_id=1),
        FoldSplit(train_indices=second, test_indices=first, fold_id=2),
    )


def _ecdf_sup_distance(a: np.ndarray, b: np.ndarray) -> float:
    """sup_x |ECDF_a(x) - ECDF_b(x)| evaluated at the pooled sample points."""
    a = np.sort(a)
    b = np.sort(b)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def shift_stats(train_targets, test_targets) -> ShiftStats:
    """Relative-means difference and KS statistic between two target samples."""
    tr = np.asarray(train_targets, dtype=float)
    te = np.asarray(test_targets, dtype=float)
    if tr.size == 0 or te.size == 0:
        raise ValueError("both samples must be nonempty")
    ks = _ecdf_sup_distance(tr, te)
    sd = float(np.std(tr, ddof=1)) if tr.size > 1 else 0.0
    if sd > 0:
        md = abs(float(np.mean(tr)) - float(np.mean(te))) / sd
    else:
        md = float("nan")
    return ShiftStats(tr_te_md=md, tr_te_ks=ks)


def dataset_summary(d: Dataset) -> dict:
    """One summary row per dataset: size, dimensionality and the two-fold
    shift statistics averaged over both folds."""
    fold1, fold2 = split_two_fold_ordered(d)
    stats = [
        shift_stats(d.targets[list(f.train_indices)], d.targets[list(f.test_indices)])
        for f in (fold1, fold2)
    ]
    md = float(np.mean([s.tr_te_md for s in stats]))
    ks = float(np.mean([s.tr_te_ks for s in stats]))
    return {
        "name": d.name,
        "size": d.n_rows,
        "attr": d.n_features,
        "tr_te_md": md,
        "tr_te_ks": ks,
    }
