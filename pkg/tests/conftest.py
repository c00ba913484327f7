import numpy as np
import pytest

from reframe.data import Dataset


def make_dataset(features, targets, name="test", feature_names=None):
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    if feature_names is None:
        feature_names = tuple(f"x{i}" for i in range(features.shape[1]))
    return Dataset(
        name=name,
        feature_names=tuple(feature_names),
        features=features,
        targets=np.asarray(targets, dtype=float),
    )


@pytest.fixture
def linear_dataset():
    xs = np.arange(1.0, 4.0)
    return make_dataset(xs, 2.0 * xs)
