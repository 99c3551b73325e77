import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scopefe.tabular import BINARY, CATEGORICAL, NUMERIC, REGRESSION, Dataset


def numeric_dataset(n, d, seed, signal="product", noise=0.1):
    """All-numeric regression dataset, optionally with a planted pair signal."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    if signal == "product":
        y = X[:, 0] * X[:, 1] + noise * rng.normal(size=n)
    elif signal == "linear":
        y = X[:, 0] + noise * rng.normal(size=n)
    else:
        y = rng.normal(size=n)
    names = [f"x{i + 1}" for i in range(d)]
    return Dataset.from_arrays(names, [NUMERIC] * d,
                               [X[:, i] for i in range(d)], y, REGRESSION)


def grouped_dataset(n, d, groups, seed, noise=0.55, load=0.85):
    """Numeric features sharing latent factors, one factor per group."""
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, groups))
    X = np.empty((n, d))
    for j in range(d):
        X[:, j] = load * Z[:, j % groups] + noise * rng.normal(size=n)
    y = X[:, 0] + 0.2 * rng.normal(size=n)
    names = [f"x{i + 1}" for i in range(d)]
    return Dataset.from_arrays(names, [NUMERIC] * d,
                               [X[:, i] for i in range(d)], y, REGRESSION)


def mixed_dataset(n, seed):
    """Two numeric and two categorical features, regression target."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n)
    b = rng.normal(size=n)
    c1 = rng.integers(0, 3, size=n)
    c2 = rng.integers(0, 4, size=n)
    y = a + 0.5 * c1 + 0.1 * rng.normal(size=n)
    return Dataset.from_arrays(
        ["a", "b", "c1", "c2"],
        [NUMERIC, NUMERIC, CATEGORICAL, CATEGORICAL],
        [a, b, c1, c2], y, REGRESSION,
        categories={"c1": ["p", "q", "r"], "c2": ["u", "v", "w", "z"]})


def binary_dataset(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    margin = X[:, 0] + 0.5 * X[:, 1]
    y = (margin + 0.3 * rng.normal(size=n) > 0).astype(int)
    names = [f"x{i + 1}" for i in range(d)]
    return Dataset.from_arrays(names, [NUMERIC] * d,
                               [X[:, i] for i in range(d)], y, BINARY)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
