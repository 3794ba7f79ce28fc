"""Gaussian (RBF) kernel, Gram matrices and the KMM linear term.

The kernel is ``exp(-||x - y||^2 / (2 sigma^2))`` everywhere in the package.
Squared distances come from ``scipy.spatial.distance.cdist`` which sums the
squared coordinate differences directly, so the Gram matrix is exactly
symmetric with an exactly unit diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .core_types import as_matrix
from .errors import DegenerateData, DimensionMismatch, EmptyInput


@dataclass(frozen=True)
class KernelConfig:
    sigma: float

    def __post_init__(self):
        s = float(self.sigma)
        if not (math.isfinite(s) and s > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma!r}")
        object.__setattr__(self, "sigma", s)


def _sigma(cfg) -> float:
    return cfg.sigma if isinstance(cfg, KernelConfig) else KernelConfig(cfg).sigma


def rbf(x, y, cfg: KernelConfig | float) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes {x.shape} and {y.shape} differ")
    s = _sigma(cfg)
    return math.exp(-float(np.sum((x - y) ** 2)) / (2.0 * s * s))


def cross_kernel(A, B, cfg: KernelConfig | float) -> np.ndarray:
    """Matrix of rbf(a_i, b_j) for every row pair."""
    A, B = as_matrix(A), as_matrix(B)
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise EmptyInput("kernel inputs must be nonempty")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"feature dimensions {A.shape[1]} and {B.shape[1]} differ")
    s = _sigma(cfg)
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * s * s))


def gram(X, cfg: KernelConfig | float) -> np.ndarray:
    X = as_matrix(X)
    if X.shape[0] == 0:
        raise EmptyInput("gram needs at least one row")
    return cross_kernel(X, X, cfg)


def kappa(X_tr, X_te, cfg: KernelConfig | float) -> np.ndarray:
    """KMM linear term: ``(n_tr / n_te) * sum_j k(x_i^tr, x_j^te)`` per source row."""
    K = cross_kernel(X_tr, X_te, cfg)
    n_tr, n_te = K.shape
    return (n_tr / n_te) * K.sum(axis=1)


def median_heuristic(X) -> KernelConfig:
    """Kernel width set to the median pairwise Euclidean distance (pairs i < j)."""
    X = as_matrix(X)
    if X.shape[0] < 2:
        raise DegenerateData("median heuristic needs at least two rows")
    med = float(np.median(pdist(X)))
    if not med > 0:
        raise DegenerateData("median pairwise distance is zero")
    return KernelConfig(med)
