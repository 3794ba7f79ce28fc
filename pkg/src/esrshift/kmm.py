"""Kernel Mean Matching: importance weights from a box/slab constrained QP.

The weights solve

    minimize    0.5 * w' K w - kappa' w
    subject to  0 <= w_i <= B,   |sum(w) - n| <= n * eps

with ``K`` the source Gram matrix and ``kappa`` from :func:`kernel.kappa`.
The solver is projected gradient descent started at the uniform weights,
with a backtracking step and a Dykstra projection onto the constraint set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import kernel
from .core_types import Dataset, WeightVector, as_matrix
from .errors import (
    ConfigError,
    ConvergenceWarning,
    DegenerateData,
    DimensionMismatch,
    EmptyInput,
    Infeasible,
    NotConverged,
)

JITTER = 1e-10

SigmaSpec = Union[float, str]


@dataclass(frozen=True)
class KmmConfig:
    """Solver settings.

    ``epsilon="auto"`` resolves to :func:`default_epsilon` of the source size.
    ``sigma`` is a positive float, ``"auto"`` (median heuristic over the
    pooled source and target rows) or ``"cv"`` (cross-validated over a grid,
    see :func:`esrshift.pipeline.cross_validate_sigma`).
    """

    b_cap: float = 1000.0
    epsilon: Union[float, str] = "auto"
    sigma: SigmaSpec = "auto"
    max_iters: int = 5000
    tol: float = 1e-8

    def __post_init__(self):
        if not (math.isfinite(self.b_cap) and self.b_cap >= 1):
            raise ConfigError("b_cap", "must be >= 1 so that uniform weights are feasible")
        if isinstance(self.epsilon, str):
            if self.epsilon != "auto":
                raise ConfigError("epsilon", f"unknown value {self.epsilon!r}")
        elif not 0 <= self.epsilon < 1:
            raise ConfigError("epsilon", "must lie in [0, 1)")
        if isinstance(self.sigma, str):
            if self.sigma not in ("auto", "cv"):
                raise ConfigError("sigma", f"unknown value {self.sigma!r}")
        elif not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigError("sigma", "must be positive")
        if int(self.max_iters) < 1:
            raise ConfigError("max_iters", "must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol", "must be positive")

    def to_dict(self) -> dict:
        return {
            "b_cap": self.b_cap,
            "epsilon": self.epsilon,
            "sigma": self.sigma,
            "max_iters": self.max_iters,
            "tol": self.tol,
        }


@dataclass(frozen=True)
class QpSolution:
    weights: np.ndarray
    objective: float
    iterations: int
    converged: bool
    trace: tuple = field(default=(), repr=False)
    jitter: float = JITTER


def default_epsilon(n_tr: int) -> float:
    """Slab half-width ``(sqrt(n) - 1) / sqrt(n)`` recommended for KMM."""
    if n_tr < 1:
        raise ValueError("n_tr must be >= 1")
    r = math.sqrt(n_tr)
    return (r - 1.0) / r


def kmm_objective(w, K, kappa) -> float:
    w = np.asarray(w, dtype=float)
    K = np.asarray(K, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    n = w.shape[0]
    if K.shape != (n, n) or kappa.shape != (n,):
        raise DimensionMismatch(f"w has {n} entries, K is {K.shape}, kappa is {kappa.shape}")
    return float(0.5 * w @ K @ w - kappa @ w)


def _slab(z: np.ndarray, lo: float, hi: float) -> np.ndarray:
    s = z.sum()
    if s > hi:
        return z - (s - hi) / z.size
    if s < lo:
        return z + (lo - s) / z.size
    return z


def project_feasible(
    v,
    b_cap: float,
    n_tr: int,
    epsilon: float,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Euclidean projection of ``v`` onto box [0, B]^n intersected with the sum slab.

    Dykstra's alternating projections between the box and the slab
    ``n_tr (1 - eps) <= sum(w) <= n_tr (1 + eps)``. The returned point lies in
    the box exactly and in the slab up to ``n * tol``.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    lo, hi = n_tr * (1.0 - epsilon), n_tr * (1.0 + epsilon)
    if lo > n * b_cap or hi < 0 or lo > hi:
        raise Infeasible("box and slab do not intersect")
    y = np.clip(v, 0.0, b_cap)
    if lo <= y.sum() <= hi:
        # what Dykstra reaches on its second sweep when the clipped point is in the slab
        return y
    x = v.copy()
    p = np.zeros(n)
    q = np.zeros(n)
    for _ in range(max_iter):
        y = np.clip(x + p, 0.0, b_cap)
        p = x + p - y
        x_new = _slab(y + q, lo, hi)
        q = y + q - x_new
        done = np.max(np.abs(x_new - x)) <= tol and np.max(np.abs(x_new - y)) <= tol
        x = x_new
        if done:
            break
    return np.clip(x, 0.0, b_cap)


def solve_kmm(K, kappa, cfg: KmmConfig, *, epsilon: float | None = None, strict: bool = False) -> QpSolution:
    """Projected gradient descent on the KMM objective from the all-ones start.

    ``epsilon`` overrides ``cfg.epsilon`` (needed when the config holds
    ``"auto"``). Without convergence the best iterate is returned with
    ``converged=False`` and a :class:`ConvergenceWarning`; with
    ``strict=True`` a :class:`NotConverged` carrying it is raised instead.
    """
    K = np.asarray(K, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.shape[0] if kappa.ndim == 1 else -1
    if K.ndim != 2 or K.shape != (n, n):
        raise DimensionMismatch(f"K is {K.shape}, kappa is {kappa.shape}")
    if n == 0:
        raise EmptyInput("empty problem")
    if epsilon is None:
        epsilon = default_epsilon(n) if cfg.epsilon == "auto" else float(cfg.epsilon)

    Kj = K + JITTER * np.eye(n)

    w = np.ones(n)
    Kw = Kj @ w
    fw = 0.5 * w @ Kw - kappa @ w
    trace = [fw]
    step0 = 1.0 / np.max(np.abs(Kj).sum(axis=1))
    converged = False
    it = 0
    while it < cfg.max_iters:
        it += 1
        g = Kw - kappa
        t = step0
        while True:
            w_new = project_feasible(w - t * g, cfg.b_cap, n, epsilon)
            d = w_new - w
            Kw_new = Kj @ w_new
            f_new = 0.5 * w_new @ Kw_new - kappa @ w_new
            # Armijo test for projected steps
            if f_new <= fw + g @ d + (d @ d) / (2.0 * t) or t < 1e-30:
                break
            t *= 0.5
        if f_new > fw:
            # inexact projection can no longer make progress
            converged = bool(np.max(np.abs(d)) < math.sqrt(cfg.tol))
            break
        w, Kw, fw = w_new, Kw_new, f_new
        trace.append(fw)
        if np.max(np.abs(d)) < cfg.tol:
            converged = True
            break

    sol = QpSolution(
        weights=w,
        objective=kmm_objective(w, K, kappa),
        iterations=it,
        converged=converged,
        trace=tuple(trace),
    )
    if not converged:
        msg = f"KMM solver stopped after {it} iterations without converging"
        if strict:
            raise NotConverged(msg, solution=sol)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return sol


def resolve_sigma(X_tr: np.ndarray, X_te: np.ndarray) -> float:
    """Median-heuristic width over the pooled rows; 1.0 if every row coincides."""
    try:
        return kernel.median_heuristic(np.vstack([X_tr, X_te])).sigma
    except DegenerateData:
        # constant kernel: any width gives the same Gram matrix
        return 1.0


def estimate_weights(source: Dataset, target_features, cfg: KmmConfig = KmmConfig(), **cv_kwargs) -> WeightVector:
    """KMM importance weights of the source rows against unlabeled target rows."""
    X_tr = as_matrix(source.features)
    X_te = as_matrix(target_features)
    if X_tr.shape[0] == 0 or X_te.shape[0] == 0:
        raise EmptyInput("source and target must be nonempty")
    if X_tr.shape[1] != X_te.shape[1]:
        raise DimensionMismatch(f"source has {X_tr.shape[1]} features, target has {X_te.shape[1]}")
    n = X_tr.shape[0]
    eps = default_epsilon(n) if cfg.epsilon == "auto" else float(cfg.epsilon)

    if cfg.sigma == "auto":
        sigma = resolve_sigma(X_tr, X_te)
    elif cfg.sigma == "cv":
        from .pipeline import cross_validate_sigma

        sigma = cross_validate_sigma(source, X_te, kmm=cfg, **cv_kwargs).sigma
    else:
        sigma = float(cfg.sigma)

    K = kernel.gram(X_tr, sigma)
    kap = kernel.kappa(X_tr, X_te, sigma)
    sol = solve_kmm(K, kap, cfg, epsilon=eps)
    return WeightVector(
        sol.weights,
        b_cap=cfg.b_cap,
        epsilon=eps,
        sigma=sigma,
        objective=sol.objective,
        converged=sol.converged,
        iterations=sol.iterations,
    )
