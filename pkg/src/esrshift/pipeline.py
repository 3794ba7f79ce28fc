"""Drift-adaptive workflow: weight, train with and without weights, score MAPE.

:func:`run_adaptive` repeats the following for every seed and window:

1. simulate the source furnace and the target furnace (unlabeled pool plus a
   labeled test set used only for scoring),
2. split the source into train and test rows (shared by every learner and
   by the weighted and unweighted variants),
3. estimate KMM weights of the source-train rows against the unlabeled
   target pool,
4. fit each learner with and without the weights and score MAPE on the
   source test rows and on the labeled target rows.

Per-seed values are averaged into an :class:`EvaluationReport`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import kernel, kmm as kmm_mod, learners, simulator
from .core_types import WINDOWS, Dataset, as_matrix
from .errors import ConfigError, ConvergenceWarning, DimensionMismatch, NonPositiveBaseline, ZeroTrueValue

SIGMA_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)
CV_FOLDS = 5


def mape(y_true, y_pred) -> float:
    """Mean absolute percentage error, in percent."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise DimensionMismatch(f"shapes {y_true.shape} and {y_pred.shape} must match and be nonempty")
    if np.any(y_true == 0):
        raise ZeroTrueValue("MAPE is undefined when a true value is zero")
    return float(100.0 * np.mean(np.abs(y_true - y_pred) / np.abs(y_true)))


def weighted_mape(y_true, y_pred, weights) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    v = np.asarray(weights, dtype=float)
    if np.any(y_true == 0):
        raise ZeroTrueValue("MAPE is undefined when a true value is zero")
    if not v.sum() > 0:
        return mape(y_true, y_pred)
    return float(100.0 * np.dot(v, np.abs(y_true - y_pred) / np.abs(y_true)) / v.sum())


def improvement(before: float, after: float) -> float:
    """Relative MAPE reduction in percent: ``100 * (before - after) / before``."""
    if not before > 0:
        raise NonPositiveBaseline(f"baseline MAPE must be > 0, got {before}")
    return 100.0 * (before - after) / before


# --------------------------------------------------------------------------
# kernel width selection


def sigma_grid(source_features, target_features, multipliers=SIGMA_MULTIPLIERS) -> list:
    base = kmm_mod.resolve_sigma(as_matrix(source_features), as_matrix(target_features))
    return [base * m for m in multipliers]


def _fold_ids(n: int, n_folds: int, seed: int) -> np.ndarray:
    perm = np.random.default_rng([seed, 7]).permutation(n)
    ids = np.empty(n, dtype=np.intp)
    ids[perm] = np.arange(n) % n_folds
    return ids


def cross_validate_sigma(
    source: Dataset,
    target_features,
    grid: Sequence[float] | None = None,
    kmm: kmm_mod.KmmConfig = kmm_mod.KmmConfig(),
    learner: str | Callable = "tree",
    seed: int = 0,
    n_folds: int = CV_FOLDS,
) -> kernel.KernelConfig:
    """Pick the kernel width with the lowest importance-weighted held-out MAPE.

    For every candidate width and fold, KMM weights the training folds against
    the target rows and the weighted learner is fit on them. The held-out fold
    is scored with its own KMM weights (same width) as importances. Scores
    within 1e-9 relative of the best count as ties, resolved to the smallest
    width. ``grid`` defaults to the median heuristic times 1/4, 1/2, 1, 2, 4.
    """
    X_te = as_matrix(target_features)
    if source.n < 10:
        raise ValueError("cross-validation needs at least 10 source rows")
    if grid is None:
        grid = sigma_grid(source.features, X_te)
    grid = [float(s) for s in grid]
    if not grid:
        raise ValueError("sigma grid is empty")
    if len(grid) == 1:
        return kernel.KernelConfig(grid[0])

    fit = learner if callable(learner) else (lambda X, y, w: learners.fit_learner(learner, X, y, w, seed=seed))
    folds = _fold_ids(source.n, n_folds, seed)
    scores = []
    for sigma in grid:
        cfg = replace(kmm, sigma=sigma)
        fold_scores = []
        for k in range(n_folds):
            tr, ho = source.subset(folds != k), source.subset(folds == k)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                w_tr = kmm_mod.estimate_weights(tr, X_te, cfg).weights
                w_ho = kmm_mod.estimate_weights(ho, X_te, cfg).weights
            model = fit(tr.features, tr.labels, w_tr)
            pred = learners.predict(model, ho.features)
            fold_scores.append(weighted_mape(ho.labels, pred, w_ho))
        scores.append(float(np.mean(fold_scores)))
    best = min(scores)
    tied = [s for s, sc in zip(grid, scores) if sc <= best + 1e-9 * max(abs(best), 1.0)]
    return kernel.KernelConfig(min(tied))


# --------------------------------------------------------------------------
# sweep


@dataclass(frozen=True)
class SweepConfig:
    windows: tuple = WINDOWS
    learners: tuple = learners.LEARNERS
    kmm: kmm_mod.KmmConfig = field(default_factory=kmm_mod.KmmConfig)
    split: float = 0.7
    n_seeds: int = 20
    seed: int = 0
    target_test_events: int = 300
    sigma_multipliers: tuple = SIGMA_MULTIPLIERS
    cv_learner: str = "tree"

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        object.__setattr__(self, "learners", tuple(self.learners))
        object.__setattr__(self, "sigma_multipliers", tuple(float(m) for m in self.sigma_multipliers))
        if not self.windows or any(w not in WINDOWS for w in self.windows):
            raise ConfigError("windows", f"must be a nonempty subset of {list(WINDOWS)}")
        if not self.learners or any(k not in learners.LEARNERS for k in self.learners):
            raise ConfigError("learners", f"must be a nonempty subset of {list(learners.LEARNERS)}")
        if not 0 < self.split < 1:
            raise ConfigError("split", "must lie strictly between 0 and 1")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds", "must be >= 1")
        if self.target_test_events < 1:
            raise ConfigError("target_test_events", "must be >= 1")
        if not self.sigma_multipliers or any(not m > 0 for m in self.sigma_multipliers):
            raise ConfigError("sigma_multipliers", "must be positive")
        if self.cv_learner not in ("tree",) + learners.LEARNERS:
            raise ConfigError("cv_learner", "unknown learner")

    def to_dict(self) -> dict:
        return {
            "windows": list(self.windows),
            "learners": list(self.learners),
            "kmm": self.kmm.to_dict(),
            "split": self.split,
            "n_seeds": self.n_seeds,
            "seed": self.seed,
            "target_test_events": self.target_test_events,
            "sigma_multipliers": list(self.sigma_multipliers),
            "cv_learner": self.cv_learner,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        if not isinstance(d, dict):
            raise ConfigError("sweep", "must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown sweep field")
        kw = dict(d)
        if "kmm" in kw:
            kd = kw["kmm"]
            if not isinstance(kd, dict):
                raise ConfigError("kmm", "must be a JSON object")
            bad = set(kd) - set(kmm_mod.KmmConfig.__dataclass_fields__)
            if bad:
                raise ConfigError(sorted(bad)[0], "unknown kmm field")
            kw["kmm"] = kmm_mod.KmmConfig(**kd)
        return cls(**kw)


@dataclass
class EvaluationReport:
    """MAPE cells keyed by (furnace, learner, window) plus run metadata."""

    cells: dict
    runs: list
    config: dict

    def cell(self, furnace: str, learner: str, window: int) -> dict:
        return self.cells[(furnace, learner, int(window))]

    def furnaces(self) -> list:
        return sorted({k[0] for k in self.cells})

    def to_dict(self) -> dict:
        cells = []
        for (furnace, learner, window), c in sorted(self.cells.items()):
            cells.append({"furnace": furnace, "learner": learner, "window": window, **c})
        return {"config": self.config, "cells": cells, "runs": self.runs}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        cells = {}
        for c in d["cells"]:
            c = dict(c)
            key = (c.pop("furnace"), c.pop("learner"), int(c.pop("window")))
            cells[key] = c
        return cls(cells=cells, runs=d["runs"], config=d["config"])

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        return cls.from_dict(json.loads(text))

    def table_rows(self, furnace: str, learner: str) -> tuple:
        windows = sorted(w for f, k, w in self.cells if f == furnace and k == learner)
        cs = [self.cell(furnace, learner, w) for w in windows]
        return windows, [
            ("Without IW", [c["mape_without_iw"] for c in cs]),
            ("With IW", [c["mape_with_iw"] for c in cs]),
            ("Improvement", [c["improvement"] for c in cs]),
        ]

    def render_table(self, furnace: str, learner: str) -> str:
        windows, rows = self.table_rows(furnace, learner)
        lines = [f"Furnace {furnace} - {learner}", "".ljust(12) + "".join(f"{w:>12d}" for w in windows)]
        for name, vals in rows:
            suffix = "%" if name == "Improvement" else ""
            lines.append(name.ljust(12) + "".join(f"{v:>11.3f}{suffix}".rjust(12) for v in vals))
        return "\n".join(lines) + "\n"

    def render_csv(self, furnace: str, learner: str) -> str:
        windows, rows = self.table_rows(furnace, learner)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row"] + windows)
        for name, vals in rows:
            w.writerow([name] + [f"{v:.3f}" for v in vals])
        return buf.getvalue()


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _domain_for_seed(cfg: simulator.DomainConfig, i: int, stream: int, n_events: int | None = None):
    return replace(cfg, seed=derive_seed(cfg.seed, i, stream), n_events=n_events or cfg.n_events)


def _resolve_sigma(sweep: SweepConfig, src: Dataset, X_te: np.ndarray, seed: int) -> float:
    if sweep.kmm.sigma == "cv":
        grid = sigma_grid(src.features, X_te, sweep.sigma_multipliers)
        return cross_validate_sigma(src, X_te, grid, sweep.kmm, sweep.cv_learner, seed).sigma
    if sweep.kmm.sigma == "auto":
        return kmm_mod.resolve_sigma(src.features, X_te)
    return float(sweep.kmm.sigma)


def run_adaptive(
    source_cfg: simulator.DomainConfig,
    target_cfg: simulator.DomainConfig,
    sweep: SweepConfig = SweepConfig(),
    progress: Callable[[str], None] | None = None,
) -> EvaluationReport:
    src_id, tgt_id = source_cfg.furnace_id, target_cfg.furnace_id
    if src_id == tgt_id:
        raise ConfigError("furnace_id", "source and target furnaces need distinct ids")
    per_seed: dict = {}
    runs = []
    for i in range(sweep.n_seeds):
        src_events = simulator.simulate_events(_domain_for_seed(source_cfg, i, 0))
        pool_events = simulator.simulate_events(_domain_for_seed(target_cfg, i, 1))
        test_events = simulator.simulate_events(_domain_for_seed(target_cfg, i, 2, sweep.target_test_events))
        n = len(src_events)
        n_train = min(max(1, int(round(sweep.split * n))), n - 1) if n > 1 else 1
        perm = np.random.default_rng(derive_seed(sweep.seed, i, 3)).permutation(n)
        tr_idx, te_idx = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        learner_seed = derive_seed(sweep.seed, i, 4)
        for window in sweep.windows:
            src_all = simulator.events_to_dataset(src_events, window, src_id)
            pool = simulator.events_to_dataset(pool_events, window, tgt_id)
            tgt_test = simulator.events_to_dataset(test_events, window, tgt_id)
            src_tr = src_all.subset(tr_idx)
            src_te = src_all.subset(te_idx) if te_idx.size else src_tr

            sigma = _resolve_sigma(sweep, src_tr, pool.features, learner_seed)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                wv = kmm_mod.estimate_weights(src_tr, pool.features, replace(sweep.kmm, sigma=sigma))
            runs.append(
                {
                    "seed_index": i,
                    "window": window,
                    "sigma": wv.sigma,
                    "epsilon": wv.epsilon,
                    "objective": wv.objective,
                    "converged": bool(wv.converged),
                    "iterations": int(wv.iterations),
                    "weight_sum": float(wv.weights.sum()),
                    "effective_sample_size": float(wv.weights.sum() ** 2 / np.dot(wv.weights, wv.weights)),
                }
            )
            for kind in sweep.learners:
                plain = learners.fit_learner(kind, src_tr.features, src_tr.labels, None, seed=learner_seed)
                weighted = learners.fit_learner(kind, src_tr.features, src_tr.labels, wv.weights, seed=learner_seed)
                for furnace, ds in ((src_id, src_te), (tgt_id, tgt_test)):
                    key = (furnace, kind, window)
                    slot = per_seed.setdefault(key, {"without": [], "with": []})
                    slot["without"].append(mape(ds.labels, learners.predict(plain, ds.features)))
                    slot["with"].append(mape(ds.labels, learners.predict(weighted, ds.features)))
            if progress is not None:
                progress(f"seed {i + 1}/{sweep.n_seeds} window {window}")

    cells = {}
    for key, slot in per_seed.items():
        before = float(np.mean(slot["without"]))
        after = float(np.mean(slot["with"]))
        cells[key] = {
            "mape_without_iw": before,
            "mape_with_iw": after,
            "improvement": improvement(before, after) if before > 0 else 0.0,
            "per_seed_without_iw": slot["without"],
            "per_seed_with_iw": slot["with"],
        }
    config = {
        "source": source_cfg.to_dict(),
        "target": target_cfg.to_dict(),
        "sweep": sweep.to_dict(),
        "converged_all": all(r["converged"] for r in runs),
    }
    return EvaluationReport(cells=cells, runs=runs, config=config)
