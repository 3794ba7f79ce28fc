"""Domain containers shared across the package, plus their CSV formats.

All containers are frozen dataclasses wrapping read-only numpy arrays, so
they can be passed between threads or processes without defensive copies.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, NonFiniteValue, NonPositiveLabel

EVENT_SECONDS = 1200
WINDOWS = (60, 90, 120, 150, 180)
FLOAT_FMT = "%.9g"


def _frozen(a, dtype=float, ndim=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PumpingEvent:
    """One vacuum-pumping episode sampled at 1 Hz, pressure in millibar."""

    event_id: str
    furnace_id: str
    pressure: np.ndarray
    start_time: int = 0

    def __post_init__(self):
        p = _frozen(self.pressure, ndim=1)
        if p.size != EVENT_SECONDS:
            raise DimensionMismatch(f"event needs {EVENT_SECONDS} samples, got {p.size}")
        if not np.all(np.isfinite(p)):
            raise NonFiniteValue("pressure contains non-finite values")
        if np.any(p <= 0):
            raise NonPositiveLabel("pressure must be strictly positive")
        object.__setattr__(self, "pressure", p)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    window_seconds: int

    def __post_init__(self):
        v = _frozen(self.values, ndim=1)
        if not np.all(np.isfinite(v)):
            raise NonFiniteValue("feature vector contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix and minimum-pressure labels for one furnace and window.

    Construction does not validate; call :func:`validate_dataset` (readers
    and the simulator do so) when the source is untrusted.
    """

    features: np.ndarray
    labels: np.ndarray
    domain: str
    window_seconds: int

    def __post_init__(self):
        X = _frozen(self.features)
        if X.ndim == 1:
            X = _frozen(X.reshape(-1, 1))
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", _frozen(self.labels, ndim=1))
        object.__setattr__(self, "window_seconds", int(self.window_seconds))

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.labels[idx], self.domain, self.window_seconds)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.domain == other.domain
            and self.window_seconds == other.window_seconds
            and self.features.shape == other.features.shape
            and self.labels.shape == other.labels.shape
            and bool(np.array_equal(self.features, other.features))
            and bool(np.array_equal(self.labels, other.labels))
        )


@dataclass(frozen=True)
class WeightVector:
    """Importance weights for the source sample together with the KMM settings.

    ``objective``, ``converged`` and ``iterations`` describe the solver run
    that produced the weights and are written to the JSON sidecar.
    """

    weights: np.ndarray
    b_cap: float
    epsilon: float
    sigma: float
    objective: float = float("nan")
    converged: bool = True
    iterations: int = 0
    tol: float = field(default=1e-6, repr=False)

    def __post_init__(self):
        w = _frozen(self.weights, ndim=1)
        object.__setattr__(self, "weights", w)
        if not np.all(np.isfinite(w)):
            raise NonFiniteValue("weights contain non-finite values")
        n = w.size
        if n and (w.min() < -self.tol or w.max() > self.b_cap + self.tol):
            raise ValueError("weights violate the box [0, b_cap]")
        if abs(w.sum() - n) > n * self.epsilon + self.tol * max(1.0, n):
            raise ValueError("weights violate the sum constraint")

    def __len__(self) -> int:
        return self.weights.size


def validate_dataset(ds: Dataset) -> None:
    """Raise if ``ds`` breaks a Dataset invariant, otherwise return None."""
    X, y = ds.features, ds.labels
    if X.ndim != 2:
        raise DimensionMismatch(f"features must be 2-d, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
    if y.shape[0] < 1:
        raise EmptyInput("dataset has no rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteValue("dataset contains non-finite values")
    if np.any(y <= 0):
        raise NonPositiveLabel("labels must be > 0")


def _fmt(v: float) -> str:
    return FLOAT_FMT % v


# Dataset CSV -----------------------------------------------------------------


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"feature_{j}" for j in range(ds.d)] + ["label", "domain", "window_seconds"])
    for row, label in zip(ds.features, ds.labels):
        w.writerow([_fmt(v) for v in row] + [_fmt(label), ds.domain, ds.window_seconds])
    return buf.getvalue()


def dataset_from_csv(text: str) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise EmptyInput("empty dataset file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if header[-3:] != ["label", "domain", "window_seconds"]:
        raise ValueError("dataset header must end with label,domain,window_seconds")
    d = len(header) - 3
    if not body:
        raise EmptyInput("dataset file has no rows")
    for r in body:
        if len(r) != d + 3:
            raise DimensionMismatch(f"row has {len(r)} fields, expected {d + 3}")
    X = np.array([[float(v) for v in r[:d]] for r in body]).reshape(len(body), d)
    y = np.array([float(r[d]) for r in body])
    domains = {r[d + 1] for r in body}
    windows = {int(r[d + 2]) for r in body}
    if len(domains) != 1 or len(windows) != 1:
        raise ValueError("a dataset file must hold a single domain and window")
    ds = Dataset(X, y, domains.pop(), windows.pop())
    validate_dataset(ds)
    return ds


def write_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dataset_to_csv(ds))


def read_dataset(path) -> Dataset:
    return dataset_from_csv(Path(path).read_text())


# PumpingEvent CSV ------------------------------------------------------------


def event_to_csv(e: PumpingEvent) -> str:
    lines = ["event_id,furnace_id,start_time", f"{e.event_id},{e.furnace_id},{int(e.start_time)}"]
    lines += [f"{t},{_fmt(p)}" for t, p in enumerate(e.pressure)]
    return "\n".join(lines) + "\n"


def event_from_csv(text: str) -> PumpingEvent:
    lines = text.splitlines()
    if len(lines) < 2 or lines[0].strip() != "event_id,furnace_id,start_time":
        raise ValueError("event file must start with 'event_id,furnace_id,start_time'")
    event_id, furnace_id, start = lines[1].split(",")
    samples = [ln.split(",") for ln in lines[2:] if ln.strip()]
    ts = [int(t) for t, _ in samples]
    if ts != list(range(len(ts))):
        raise ValueError("sample times must run 0, 1, 2, ... in order")
    return PumpingEvent(event_id, furnace_id, [float(p) for _, p in samples], int(start))


def write_event(e: PumpingEvent, path) -> None:
    Path(path).write_text(event_to_csv(e))


def read_event(path) -> PumpingEvent:
    return event_from_csv(Path(path).read_text())


# Weight file + JSON sidecar --------------------------------------------------


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_weights(wv: WeightVector, path) -> None:
    lines = ["index,weight"] + [f"{i},{w!r}" for i, w in enumerate(wv.weights.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")
    meta = {
        "sigma": wv.sigma,
        "epsilon": wv.epsilon,
        "b_cap": wv.b_cap,
        "objective": wv.objective,
        "converged": bool(wv.converged),
        "iterations": int(wv.iterations),
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")


def read_weights(path) -> WeightVector:
    rows = list(csv.reader(io.StringIO(Path(path).read_text())))
    if not rows or rows[0] != ["index", "weight"]:
        raise ValueError("weight file must start with 'index,weight'")
    w = [float(r[1]) for r in rows[1:] if r]
    meta = json.loads(sidecar_path(path).read_text())
    return WeightVector(
        np.array(w),
        b_cap=float(meta["b_cap"]),
        epsilon=float(meta["epsilon"]),
        sigma=float(meta["sigma"]),
        objective=float(meta.get("objective", math.nan)),
        converged=bool(meta.get("converged", True)),
        iterations=int(meta.get("iterations", 0)),
    )


def as_matrix(X: Sequence | np.ndarray) -> np.ndarray:
    """Coerce to a 2-d float array (a 1-d input is read as one feature column)."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {arr.shape}")
    return arr
