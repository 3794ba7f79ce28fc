"""Synthetic vacuum-pumping events for a source and a shifted target furnace.

Each event is an exponential pump-down toward a random floor pressure,

    p(t) = floor + (p0 - floor) * exp(-t / tau),   t = 0 .. 1199 s,

multiplied by log-normal sensor noise. A leak raises the floor. The regression
target is the minimum of the full 20-minute series; the model only sees log
features from the first ``window_seconds`` samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core_types import EVENT_SECONDS, WINDOWS, Dataset, FeatureVector, PumpingEvent, validate_dataset
from .errors import ConfigError, UnsupportedWindow, WindowTooLong

N_FEATURES = 8
FEATURE_NAMES = (
    "logp_t0",
    "logp_q1",
    "logp_mid",
    "logp_q3",
    "logp_end",
    "logp_mean",
    "logp_slope",
    "logp_min",
)


def _range(name: str, r) -> tuple:
    try:
        lo, hi = (float(v) for v in r)
    except (TypeError, ValueError):
        raise ConfigError(name, "must be a [low, high] pair of numbers") from None
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ConfigError(name, "needs finite low <= high")
    return lo, hi


@dataclass(frozen=True)
class FurnaceProfile:
    p0_range: tuple = (800.0, 1200.0)
    tau_range: tuple = (100.0, 300.0)
    pmin_range: tuple = (0.005, 0.02)
    leak_prob: float = 0.15
    leak_scale: float = 0.02
    noise_sd: float = 0.02

    def __post_init__(self):
        for name in ("p0_range", "tau_range", "pmin_range"):
            object.__setattr__(self, name, _range(name, getattr(self, name)))
        if self.p0_range[0] <= 0:
            raise ConfigError("p0_range", "pressures must be > 0")
        if self.pmin_range[0] <= 0:
            raise ConfigError("pmin_range", "pressures must be > 0")
        if self.tau_range[0] <= 0:
            raise ConfigError("tau_range", "time constants must be > 0")
        if not self.pmin_range[1] < self.p0_range[0]:
            raise ConfigError("pmin_range", "floor must stay below the initial pressure")
        if not 0 <= self.leak_prob <= 1:
            raise ConfigError("leak_prob", "must lie in [0, 1]")
        if not self.leak_scale > 0:
            raise ConfigError("leak_scale", "must be > 0")
        if not self.noise_sd >= 0:
            raise ConfigError("noise_sd", "must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("p0_range", "tau_range", "pmin_range"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FurnaceProfile":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown profile field")
        return cls(**d)


# Furnace B pumps down faster from a narrower band of starting pressures. Its
# events sit inside A's support, in the low-label corner that an unweighted
# squared-loss fit on A serves poorly.
FURNACE_A = FurnaceProfile()
FURNACE_B = replace(FURNACE_A, p0_range=(900.0, 1200.0), tau_range=(100.0, 160.0))


@dataclass(frozen=True)
class DomainConfig:
    profile: FurnaceProfile = field(default_factory=FurnaceProfile)
    n_events: int = 300
    seed: int = 0
    furnace_id: str = "A"

    def __post_init__(self):
        if isinstance(self.n_events, bool) or not isinstance(self.n_events, int) or self.n_events < 1:
            raise ConfigError("n_events", "must be an integer >= 1")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("seed", "must be an integer")

    def to_dict(self) -> dict:
        return {
            "furnace_id": self.furnace_id,
            "n_events": self.n_events,
            "seed": self.seed,
            "profile": self.profile.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainConfig":
        if not isinstance(d, dict):
            raise ConfigError("domain", "must be a JSON object")
        unknown = set(d) - {"furnace_id", "n_events", "seed", "profile"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown domain field")
        prof = d.get("profile", {})
        if not isinstance(prof, dict):
            raise ConfigError("profile", "must be a JSON object")
        return cls(
            profile=FurnaceProfile.from_dict(prof),
            n_events=d.get("n_events", 300),
            seed=d.get("seed", 0),
            furnace_id=str(d.get("furnace_id", "A")),
        )

    @classmethod
    def from_json(cls, path) -> "DomainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def simulate_event(
    profile: FurnaceProfile,
    rng: np.random.Generator,
    event_id: str = "0",
    furnace_id: str = "A",
    start_time: int = 0,
) -> PumpingEvent:
    p0 = rng.uniform(*profile.p0_range)
    tau = rng.uniform(*profile.tau_range)
    floor = rng.uniform(*profile.pmin_range)
    if rng.uniform() < profile.leak_prob:
        floor += profile.leak_scale * rng.uniform()
    t = np.arange(EVENT_SECONDS, dtype=float)
    p = floor + (p0 - floor) * np.exp(-t / tau)
    if profile.noise_sd > 0:
        p = p * np.exp(profile.noise_sd * rng.standard_normal(EVENT_SECONDS))
    return PumpingEvent(event_id, furnace_id, p, start_time)


def _check_window(window_seconds: int, length: int) -> int:
    w = int(window_seconds)
    if w not in WINDOWS:
        raise UnsupportedWindow(f"window {window_seconds} not in {WINDOWS}")
    if w > length:
        raise WindowTooLong(f"window {w} s exceeds the {length}-sample event")
    return w


def features_from_series(pressure, window_seconds: int) -> np.ndarray:
    p = np.asarray(pressure, dtype=float)
    w = _check_window(window_seconds, p.shape[0])
    logp = np.log(p[:w])
    t = np.arange(w, dtype=float)
    picks = [0, w // 4, w // 2, (3 * w) // 4, w - 1]
    tc = t - t.mean()
    slope = float(np.dot(tc, logp - logp.mean()) / np.dot(tc, tc))
    return np.concatenate([logp[picks], [logp.mean(), slope, logp.min()]])


def extract_features(e: PumpingEvent, window_seconds: int) -> FeatureVector:
    """Eight log-pressure summaries of the first ``window_seconds`` samples.

    Layout: log p at t = 0, w/4, w/2, 3w/4 and w-1 (integer division), the
    mean of log p, the least-squares slope of log p against t, min of log p.
    """
    return FeatureVector(features_from_series(e.pressure, window_seconds), int(window_seconds))


def min_pressure_label(e: PumpingEvent) -> float:
    return float(np.min(e.pressure))


def event_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def simulate_events(cfg: DomainConfig) -> list:
    """All events of a domain; event ``i`` depends only on ``(cfg.seed, i)``."""
    return [
        simulate_event(
            cfg.profile,
            event_rng(cfg.seed, i),
            event_id=f"{cfg.furnace_id}-{i:04d}",
            furnace_id=cfg.furnace_id,
            start_time=i * 86400,
        )
        for i in range(cfg.n_events)
    ]


def events_to_dataset(events, window_seconds: int, domain: str) -> Dataset:
    X = np.array([features_from_series(e.pressure, window_seconds) for e in events])
    y = np.array([min_pressure_label(e) for e in events])
    ds = Dataset(X, y, domain, window_seconds)
    validate_dataset(ds)
    return ds


def generate_dataset(cfg: DomainConfig, window_seconds: int) -> Dataset:
    return events_to_dataset(simulate_events(cfg), window_seconds, cfg.furnace_id)
