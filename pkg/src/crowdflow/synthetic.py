"""Synthetic station flows with planted periodicity, diffusion and context events."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from datetime import timedelta

import numpy as np

from .data import STDataset, Station, parse_timestamp
from .errors import InvalidConfig
from .graphs import EARTH_RADIUS_M, distance_graph, haversine_matrix
from .rng import Xoshiro256

BOX_M = 10_000.0
RING_RADIUS_M = 4_000.0
WEEKEND_DAYS = (5, 6)


@dataclass(frozen=True)
class SynthConfig:
    n_stations: int = 20
    n_days: int = 28
    slots_per_day: int = 24
    base_rates: float | tuple[float, ...] = 10.0
    daily_amplitude: float = 0.5
    weekly_modulation: float = 0.3
    diffusion_coeff: float = 0.0
    layout: str = "ring"
    radius_m: float = 2_500.0
    context_effect: float = 0.0
    context_prob: float = 0.1
    noise_sigma: float = 0.0
    seed: int = 0
    start: str = "2024-01-01T00:00:00Z"

    def __post_init__(self):
        if isinstance(self.base_rates, list):
            object.__setattr__(self, "base_rates", tuple(self.base_rates))
        problems = []
        if self.n_stations < 1:
            problems.append("n_stations must be >= 1")
        if self.n_days < 1:
            problems.append("n_days must be >= 1")
        if self.slots_per_day < 1 or 1440 % self.slots_per_day:
            problems.append("slots_per_day must divide 1440")
        rates = self.rates()
        if len(rates) != self.n_stations or not all(r > 0 and math.isfinite(r) for r in rates):
            problems.append("base_rates must be positive, one per station (or a single value)")
        if self.daily_amplitude < 0 or self.weekly_modulation < 0:
            problems.append("daily_amplitude and weekly_modulation must be >= 0")
        if not (0 <= self.diffusion_coeff < 1):
            problems.append("diffusion_coeff must be in [0, 1)")
        if self.layout not in ("ring", "random-geometric"):
            problems.append(f"unknown layout {self.layout!r}")
        if self.radius_m <= 0:
            problems.append("radius_m must be > 0")
        if self.context_effect < 0 or not (0 <= self.context_prob <= 1):
            problems.append("context_effect must be >= 0 and context_prob in [0, 1]")
        if self.noise_sigma < 0:
            problems.append("noise_sigma must be >= 0")
        if problems:
            raise InvalidConfig("; ".join(problems))

    def rates(self) -> tuple[float, ...]:
        if isinstance(self.base_rates, (int, float)):
            return (float(self.base_rates),) * self.n_stations
        return tuple(float(r) for r in self.base_rates)

    def expected_mean(self) -> float:
        """Mean flow of the noise-free signal averaged over stations, days and events."""
        weekend_share = len(WEEKEND_DAYS) / 7
        scale = (1 + self.weekly_modulation * weekend_share) * (1 + self.context_effect * self.context_prob)
        return float(np.mean(self.rates())) * scale

    def to_dict(self) -> dict:
        doc = asdict(self)
        if isinstance(self.base_rates, tuple):
            doc["base_rates"] = list(self.base_rates)
        return doc


def _to_latlng(x_m: float, y_m: float) -> tuple[float, float]:
    # equatorial box anchored at (0, 0): meters map linearly to degrees
    return math.degrees(y_m / EARTH_RADIUS_M), math.degrees(x_m / EARTH_RADIUS_M)


def _draw_layout(cfg: SynthConfig, rng: Xoshiro256) -> tuple[list[Station], np.ndarray]:
    n = cfg.n_stations
    coords = []
    if cfg.layout == "ring":
        for i in range(n):
            angle = 2 * math.pi * i / n
            coords.append(_to_latlng(BOX_M / 2 + RING_RADIUS_M * math.cos(angle),
                                     BOX_M / 2 + RING_RADIUS_M * math.sin(angle)))
        nbr = np.zeros((n, n))
        for i in range(n):
            for j in ((i - 1) % n, (i + 1) % n):
                if j != i:
                    nbr[i, j] = 1.0
    else:
        for _ in range(n):
            x = rng.uniform(0.0, BOX_M)
            y = rng.uniform(0.0, BOX_M)
            coords.append(_to_latlng(x, y))
        dist = haversine_matrix([c[0] for c in coords], [c[1] for c in coords])
        nbr = (dist <= cfg.radius_m).astype(float)
        np.fill_diagonal(nbr, 0.0)
    stations = [Station(f"s{i:03d}", lat, lng, f"station {i}") for i, (lat, lng) in enumerate(coords)]
    return stations, nbr


def layout(cfg: SynthConfig) -> tuple[list[Station], np.ndarray]:
    """Stations and the (self-loop free) diffusion neighbor matrix for ``cfg``."""
    return _draw_layout(cfg, Xoshiro256(cfg.seed))


def neighbor_threshold_m(cfg: SynthConfig) -> float:
    """Distance threshold whose graph reproduces the diffusion neighbors."""
    if cfg.layout == "random-geometric":
        return cfg.radius_m
    stations, nbr = layout(cfg)
    if cfg.n_stations < 2:
        return 0.0
    dist = haversine_matrix([s.lat for s in stations], [s.lng for s in stations])
    return float(dist[nbr > 0].max()) * (1 + 1e-6)


def true_graph(cfg: SynthConfig):
    stations, _ = layout(cfg)
    return distance_graph(stations, neighbor_threshold_m(cfg))


def closed_form(cfg: SynthConfig, events: np.ndarray, noise: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Flow recurrence given drawn events (T,) and noise (T x N)."""
    spd = cfg.slots_per_day
    n_slots = cfg.n_days * spd
    t = np.arange(n_slots)
    day = 1.0 + cfg.daily_amplitude * np.sin(2 * np.pi * t / spd)
    weekend = np.isin((t // spd) % 7, WEEKEND_DAYS)
    week = 1.0 + cfg.weekly_modulation * weekend
    ctx = 1.0 + cfg.context_effect * events
    signal = np.outer(day * week * ctx, np.array(cfg.rates()))
    d = cfg.diffusion_coeff
    degree = neighbors.sum(axis=1)
    has_nbr = degree > 0
    avg = np.where(has_nbr[:, None], neighbors / np.where(has_nbr, degree, 1.0)[:, None], 0.0)
    flow = np.empty_like(signal)
    flow[0] = np.maximum(0.0, signal[0] + noise[0])
    for k in range(1, n_slots):
        mixed = np.where(has_nbr, (1 - d) * signal[k] + d * (avg @ flow[k - 1]), signal[k])
        flow[k] = np.maximum(0.0, mixed + noise[k])
    return flow


def generate(cfg: SynthConfig) -> STDataset:
    """Draw order: layout, then one event flag per slot, then noise slot-major."""
    rng = Xoshiro256(cfg.seed)
    stations, neighbors = _draw_layout(cfg, rng)
    n_slots = cfg.n_days * cfg.slots_per_day
    events = np.array([1.0 if rng.random() < cfg.context_prob else 0.0 for _ in range(n_slots)])
    noise = np.array([[rng.normal() for _ in range(cfg.n_stations)] for _ in range(n_slots)])
    flow = closed_form(cfg, events, noise * cfg.noise_sigma, neighbors)
    start = parse_timestamp(cfg.start)
    end = start + timedelta(days=cfg.n_days)
    return STDataset((start, end), 1440 // cfg.slots_per_day, flow, tuple(stations),
                     external={"events": events[:, None]})


# -- summaries -----------------------------------------------------------------

def lag_autocorrelation(x, lag: int) -> float | None:
    """Pearson r between x[:-lag] and x[lag:]; None when undefined."""
    x = np.asarray(x, dtype=np.float64)
    if lag < 1 or lag >= x.size - 1:
        return None
    a, b = x[:-lag], x[lag:]
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return None
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


@dataclass(frozen=True)
class DatasetSummary:
    mean: tuple[float, ...]
    variance: tuple[float, ...]
    autocorrelation: dict[int, tuple[float | None, ...]]

    def to_dict(self) -> dict:
        return {
            "mean": list(self.mean),
            "variance": list(self.variance),
            "autocorrelation": {str(k): list(v) for k, v in self.autocorrelation.items()},
        }


def describe(ds: STDataset) -> DatasetSummary:
    x = ds.node_traffic
    spd = ds.slots_per_day
    lags = sorted({1, spd, 7 * spd})
    return DatasetSummary(
        tuple(float(v) for v in x.mean(axis=0)),
        tuple(float(v) for v in x.var(axis=0)),
        {k: tuple(lag_autocorrelation(x[:, n], k) for n in range(x.shape[1])) for k in lags},
    )
