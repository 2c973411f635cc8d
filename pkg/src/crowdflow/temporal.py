"""Closeness / daily / weekly look-back sampling of flow series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHistory, InvalidConfig, ShapeMismatch


@dataclass(frozen=True)
class TemporalConfig:
    closeness: int = 6
    daily: int = 7
    weekly: int = 4
    slots_per_day: int = 24
    horizon: int = 1

    def __post_init__(self):
        if min(self.closeness, self.daily, self.weekly) < 0:
            raise InvalidConfig("closeness/daily/weekly lengths must be >= 0")
        if self.closeness + self.daily + self.weekly < 1:
            raise InvalidConfig("at least one of closeness/daily/weekly must be positive")
        if self.slots_per_day < 1:
            raise InvalidConfig("slots_per_day must be positive")
        if self.horizon < 1:
            raise InvalidConfig("horizon must be >= 1")

    @classmethod
    def from_fitness(cls, closeness, daily, weekly, time_fitness_minutes, horizon=1):
        if time_fitness_minutes <= 0 or 1440 % time_fitness_minutes:
            raise InvalidConfig(
                f"time fitness {time_fitness_minutes} min does not give an integral number of slots per day"
            )
        return cls(closeness, daily, weekly, 1440 // time_fitness_minutes, horizon)

    @property
    def n_features(self) -> int:
        return self.closeness + self.daily + self.weekly

    def to_dict(self) -> dict:
        return {
            "closeness": self.closeness,
            "daily": self.daily,
            "weekly": self.weekly,
            "slots_per_day": self.slots_per_day,
            "horizon": self.horizon,
        }


def min_lookback(cfg: TemporalConfig) -> int:
    """First valid target slot."""
    need = [0]
    if cfg.closeness:
        need.append(cfg.closeness - 1 + cfg.horizon)
    if cfg.daily:
        need.append(cfg.daily * cfg.slots_per_day)
    if cfg.weekly:
        need.append(cfg.weekly * 7 * cfg.slots_per_day)
    return max(need)


def count_samples(n_slots: int, cfg: TemporalConfig) -> int:
    return max(n_slots - min_lookback(cfg), 0)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Supervised samples; feature blocks are S x N x len, oldest first."""

    closeness: np.ndarray
    daily: np.ndarray
    weekly: np.ndarray
    targets: np.ndarray
    target_slots: np.ndarray
    context: np.ndarray | None = None

    def __len__(self):
        return self.targets.shape[0]

    @property
    def n_stations(self) -> int:
        return self.targets.shape[1]

    def temporal_features(self) -> np.ndarray:
        """[closeness | daily | weekly] concatenated, S x N x (C+D+W)."""
        return np.concatenate([self.closeness, self.daily, self.weekly], axis=2)

    def subset(self, index) -> "SampleSet":
        ctx = None if self.context is None else self.context[index]
        return SampleSet(
            self.closeness[index], self.daily[index], self.weekly[index],
            self.targets[index], self.target_slots[index], ctx,
        )

    def in_slots(self, slots: range) -> "SampleSet":
        """Samples whose target slot falls inside ``slots``."""
        mask = (self.target_slots >= slots.start) & (self.target_slots < slots.stop)
        return self.subset(np.flatnonzero(mask))


def st_move_sample(series, cfg: TemporalConfig, external=None) -> SampleSet:
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise ShapeMismatch(f"series must be T x N, got shape {series.shape}")
    n_slots = series.shape[0]
    first = min_lookback(cfg)
    if n_slots <= first:
        raise InsufficientHistory(
            f"series has {n_slots} slots but the look-back needs more than {first}"
        )
    targets = np.arange(first, n_slots)

    def gather(offsets):
        # offsets: oldest -> newest, shape (L,)
        if len(offsets) == 0:
            return np.empty((len(targets), series.shape[1], 0))
        idx = targets[:, None] - np.asarray(offsets)[None, :]
        return series[idx].transpose(0, 2, 1)

    h, spd = cfg.horizon, cfg.slots_per_day
    closeness = gather([h + j for j in range(cfg.closeness - 1, -1, -1)])
    daily = gather([k * spd for k in range(cfg.daily, 0, -1)])
    weekly = gather([k * 7 * spd for k in range(cfg.weekly, 0, -1)])

    context = None
    if external is not None:
        external = np.asarray(external, dtype=np.float64)
        if external.ndim != 2 or external.shape[0] != n_slots:
            raise ShapeMismatch(f"external must be {n_slots} x F, got shape {external.shape}")
        context = external[targets]
    return SampleSet(closeness, daily, weekly, series[targets], targets, context)
