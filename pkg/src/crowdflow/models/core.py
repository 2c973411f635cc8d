"""Model settings, parameter layouts and the fitted-model container."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..data import Scaler
from ..errors import InvalidConfig, ShapeMismatch
from ..graphs import ChebStack, Graph, cheb_stack
from ..temporal import SampleSet, TemporalConfig
from ..training import EpochRecord

FAMILIES = ("hm-tc", "hm-tm", "ar", "tmeta-ridge", "stmeta-lite")
FUSIONS = ("none", "early-concat", "early-add", "raw-concat", "raw-add", "raw-gating")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    family: str
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    graphs: tuple[Graph, ...] = ()
    cheb_order: int = 2
    hidden_dim: int = 16
    fusion: str = "none"
    ridge_lambda: float = 0.0
    ar_difference: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.family not in FAMILIES:
            raise InvalidConfig(f"unknown model family {self.family!r}")
        if self.fusion not in FUSIONS:
            raise InvalidConfig(f"unknown fusion {self.fusion!r}")
        if self.fusion != "none" and self.family != "stmeta-lite":
            raise InvalidConfig("context fusion is only available for stmeta-lite")
        if (self.family == "stmeta-lite") != bool(self.graphs):
            raise InvalidConfig("graphs are required for stmeta-lite and only for it")
        if self.graphs and self.cheb_order < 1:
            raise InvalidConfig("cheb_order must be >= 1")
        if self.hidden_dim < 1:
            raise InvalidConfig("hidden_dim must be >= 1")
        if self.ridge_lambda < 0:
            raise InvalidConfig("ridge_lambda must be >= 0")
        if self.family in ("hm-tc", "ar", "stmeta-lite") and self.temporal.closeness < 1:
            raise InvalidConfig(f"{self.family} needs at least one closeness feature")

    def with_graphs(self, graphs: Sequence[Graph]) -> "ModelSpec":
        return replace(self, graphs=tuple(graphs))

    def cheb_stacks(self) -> list[ChebStack]:
        return [cheb_stack(g.scaled_laplacian, self.cheb_order) for g in self.graphs]


Layout = tuple[tuple[str, tuple[int, ...]], ...]


def layout_size(layout: Layout) -> int:
    return int(sum(np.prod(shape, dtype=int) for _, shape in layout))


def unpack(layout: Layout, flat) -> dict[str, np.ndarray]:
    """Split a flat vector into named views (no copy)."""
    flat = np.asarray(flat)
    if flat.shape != (layout_size(layout),):
        raise ShapeMismatch(f"parameter vector has shape {flat.shape}, layout needs {layout_size(layout)}")
    out, pos = {}, 0
    for name, shape in layout:
        size = int(np.prod(shape, dtype=int))
        out[name] = flat[pos:pos + size].reshape(shape)
        pos += size
    return out


def pack(layout: Layout, parts: dict[str, np.ndarray]) -> np.ndarray:
    if not layout:
        return np.zeros(0)
    return np.concatenate([np.asarray(parts[name], dtype=np.float64).reshape(-1) for name, _ in layout])


@dataclass(frozen=True, eq=False)
class TrainedModel:
    spec: ModelSpec
    layout: Layout
    parameters: np.ndarray
    n_context: int = 0
    log: tuple[EpochRecord, ...] = ()
    scaler: Scaler | None = None
    context_scaler: Scaler | None = None

    def __post_init__(self):
        params = np.array(self.parameters, dtype=np.float64)
        if params.shape != (layout_size(self.layout),):
            raise ShapeMismatch("parameter count does not match the layout")
        params.setflags(write=False)
        object.__setattr__(self, "parameters", params)
        object.__setattr__(self, "log", tuple(self.log))

    def params(self) -> dict[str, np.ndarray]:
        return unpack(self.layout, self.parameters)

    def with_parameters(self, flat) -> "TrainedModel":
        return replace(self, parameters=np.asarray(flat, dtype=np.float64))


def check_samples(spec: ModelSpec, samples: SampleSet) -> None:
    t = spec.temporal
    got = (samples.closeness.shape[2], samples.daily.shape[2], samples.weekly.shape[2])
    if got != (t.closeness, t.daily, t.weekly):
        raise ShapeMismatch(
            f"samples carry (C, D, W) = {got}, model expects {(t.closeness, t.daily, t.weekly)}"
        )
    for g in spec.graphs:
        if g.n_nodes != samples.n_stations:
            raise ShapeMismatch(f"graph has {g.n_nodes} nodes, samples have {samples.n_stations} stations")
