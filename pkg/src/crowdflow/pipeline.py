"""Dataset -> normalized samples -> fitted model -> raw-unit metrics."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import evaluation
from .data import Scaler, SplitSpec, STDataset, fit_scaler, split
from .errors import InsufficientHistory, InvalidConfig
from .graphs import (
    DEFAULT_TARGET_DENSITY,
    Graph,
    auto_threshold,
    correlation_graph,
    distance_graph,
    pearson_matrix,
    station_distances,
)
from .models import ModelSpec, TrainedModel, fit, predict
from .temporal import SampleSet, TemporalConfig, st_move_sample
from .training import TrainConfig


@dataclass(frozen=True, eq=False)
class Prepared:
    scaler: Scaler
    context_scaler: Scaler | None
    train: SampleSet
    val: SampleSet
    test: SampleSet
    ranges: tuple[range, range, range]


def prepare(ds: STDataset, temporal: TemporalConfig, split_spec: SplitSpec = SplitSpec(),
            scheme: str = "zscore-per-station", scaler: Scaler | None = None,
            context_scaler: Scaler | None = None) -> Prepared:
    """Normalize with statistics from the training slots, sample, and split by target slot.

    Passing ``scaler``/``context_scaler`` reuses stored statistics (restored models).
    """
    ranges = split(ds, split_spec)
    train_rows = slice(ranges[0].start, ranges[0].stop)
    scaler = scaler or fit_scaler(ds.node_traffic[train_rows], scheme)
    series = scaler.transform(ds.node_traffic)
    ext = ds.external_matrix()
    context = None
    if ext is not None:
        context_scaler = context_scaler or fit_scaler(ext[train_rows], "zscore-per-station")
        context = context_scaler.transform(ext)
    samples = st_move_sample(series, temporal, context)
    parts = [samples.in_slots(r) for r in ranges]
    for name, part in zip(("train", "val", "test"), parts):
        if len(part) == 0:
            raise InsufficientHistory(
                f"{name} split has no samples: the look-back exceeds the slots available before it"
            )
    return Prepared(scaler, context_scaler, *parts, ranges)


@dataclass(frozen=True)
class GraphSpec:
    kind: str = "distance"
    threshold: float | None = None
    auto_density: float | None = None

    def __post_init__(self):
        if self.kind not in ("distance", "correlation"):
            raise InvalidConfig(f"unknown graph kind {self.kind!r}")
        if self.threshold is None and self.auto_density is None:
            object.__setattr__(self, "auto_density", DEFAULT_TARGET_DENSITY)


def build_graph(ds: STDataset, spec: GraphSpec, train_range: range | None = None) -> Graph:
    """Distance graphs use station coordinates; correlation graphs the training slots only."""
    if spec.kind == "distance":
        threshold = spec.threshold
        if threshold is None:
            threshold = auto_threshold(station_distances(ds.stations), spec.auto_density, "at-most").threshold
        return distance_graph(ds.stations, threshold)
    end = train_range.stop if train_range is not None else ds.n_slots
    threshold = spec.threshold
    if threshold is None:
        r = pearson_matrix(ds.node_traffic[:end])
        threshold = auto_threshold(r, spec.auto_density, "at-least").threshold
    return correlation_graph(ds.node_traffic, threshold, train_end=end)


@dataclass(frozen=True, eq=False)
class CellResult:
    model: TrainedModel
    metrics: evaluation.CellMetrics
    predictions: np.ndarray   # raw units, S_test x N
    truth: np.ndarray
    target_slots: np.ndarray


def _attach(model: TrainedModel, prep: Prepared) -> TrainedModel:
    return replace(model, scaler=prep.scaler, context_scaler=prep.context_scaler)


def evaluate_model(model: TrainedModel, prep: Prepared, ds: STDataset,
                   mape_mask: float = 0.0) -> CellResult:
    pred = prep.scaler.inverse(predict(model, prep.test))
    truth = ds.node_traffic[prep.test.target_slots]
    return CellResult(model, evaluation.evaluate(pred, truth, mape_mask), pred, truth,
                      prep.test.target_slots)


def run(ds: STDataset, spec: ModelSpec, train_cfg: TrainConfig | None = None,
        split_spec: SplitSpec = SplitSpec(), scheme: str = "zscore-per-station",
        mape_mask: float = 0.0, prep: Prepared | None = None) -> CellResult:
    prep = prep or prepare(ds, spec.temporal, split_spec, scheme)
    model = _attach(fit(spec, prep.train, prep.val, train_cfg), prep)
    return evaluate_model(model, prep, ds, mape_mask)
