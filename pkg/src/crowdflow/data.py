"""Dataset container, event ingestion, normalization and chronological splits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    EmptySplit,
    InvalidConfig,
    InvalidCoordinate,
    InvalidValue,
    IOFailure,
    MalformedRow,
    MissingKey,
    NonFiniteValue,
    RatioSumNotOne,
    ShapeMismatch,
    UnknownStation,
)

FORMAT_VERSION = 1


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    text = text.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Station:
    id: str
    lat: float
    lng: float
    name: str = ""


def _frozen(values, what: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ShapeMismatch(f"{what}: expected {ndim}-D array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_finite(arr: np.ndarray, what: str, nonneg: bool) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteValue(f"{what}: non-finite value at index {idx}")
    if nonneg and (arr < 0).any():
        idx = tuple(int(i) for i in np.argwhere(arr < 0)[0])
        raise InvalidValue(f"{what}: negative flow {arr[idx]} at index {idx}")


@dataclass(frozen=True, eq=False)
class STDataset:
    """Time-indexed station flows plus metadata.

    ``node_traffic`` is T x N with T fixed by ``time_range`` and
    ``time_fitness`` (minutes per slot). All arrays are stored read-only.
    """

    time_range: tuple[datetime, datetime]
    time_fitness: int
    node_traffic: np.ndarray
    stations: tuple[Station, ...]
    grid_traffic: np.ndarray | None = None
    external: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        start, end = self.time_range
        if not isinstance(self.time_fitness, (int, np.integer)) or self.time_fitness <= 0:
            raise InvalidValue(f"time_fitness: must be a positive integer, got {self.time_fitness!r}")
        n_slots = expected_slots(start, end, int(self.time_fitness))
        if n_slots < 1:
            raise ShapeMismatch(f"time_range: implies {n_slots} slots, need at least 1")
        object.__setattr__(self, "time_fitness", int(self.time_fitness))

        stations = tuple(self.stations)
        if not stations:
            raise ShapeMismatch("stations: at least one station is required")
        seen = set()
        for i, st in enumerate(stations):
            if st.id in seen:
                raise InvalidValue(f"stations[{i}]: duplicate id {st.id!r}")
            seen.add(st.id)
            for coord, lo, hi in (("lat", -90.0, 90.0), ("lng", -180.0, 180.0)):
                v = getattr(st, coord)
                if not (isinstance(v, (int, float)) and math.isfinite(v) and lo <= v <= hi):
                    raise InvalidCoordinate(f"stations[{i}].{coord}: {v!r} outside [{lo}, {hi}]")
        object.__setattr__(self, "stations", stations)

        node = _frozen(self.node_traffic, "node.traffic", 2)
        if node.shape != (n_slots, len(stations)):
            raise ShapeMismatch(
                f"node.traffic: shape {node.shape} but time_range/time_fitness imply "
                f"{n_slots} rows and stations imply {len(stations)} columns"
            )
        _check_finite(node, "node.traffic", nonneg=True)
        object.__setattr__(self, "node_traffic", node)

        if self.grid_traffic is not None:
            grid = _frozen(self.grid_traffic, "grid.traffic", 3)
            if grid.shape[0] != n_slots:
                raise ShapeMismatch(f"grid.traffic: {grid.shape[0]} rows, expected {n_slots}")
            _check_finite(grid, "grid.traffic", nonneg=True)
            object.__setattr__(self, "grid_traffic", grid)

        ext = {}
        for name, mat in dict(self.external).items():
            arr = _frozen(mat, f"external.{name}", 2)
            if arr.shape[0] != n_slots:
                raise ShapeMismatch(f"external.{name}: {arr.shape[0]} rows, expected {n_slots}")
            _check_finite(arr, f"external.{name}", nonneg=False)
            ext[name] = arr
        object.__setattr__(self, "external", ext)

    @property
    def n_slots(self) -> int:
        return self.node_traffic.shape[0]

    @property
    def n_stations(self) -> int:
        return self.node_traffic.shape[1]

    @property
    def slots_per_day(self) -> int:
        if 1440 % self.time_fitness:
            raise InvalidConfig(f"time_fitness {self.time_fitness} does not divide a day")
        return 1440 // self.time_fitness

    def external_matrix(self) -> np.ndarray | None:
        """All external groups stacked column-wise in key order, or None."""
        if not self.external:
            return None
        return np.concatenate([self.external[k] for k in sorted(self.external)], axis=1)

    def __eq__(self, other):
        if not isinstance(other, STDataset):
            return NotImplemented
        if (self.time_range, self.time_fitness, self.stations) != (
            other.time_range, other.time_fitness, other.stations
        ):
            return False
        if not np.array_equal(self.node_traffic, other.node_traffic):
            return False
        if (self.grid_traffic is None) != (other.grid_traffic is None):
            return False
        if self.grid_traffic is not None and not np.array_equal(self.grid_traffic, other.grid_traffic):
            return False
        if self.external.keys() != other.external.keys():
            return False
        return all(np.array_equal(v, other.external[k]) for k, v in self.external.items())

    __hash__ = None


def expected_slots(start: datetime, end: datetime, time_fitness: int) -> int:
    seconds = (end - start).total_seconds()
    return math.floor(seconds / (time_fitness * 60))


# -- container I/O ---------------------------------------------------------

def dataset_to_dict(ds: STDataset) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "time_range": [format_timestamp(ds.time_range[0]), format_timestamp(ds.time_range[1])],
        "time_fitness_minutes": ds.time_fitness,
        "node": {
            "traffic": ds.node_traffic.tolist(),
            "stations": [
                {"id": s.id, "lat": s.lat, "lng": s.lng, "name": s.name} for s in ds.stations
            ],
        },
    }
    if ds.grid_traffic is not None:
        doc["grid"] = {"traffic": ds.grid_traffic.tolist()}
    if ds.external:
        doc["external"] = {k: ds.external[k].tolist() for k in sorted(ds.external)}
    return doc


def _require(doc: Mapping, key: str, where: str):
    if not isinstance(doc, Mapping) or key not in doc:
        raise MissingKey(f"missing key {where}{key!r}")
    return doc[key]


def dataset_from_dict(doc: Mapping) -> STDataset:
    version = _require(doc, "version", "")
    if version != FORMAT_VERSION:
        raise InvalidValue(f"version: unsupported container version {version!r}")
    tr = _require(doc, "time_range", "")
    if not isinstance(tr, list) or len(tr) != 2:
        raise ShapeMismatch("time_range: expected two timestamps")
    try:
        start, end = parse_timestamp(tr[0]), parse_timestamp(tr[1])
    except (TypeError, ValueError) as exc:
        raise InvalidValue(f"time_range: {exc}") from None
    fitness = _require(doc, "time_fitness_minutes", "")
    node = _require(doc, "node", "")
    traffic = _require(node, "traffic", "node.")
    raw_stations = _require(node, "stations", "node.")
    stations = []
    for i, rec in enumerate(raw_stations):
        for key in ("id", "lat", "lng"):
            _require(rec, key, f"node.stations[{i}].")
        stations.append(Station(str(rec["id"]), rec["lat"], rec["lng"], str(rec.get("name", ""))))
    try:
        traffic = np.array(traffic, dtype=np.float64)
    except (TypeError, ValueError):
        raise ShapeMismatch("node.traffic: rows have inconsistent lengths") from None
    grid = None
    if "grid" in doc:
        grid = _require(doc["grid"], "traffic", "grid.")
    external = doc.get("external") or {}
    return STDataset((start, end), fitness, traffic, tuple(stations), grid, external)


def save_dataset(ds: STDataset, path) -> None:
    text = json.dumps(dataset_to_dict(ds), allow_nan=False)
    try:
        Path(path).write_text(text + "\n", encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from None


def load_dataset(path) -> STDataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidValue(f"{path}: not a valid container ({exc})") from None
    return dataset_from_dict(doc)


# -- ingestion -------------------------------------------------------------

def read_stations_csv(path) -> list[Station]:
    """Read ``id,lat,lng[,name]`` rows."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                out.append(Station(row["id"], float(row["lat"]), float(row["lng"]), row.get("name") or ""))
            except (KeyError, TypeError, ValueError):
                raise MalformedRow(f"{path}:{lineno}: expected id,lat,lng[,name]") from None
    return out


def ingest_events(csv_path, start: datetime, end: datetime, time_fitness: int,
                  stations: Sequence[Station]) -> tuple[STDataset, int]:
    """Aggregate ``timestamp,station_id[,count]`` events into slot counts.

    Slots are half-open; events outside ``[start, end)`` are dropped. Returns
    the dataset and the number of dropped rows.
    """
    n_slots = expected_slots(start, end, time_fitness)
    index = {s.id: i for i, s in enumerate(stations)}
    traffic = np.zeros((max(n_slots, 0), len(stations)))
    slot_seconds = time_fitness * 60
    dropped = 0
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["timestamp", "station_id"]:
            raise MalformedRow(f"{csv_path}:1: header must be timestamp,station_id,count")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2 or len(row) > 3:
                raise MalformedRow(f"{csv_path}:{lineno}: expected 2 or 3 fields, got {len(row)}")
            try:
                ts = parse_timestamp(row[0])
                count = float(row[2]) if len(row) == 3 and row[2].strip() else 1.0
            except ValueError:
                raise MalformedRow(f"{csv_path}:{lineno}: cannot parse {row!r}") from None
            if not math.isfinite(count) or count < 0:
                raise MalformedRow(f"{csv_path}:{lineno}: count must be finite and >= 0")
            sid = row[1].strip()
            if sid not in index:
                raise UnknownStation(f"{csv_path}:{lineno}: unknown station id {sid!r}")
            if not (start <= ts < end):
                dropped += 1
                continue
            slot = math.floor((ts - start).total_seconds() / slot_seconds)
            if slot >= n_slots:
                # tail shorter than one slot
                dropped += 1
                continue
            traffic[slot, index[sid]] += count
    return STDataset((start, end), time_fitness, traffic, tuple(stations)), dropped


# -- normalization ---------------------------------------------------------

SCHEMES = ("zscore-per-station", "minmax-global", "none")


@dataclass(frozen=True, eq=False)
class Scaler:
    """Fixed affine transform applied along the last (station/feature) axis."""

    scheme: str
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    minimum: float | None = None
    maximum: float | None = None

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.scheme == "zscore-per-station":
            safe = np.where(self.std > 0, self.std, 1.0)
            return np.where(self.std > 0, (x - self.mean) / safe, 0.0)
        if self.scheme == "minmax-global":
            span = self.maximum - self.minimum
            if span <= 0:
                return np.zeros_like(x)
            return (x - self.minimum) / span
        return x.copy()

    def inverse(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.scheme == "zscore-per-station":
            return z * self.std + self.mean
        if self.scheme == "minmax-global":
            return z * (self.maximum - self.minimum) + self.minimum
        return z.copy()

    def to_dict(self) -> dict:
        doc = {"scheme": self.scheme}
        if self.mean is not None:
            doc["mean"] = self.mean.tolist()
            doc["std"] = self.std.tolist()
        if self.minimum is not None:
            doc["minimum"] = self.minimum
            doc["maximum"] = self.maximum
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Scaler":
        mean = np.array(doc["mean"]) if "mean" in doc else None
        std = np.array(doc["std"]) if "std" in doc else None
        return cls(doc["scheme"], mean, std, doc.get("minimum"), doc.get("maximum"))


def fit_scaler(train_slice, scheme: str = "zscore-per-station") -> Scaler:
    x = np.asarray(train_slice, dtype=np.float64)
    if scheme not in SCHEMES:
        raise InvalidConfig(f"unknown scaler scheme {scheme!r}")
    if x.size == 0:
        raise EmptyInput("cannot fit a scaler on an empty slice")
    if scheme == "zscore-per-station":
        flat = x.reshape(-1, x.shape[-1])
        return Scaler(scheme, mean=flat.mean(axis=0), std=flat.std(axis=0))
    if scheme == "minmax-global":
        return Scaler(scheme, minimum=float(x.min()), maximum=float(x.max()))
    return Scaler(scheme)


def transform(scaler: Scaler, x) -> np.ndarray:
    return scaler.transform(x)


def inverse(scaler: Scaler, z) -> np.ndarray:
    return scaler.inverse(z)


# -- splitting -------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_ratio: float = 0.8
    val_ratio: float = 0.1
    test_ratio: float = 0.1

    def __post_init__(self):
        ratios = (self.train_ratio, self.val_ratio, self.test_ratio)
        if any(not (r > 0) for r in ratios):
            raise InvalidConfig(f"split ratios must be positive, got {ratios}")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise RatioSumNotOne(f"split ratios sum to {sum(ratios)!r}, expected 1")


def split(ds_or_slots, spec: SplitSpec = SplitSpec()) -> tuple[range, range, range]:
    """Chronological train/val/test slot ranges."""
    n = ds_or_slots.n_slots if isinstance(ds_or_slots, STDataset) else int(ds_or_slots)
    # guard against 0.7*10 landing at 6.999...
    n_train = math.floor(spec.train_ratio * n + 1e-9)
    n_val = math.floor(spec.val_ratio * n + 1e-9)
    n_test = n - n_train - n_val
    for name, count in (("train", n_train), ("val", n_val), ("test", n_test)):
        if count <= 0:
            raise EmptySplit(f"{name} split is empty for T={n} with ratios {spec}")
    return range(0, n_train), range(n_train, n_train + n_val), range(n_train + n_val, n)
