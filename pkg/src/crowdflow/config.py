"""JSON config documents for the command line, validated with jsonschema."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .data import SCHEMES, SplitSpec
from .errors import InvalidConfig
from .models.core import FAMILIES, FUSIONS
from .pipeline import GraphSpec
from .training import TrainConfig

_INT0 = {"type": "integer", "minimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_POS = {"type": "number", "exclusiveMinimum": 0}

TEMPORAL_SCHEMA = {
    "type": "object",
    "properties": {"closeness": _INT0, "daily": _INT0, "weekly": _INT0, "horizon": _INT1},
    "additionalProperties": False,
}

EARLY_STOP_SCHEMA = {
    "type": "object",
    "properties": {
        "variant": {"enum": ["naive", "ttest", "none"]},
        "patience": _INT1,
        "window": {"type": "integer", "minimum": 2},
        "p_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "pooled": {"type": "boolean"},
    },
    "additionalProperties": False,
}

TRAIN_SCHEMA = {
    "type": "object",
    "properties": {
        "batch_size": _INT1,
        "max_epochs": _INT1,
        "learning_rate": _POS,
        "optimizer": {"enum": ["sgd", "adam"]},
        "early_stop": EARLY_STOP_SCHEMA,
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

SPLIT_SCHEMA = {
    "type": "object",
    "properties": {"train_ratio": _POS, "val_ratio": _POS, "test_ratio": _POS},
    "additionalProperties": False,
}

GRAPH_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["distance", "correlation"]},
        "threshold": {"type": "number"},
        "auto_density": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
    "required": ["kind"],
    "not": {"required": ["threshold", "auto_density"]},
    "additionalProperties": False,
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "family": {"enum": list(FAMILIES)},
        "graphs": {"type": "array", "items": {"type": "string"}},
        "cheb_order": _INT1,
        "hidden_dim": _INT1,
        "fusion": {"enum": list(FUSIONS)},
        "ridge_lambda": {"type": "number", "minimum": 0},
        "ar_difference": {"type": "boolean"},
        "seed": {"type": "integer"},
    },
    "required": ["name", "family"],
    "additionalProperties": False,
}

_COMMON = {
    "temporal": TEMPORAL_SCHEMA,
    "graphs": {"type": "object", "additionalProperties": GRAPH_SCHEMA},
    "train": TRAIN_SCHEMA,
    "split": SPLIT_SCHEMA,
    "scaler": {"enum": list(SCHEMES)},
    "metrics": {
        "type": "object",
        "properties": {"mape_mask": {"type": "number", "minimum": 0}},
        "additionalProperties": False,
    },
    "seed": {"type": "integer"},
}

BENCHMARK_SCHEMA = {
    "type": "object",
    "properties": {
        "datasets": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {"type": "string"},
                    {
                        "type": "object",
                        "properties": {"name": {"type": "string"}, "path": {"type": "string"}},
                        "required": ["name", "path"],
                        "additionalProperties": False,
                    },
                ]
            },
        },
        "models": {"type": "array", "minItems": 1, "items": MODEL_SCHEMA},
        "jobs": _INT1,
        **_COMMON,
    },
    "required": ["datasets", "models"],
    "additionalProperties": False,
}

TRAIN_CMD_SCHEMA = {
    "type": "object",
    "properties": {"dataset": {"type": "string"}, "model": MODEL_SCHEMA, **_COMMON},
    "required": ["dataset", "model"],
    "additionalProperties": False,
}

SYNTH_SCHEMA = {
    "type": "object",
    "properties": {
        "n_stations": _INT1,
        "n_days": _INT1,
        "slots_per_day": _INT1,
        "base_rates": {"oneOf": [_POS, {"type": "array", "items": _POS, "minItems": 1}]},
        "daily_amplitude": {"type": "number", "minimum": 0},
        "weekly_modulation": {"type": "number", "minimum": 0},
        "diffusion_coeff": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "layout": {"enum": ["ring", "random-geometric"]},
        "radius_m": _POS,
        "context_effect": {"type": "number", "minimum": 0},
        "context_prob": {"type": "number", "minimum": 0, "maximum": 1},
        "noise_sigma": {"type": "number", "minimum": 0},
        "seed": {"type": "integer"},
        "start": {"type": "string"},
    },
    "additionalProperties": False,
}


def _where(path) -> str:
    out = "$"
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def validate(doc, schema, source: str = "config") -> None:
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = [f"{source}: {_where(e.absolute_path)}: {e.message}" for e in errors]
        raise InvalidConfig("\n".join(lines))


def read_json(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load(path, schema) -> dict:
    doc = read_json(path)
    validate(doc, schema, str(path))
    return doc


def config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def train_config(doc: dict | None, seed: int) -> TrainConfig:
    doc = dict(doc or {})
    doc.setdefault("seed", seed)
    try:
        return TrainConfig.from_dict(doc)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from None


@dataclass
class BenchmarkConfig:
    datasets: list[tuple[str, str]]
    models: list[dict]
    temporal: dict = field(default_factory=dict)
    graphs: dict[str, GraphSpec] = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    scaler: str = "zscore-per-station"
    mape_mask: float = 0.0
    seed: int = 0
    jobs: int = 1

    @classmethod
    def from_dict(cls, doc: dict, source: str = "config") -> "BenchmarkConfig":
        validate(doc, BENCHMARK_SCHEMA, source)
        datasets = []
        for item in doc["datasets"]:
            if isinstance(item, str):
                datasets.append((Path(item).stem, item))
            else:
                datasets.append((item["name"], item["path"]))
        names = [d[0] for d in datasets]
        if len(set(names)) != len(names):
            raise InvalidConfig(f"{source}: $.datasets: dataset names must be unique, got {names}")
        model_names = [m["name"] for m in doc["models"]]
        if len(set(model_names)) != len(model_names):
            raise InvalidConfig(f"{source}: $.models: model names must be unique, got {model_names}")
        graphs = {k: GraphSpec(**v) for k, v in doc.get("graphs", {}).items()}
        for i, m in enumerate(doc["models"]):
            for g in m.get("graphs", []):
                if g not in graphs:
                    raise InvalidConfig(f"{source}: $.models[{i}].graphs: unknown graph {g!r}")
        seed = doc.get("seed", 0)
        return cls(
            datasets=datasets,
            models=[dict(m) for m in doc["models"]],
            temporal=dict(doc.get("temporal", {})),
            graphs=graphs,
            train=train_config(doc.get("train"), seed),
            split=SplitSpec(**doc.get("split", {})),
            scaler=doc.get("scaler", "zscore-per-station"),
            mape_mask=doc.get("metrics", {}).get("mape_mask", 0.0),
            seed=seed,
            jobs=doc.get("jobs", 1),
        )

    def to_dict(self) -> dict:
        graphs = {}
        for name, g in self.graphs.items():
            entry = {"kind": g.kind}
            if g.threshold is not None:
                entry["threshold"] = g.threshold
            else:
                entry["auto_density"] = g.auto_density
            graphs[name] = entry
        return {
            "datasets": [{"name": n, "path": p} for n, p in self.datasets],
            "models": [dict(m) for m in self.models],
            "temporal": dict(self.temporal),
            "graphs": graphs,
            "train": self.train.to_dict(),
            "split": {"train_ratio": self.split.train_ratio, "val_ratio": self.split.val_ratio,
                      "test_ratio": self.split.test_ratio},
            "scaler": self.scaler,
            "metrics": {"mape_mask": self.mape_mask},
            "seed": self.seed,
            "jobs": self.jobs,
        }
