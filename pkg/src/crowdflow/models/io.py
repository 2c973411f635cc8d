"""Text dump/restore of fitted models.

The dump is a JSON document with one named section per layout entry; floats
are written with ``repr`` precision, so a restored model predicts bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..data import Scaler
from ..errors import InvalidValue, IOFailure, MissingKey
from ..graphs import graph_from_adjacency
from ..temporal import TemporalConfig
from ..training import EpochRecord
from .core import ModelSpec, TrainedModel, pack

MODEL_FORMAT = "crowdflow-model"


def spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "family": spec.family,
        "temporal": spec.temporal.to_dict(),
        "cheb_order": spec.cheb_order,
        "hidden_dim": spec.hidden_dim,
        "fusion": spec.fusion,
        "ridge_lambda": spec.ridge_lambda,
        "ar_difference": spec.ar_difference,
        "seed": spec.seed,
        "graphs": [
            {
                "kind": g.kind,
                "threshold": g.threshold,
                "lambda_max": g.lambda_max,
                "adjacency": g.adjacency.astype(int).tolist(),
            }
            for g in spec.graphs
        ],
    }


def spec_from_dict(doc: dict) -> ModelSpec:
    graphs = []
    for g in doc.get("graphs", []):
        graphs.append(graph_from_adjacency(g["kind"], np.array(g["adjacency"], dtype=float),
                                           g["threshold"], lambda_max=g["lambda_max"]))
    return ModelSpec(
        family=doc["family"],
        temporal=TemporalConfig(**doc["temporal"]),
        graphs=tuple(graphs),
        cheb_order=doc["cheb_order"],
        hidden_dim=doc["hidden_dim"],
        fusion=doc["fusion"],
        ridge_lambda=doc["ridge_lambda"],
        ar_difference=doc["ar_difference"],
        seed=doc["seed"],
    )


def model_to_dict(model: TrainedModel) -> dict:
    params = model.params()
    return {
        "format": MODEL_FORMAT,
        "version": 1,
        "spec": spec_to_dict(model.spec),
        "n_context": model.n_context,
        "parameters": [
            {"name": name, "shape": list(shape), "values": params[name].reshape(-1).tolist()}
            for name, shape in model.layout
        ],
        "scaler": model.scaler.to_dict() if model.scaler else None,
        "context_scaler": model.context_scaler.to_dict() if model.context_scaler else None,
        "log": [
            {"epoch": r.epoch, "train_loss": r.train_loss, "val_rmse": r.val_rmse,
             "stopped": r.stopped, "rule_fired": r.rule_fired}
            for r in model.log
        ],
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise InvalidValue("not a model dump")
    try:
        layout = tuple((p["name"], tuple(p["shape"])) for p in doc["parameters"])
        parts = {p["name"]: np.array(p["values"], dtype=np.float64) for p in doc["parameters"]}
        spec = spec_from_dict(doc["spec"])
        n_context = doc["n_context"]
    except KeyError as exc:
        raise MissingKey(f"model dump is missing key {exc}") from None
    scaler = Scaler.from_dict(doc["scaler"]) if doc.get("scaler") else None
    ctx = Scaler.from_dict(doc["context_scaler"]) if doc.get("context_scaler") else None
    log = tuple(EpochRecord(**r) for r in doc.get("log", []))
    return TrainedModel(spec, layout, pack(layout, parts), n_context, log, scaler, ctx)


def save_model(model: TrainedModel, path) -> None:
    try:
        Path(path).write_text(json.dumps(model_to_dict(model), indent=1, allow_nan=False) + "\n",
                              encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from None


def load_model(path) -> TrainedModel:
    try:
        return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from None
