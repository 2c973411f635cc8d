"""fit / predict / gradient over the model families."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidConfig, MissingContext
from ..temporal import SampleSet
from ..training import TrainConfig, train_loop
from . import baselines, stmeta
from .core import FAMILIES, FUSIONS, ModelSpec, TrainedModel, check_samples, pack, unpack
from .io import load_model, save_model

__all__ = [
    "FAMILIES", "FUSIONS", "ModelSpec", "TrainedModel",
    "fit", "predict", "gradient", "save_model", "load_model",
]


def _n_context(spec: ModelSpec, samples: SampleSet) -> int:
    if spec.fusion == "none":
        return 0
    if samples.context is None or samples.context.shape[1] == 0:
        raise MissingContext(f"fusion {spec.fusion!r} needs context features but samples carry none")
    return samples.context.shape[1]


def _rmse(pred, truth) -> float:
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def fit(spec: ModelSpec, train: SampleSet, val: SampleSet | None = None,
        train_cfg: TrainConfig | None = None) -> TrainedModel:
    check_samples(spec, train)
    family = spec.family
    if family in ("hm-tc", "hm-tm"):
        return TrainedModel(spec, (), np.zeros(0))
    if family == "ar":
        lay = baselines.ar_layout(spec, train.n_stations)
        return TrainedModel(spec, lay, pack(lay, baselines.ar_fit(spec, train)))
    if family == "tmeta-ridge":
        lay = baselines.tmeta_layout(spec)
        return TrainedModel(spec, lay, pack(lay, baselines.tmeta_fit(spec, train)))

    if val is None or len(val) == 0:
        raise InvalidConfig("stmeta-lite needs a non-empty validation set")
    check_samples(spec, val)
    train_cfg = train_cfg or TrainConfig()
    n_ctx = _n_context(spec, train)
    lay = stmeta.layout(spec, n_ctx)
    stacks = spec.cheb_stacks()
    train_spatial = stmeta.spatial_terms(stacks, train)
    val_spatial = stmeta.spatial_terms(stacks, val)

    def loss_and_grad(flat, batch):
        sub = train.subset(batch)
        return stmeta.loss_and_gradient(spec, lay, flat, sub, stacks, n_ctx,
                                        [p[batch] for p in train_spatial])

    def evaluate(flat):
        return _rmse(stmeta.predict(spec, lay, flat, val, stacks, n_ctx, val_spatial), val.targets)

    best, log = train_loop(stmeta.init_params(spec, n_ctx), len(train), loss_and_grad, evaluate, train_cfg)
    return TrainedModel(spec, lay, best, n_context=n_ctx, log=tuple(log))


def predict(model: TrainedModel, samples: SampleSet) -> np.ndarray:
    spec = model.spec
    check_samples(spec, samples)
    if spec.family in ("hm-tc", "hm-tm"):
        return baselines.hm_predict(spec, samples)
    params = model.params()
    if spec.family == "ar":
        return baselines.ar_predict(spec, params, samples)
    if spec.family == "tmeta-ridge":
        return baselines.tmeta_predict(params, samples)
    return stmeta.predict(spec, model.layout, model.parameters, samples, spec.cheb_stacks(), model.n_context)


def gradient(model: TrainedModel, batch: SampleSet) -> np.ndarray:
    """MSE gradient w.r.t. the flat parameters; empty for closed-form families."""
    spec = model.spec
    check_samples(spec, batch)
    if spec.family != "stmeta-lite":
        return np.zeros(0)
    _, grad = stmeta.loss_and_gradient(spec, model.layout, model.parameters, batch,
                                       spec.cheb_stacks(), model.n_context)
    return grad


def init_model(spec: ModelSpec, n_context: int = 0) -> TrainedModel:
    """Untrained stmeta-lite model with seeded initial parameters."""
    if spec.family != "stmeta-lite":
        raise InvalidConfig("init_model is only meaningful for stmeta-lite")
    return TrainedModel(spec, stmeta.layout(spec, n_context), stmeta.init_params(spec, n_context),
                        n_context=n_context)
