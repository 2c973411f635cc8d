"""One-hidden-layer multi-graph network with optional context fusion.

Per station n of sample s::

    x   = temporal features of (s, n)            [early fusion edits x]
    z   = x W_t + sum_g P_g[s, n] W_g + b_h      P_g = Chebyshev terms of the latest flows
    h   = tanh(z)                                 [late fusion edits h]
    y^  = h W_o + b_o

Weights are shared across stations; gradients are derived by hand.
"""

from __future__ import annotations

import numpy as np

from ..errors import MissingContext, ShapeMismatch
from ..temporal import SampleSet
from .core import Layout, ModelSpec, pack, unpack


def layout(spec: ModelSpec, n_context: int) -> Layout:
    hidden = spec.hidden_dim
    n_temporal = spec.temporal.n_features
    d_in = n_temporal + (n_context if spec.fusion == "early-concat" else 0)
    entries = [("W_t", (d_in, hidden))]
    entries += [(f"W_g{i}", (spec.cheb_order, hidden)) for i in range(len(spec.graphs))]
    entries.append(("b_h", (hidden,)))
    if spec.fusion == "early-add":
        entries.append(("W_p", (n_context, n_temporal)))
    elif spec.fusion == "raw-add":
        entries.append(("W_p", (n_context, hidden)))
    elif spec.fusion == "raw-gating":
        entries += [("W_c", (n_context, hidden)), ("b_c", (hidden,))]
    h_out = hidden + (n_context if spec.fusion == "raw-concat" else 0)
    entries += [("W_o", (h_out,)), ("b_o", (1,))]
    return tuple(entries)


def _fan_in(name: str, spec: ModelSpec, lay: Layout, n_context: int) -> int:
    shapes = dict(lay)
    if name in ("W_t", "b_h"):
        return shapes["W_t"][0]
    if name.startswith("W_g"):
        return spec.cheb_order
    if name in ("W_p", "W_c", "b_c"):
        return n_context
    return shapes["W_o"][0]


def init_params(spec: ModelSpec, n_context: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) seeded by the model's seed."""
    lay = layout(spec, n_context)
    rng = np.random.default_rng(spec.seed)
    parts = {}
    for name, shape in lay:
        bound = 1.0 / np.sqrt(max(_fan_in(name, spec, lay, n_context), 1))
        parts[name] = rng.uniform(-bound, bound, size=shape)
    return pack(lay, parts)


def spatial_terms(stacks, samples: SampleSet) -> list[np.ndarray]:
    """For each graph, T_k @ latest-flow vector for all k: S x N x K."""
    latest = samples.closeness[:, :, -1]
    return [np.einsum("kij,sj->sik", stack.as_array(), latest) for stack in stacks]


def _context(spec: ModelSpec, samples: SampleSet, n_context: int) -> np.ndarray | None:
    if spec.fusion == "none":
        return None
    if samples.context is None:
        raise MissingContext(f"fusion {spec.fusion!r} needs context features but samples carry none")
    if samples.context.shape[1] != n_context:
        raise ShapeMismatch(f"context has {samples.context.shape[1]} columns, model expects {n_context}")
    return samples.context


def forward(spec: ModelSpec, params: dict, samples: SampleSet, stacks, n_context: int,
            spatial=None):
    """Return predictions (S x N) and the cache used by :func:`backward`.

    ``spatial`` may carry precomputed :func:`spatial_terms` for ``samples``.
    """
    fusion = spec.fusion
    c = _context(spec, samples, n_context)
    x = samples.temporal_features()
    s, n, _ = x.shape
    if fusion == "early-concat":
        x = np.concatenate([x, np.broadcast_to(c[:, None, :], (s, n, c.shape[1]))], axis=2)
    elif fusion == "early-add":
        x = x + (c @ params["W_p"])[:, None, :]
    if spatial is None:
        spatial = spatial_terms(stacks, samples)
    z = x @ params["W_t"] + params["b_h"]
    for i, p_g in enumerate(spatial):
        z = z + p_g @ params[f"W_g{i}"]
    h = np.tanh(z)
    gate = None
    if fusion == "raw-concat":
        h_out = np.concatenate([h, np.broadcast_to(c[:, None, :], (s, n, c.shape[1]))], axis=2)
    elif fusion == "raw-add":
        h_out = h + (c @ params["W_p"])[:, None, :]
    elif fusion == "raw-gating":
        # overflow-free logistic
        gate = 0.5 * (1.0 + np.tanh(0.5 * (c @ params["W_c"] + params["b_c"])))
        h_out = h * gate[:, None, :]
    else:
        h_out = h
    pred = h_out @ params["W_o"] + params["b_o"][0]
    cache = {"x": x, "spatial": spatial, "h": h, "h_out": h_out, "gate": gate, "c": c}
    return pred, cache


def backward(spec: ModelSpec, params: dict, lay: Layout, cache: dict, residual: np.ndarray) -> np.ndarray:
    """Gradient of mean((pred - y)^2) given ``residual = pred - y``."""
    grads = {name: np.zeros(shape) for name, shape in lay}
    d_pred = 2.0 * residual / residual.size
    h, h_out, c = cache["h"], cache["h_out"], cache["c"]
    hidden = h.shape[2]

    grads["W_o"] = np.einsum("snh,sn->h", h_out, d_pred)
    grads["b_o"] = np.array([d_pred.sum()])
    d_hout = d_pred[:, :, None] * params["W_o"]

    fusion = spec.fusion
    if fusion == "raw-concat":
        d_h = d_hout[:, :, :hidden]
    elif fusion == "raw-add":
        d_h = d_hout
        grads["W_p"] = c.T @ d_hout.sum(axis=1)
    elif fusion == "raw-gating":
        gate = cache["gate"]
        d_h = d_hout * gate[:, None, :]
        d_gate = (d_hout * h).sum(axis=1)
        d_act = d_gate * gate * (1.0 - gate)
        grads["W_c"] = c.T @ d_act
        grads["b_c"] = d_act.sum(axis=0)
    else:
        d_h = d_hout

    d_z = d_h * (1.0 - h * h)
    grads["W_t"] = np.einsum("snd,snh->dh", cache["x"], d_z)
    grads["b_h"] = d_z.sum(axis=(0, 1))
    for i, p_g in enumerate(cache["spatial"]):
        grads[f"W_g{i}"] = np.einsum("snk,snh->kh", p_g, d_z)
    if fusion == "early-add":
        d_x = d_z @ params["W_t"].T
        grads["W_p"] = c.T @ d_x.sum(axis=1)
    return pack(lay, grads)


def predict(spec, lay, flat, samples, stacks, n_context, spatial=None) -> np.ndarray:
    pred, _ = forward(spec, unpack(lay, flat), samples, stacks, n_context, spatial)
    return pred


def loss_and_gradient(spec, lay, flat, samples, stacks, n_context,
                      spatial=None) -> tuple[float, np.ndarray]:
    params = unpack(lay, flat)
    pred, cache = forward(spec, params, samples, stacks, n_context, spatial)
    residual = pred - samples.targets
    return float(np.mean(residual ** 2)), backward(spec, params, lay, cache, residual)
