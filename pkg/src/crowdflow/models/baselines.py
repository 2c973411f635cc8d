"""Historical means, per-station autoregression and the shared ridge map."""

from __future__ import annotations

import numpy as np

from ..errors import SingularSystem
from ..temporal import SampleSet
from .core import ModelSpec


def hm_predict(spec: ModelSpec, samples: SampleSet) -> np.ndarray:
    if spec.family == "hm-tc":
        return samples.closeness.mean(axis=2)
    return samples.temporal_features().mean(axis=2)


def ridge_solve(design: np.ndarray, target: np.ndarray, lam: float) -> np.ndarray:
    """Minimize ``|X w - y|^2 + lam |w[:-1]|^2``; the last column is the unpenalized bias."""
    p = design.shape[1]
    if lam == 0:
        rank = np.linalg.matrix_rank(design)
        if rank < p:
            raise SingularSystem(f"design matrix has rank {rank} < {p} parameters and ridge lambda is 0")
    penalty = np.full(p, float(lam))
    penalty[-1] = 0.0
    gram = design.T @ design + np.diag(penalty)
    try:
        return np.linalg.solve(gram, design.T @ target)
    except np.linalg.LinAlgError:
        raise SingularSystem("normal equations are singular") from None


def ridge_objective(design, target, weights, lam) -> float:
    r = design @ weights - target
    return float(r @ r + lam * weights[:-1] @ weights[:-1])


# -- AR --------------------------------------------------------------------

def ar_inputs(samples: SampleSet, difference: bool):
    """Per-station regressors (S x N x p) and targets (S x N)."""
    c = samples.closeness
    if difference:
        return np.diff(c, axis=2), samples.targets - c[:, :, -1]
    return c, samples.targets


def ar_layout(spec: ModelSpec, n_stations: int):
    p = spec.temporal.closeness - (1 if spec.ar_difference else 0)
    return (("coef", (n_stations, p)), ("bias", (n_stations,)))


def ar_fit(spec: ModelSpec, samples: SampleSet) -> dict[str, np.ndarray]:
    x, y = ar_inputs(samples, spec.ar_difference)
    n = samples.n_stations
    coef = np.zeros((n, x.shape[2]))
    bias = np.zeros(n)
    for j in range(n):
        design = np.column_stack([x[:, j, :], np.ones(len(samples))])
        w = ridge_solve(design, y[:, j], spec.ridge_lambda)
        coef[j], bias[j] = w[:-1], w[-1]
    return {"coef": coef, "bias": bias}


def ar_predict(spec: ModelSpec, params, samples: SampleSet) -> np.ndarray:
    x, _ = ar_inputs(samples, spec.ar_difference)
    out = np.einsum("snp,np->sn", x, params["coef"]) + params["bias"]
    if spec.ar_difference:
        out = out + samples.closeness[:, :, -1]
    return out


# -- temporal ridge ----------------------------------------------------------

def tmeta_layout(spec: ModelSpec):
    return (("weights", (spec.temporal.n_features,)), ("bias", (1,)))


def tmeta_design(samples: SampleSet) -> np.ndarray:
    feats = samples.temporal_features()
    feats = feats.reshape(-1, feats.shape[2])
    return np.column_stack([feats, np.ones(feats.shape[0])])


def tmeta_fit(spec: ModelSpec, samples: SampleSet) -> dict[str, np.ndarray]:
    w = ridge_solve(tmeta_design(samples), samples.targets.reshape(-1), spec.ridge_lambda)
    return {"weights": w[:-1], "bias": w[-1:]}


def tmeta_predict(params, samples: SampleSet) -> np.ndarray:
    return samples.temporal_features() @ params["weights"] + params["bias"][0]
