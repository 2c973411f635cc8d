"""Threshold graphs over stations, normalized Laplacians and Chebyshev convolution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientLength, InvalidConfig, InvalidCoordinate, ShapeMismatch

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_TARGET_DENSITY = 0.20


def haversine_matrix(lat, lng) -> np.ndarray:
    """Pairwise great-circle distances in meters."""
    lat = np.radians(np.asarray(lat, dtype=np.float64))
    lng = np.radians(np.asarray(lng, dtype=np.float64))
    dlat = lat[:, None] - lat[None, :]
    dlng = lng[:, None] - lng[None, :]
    a = np.sin(dlat / 2) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlng / 2) ** 2
    d = 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    np.fill_diagonal(d, 0.0)
    return d


def station_distances(stations: Sequence) -> np.ndarray:
    for i, st in enumerate(stations):
        if not (-90 <= st.lat <= 90 and -180 <= st.lng <= 180):
            raise InvalidCoordinate(f"stations[{i}]: ({st.lat}, {st.lng}) is not a valid coordinate")
    return haversine_matrix([s.lat for s in stations], [s.lng for s in stations])


@dataclass(frozen=True, eq=False)
class Graph:
    kind: str
    adjacency: np.ndarray
    threshold: float
    laplacian: np.ndarray
    scaled_laplacian: np.ndarray
    lambda_max: float
    density: float

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def degrees(self) -> np.ndarray:
        """Neighbor counts excluding the self-loop."""
        return self.adjacency.sum(axis=1).astype(int) - 1


def off_diagonal_density(adjacency) -> float:
    a = np.asarray(adjacency)
    n = a.shape[0]
    if n < 2:
        return 0.0
    return float((a.sum() - np.trace(a)) / (n * (n - 1)))


def laplacian(adjacency) -> np.ndarray:
    """Symmetric-normalized Laplacian ``I - D^-1/2 A D^-1/2``."""
    a = np.asarray(adjacency, dtype=np.float64)
    deg = a.sum(axis=1)
    if (deg <= 0).any():
        raise InvalidConfig("every node needs positive degree (add self-loops)")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(a.shape[0]) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    return (lap + lap.T) / 2


def power_iteration(matrix, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix via the Rayleigh quotient.

    Stops on the eigen-residual ``|Mv - lam v|`` rather than on the change in
    ``lam``: the Rayleigh quotient error is bounded by residual**2 / gap, so
    slow near-degenerate cases cannot stop early with a biased estimate.
    """
    m = np.asarray(matrix, dtype=np.float64)
    n = m.shape[0]
    if not m.any():
        return 0.0
    # fixed, non-symmetric start so no eigenvector is missed by construction
    v = np.linspace(1.0, 2.0, n) + 0.1 * np.sin(np.arange(1, n + 1))
    v /= np.linalg.norm(v)
    lam = float(v @ m @ v)
    for _ in range(max_iter):
        w = m @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam = float(v @ m @ v)
        if np.linalg.norm(m @ v - lam * v) <= tol * max(1.0, abs(lam)):
            break
    return lam


def scaled_laplacian(lap, lambda_max: float | None = None, approximate: bool = False):
    """Return ``(2 L / lambda_max - I, lambda_max)``.

    ``approximate=True`` uses the common ``lambda_max = 2`` shortcut instead of
    power iteration. A Laplacian with no edges maps to ``-I`` and reports 0.
    """
    lap = np.asarray(lap, dtype=np.float64)
    n = lap.shape[0]
    if lambda_max is None:
        lambda_max = 2.0 if approximate else power_iteration(lap)
    if lambda_max < 1e-12:
        return -np.eye(n), 0.0
    return (2.0 / lambda_max) * lap - np.eye(n), float(lambda_max)


def graph_from_adjacency(kind: str, adjacency, threshold: float, approximate: bool = False,
                         lambda_max: float | None = None) -> Graph:
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"adjacency must be square, got {a.shape}")
    a = np.maximum(a, a.T)
    np.fill_diagonal(a, 1.0)
    lap = laplacian(a)
    scaled, lam = scaled_laplacian(lap, lambda_max, approximate)
    for arr in (a, lap, scaled):
        arr.setflags(write=False)
    return Graph(kind, a, float(threshold), lap, scaled, lam, off_diagonal_density(a))


def distance_graph(stations: Sequence, threshold_m: float, approximate: bool = False) -> Graph:
    """Connect stations within ``threshold_m`` meters (inclusive)."""
    if threshold_m < 0:
        raise InvalidConfig("distance threshold must be >= 0")
    dist = station_distances(stations)
    return graph_from_adjacency("distance", (dist <= threshold_m).astype(float), threshold_m, approximate)


def pearson_matrix(series) -> np.ndarray:
    """Pairwise Pearson r between columns; zero-variance columns get r = 0."""
    x = np.asarray(series, dtype=np.float64)
    centered = x - x.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    ok = norms > 0
    safe = np.where(ok, norms, 1.0)
    r = (centered.T @ centered) / np.outer(safe, safe)
    r[~ok, :] = 0.0
    r[:, ~ok] = 0.0
    return np.clip(r, -1.0, 1.0)


def correlation_graph(train_series, threshold_r: float, train_end: int | None = None,
                      approximate: bool = False) -> Graph:
    """Connect stations whose training-period Pearson r is at least ``threshold_r``.

    When ``train_end`` is given only rows before it are used, so a caller can
    pass the full series without leaking validation/test slots.
    """
    x = np.asarray(train_series, dtype=np.float64)
    if train_end is not None:
        if train_end > x.shape[0]:
            raise InsufficientLength(f"train_end={train_end} exceeds series length {x.shape[0]}")
        x = x[:train_end]
    if x.shape[0] < 2:
        raise InsufficientLength("correlation needs at least 2 slots")
    r = pearson_matrix(x)
    return graph_from_adjacency("correlation", (r >= threshold_r).astype(float), threshold_r, approximate)


@dataclass(frozen=True)
class ThresholdChoice:
    threshold: float
    density: float
    degenerate: bool = False


def auto_threshold(scores, target_density: float = DEFAULT_TARGET_DENSITY,
                   direction: str = "at-most") -> ThresholdChoice:
    """Pick the threshold whose graph is the sparsest one with density >= target.

    ``at-most`` connects pairs with score <= threshold (distances), ``at-least``
    pairs with score >= threshold (correlations). Candidates are the distinct
    off-diagonal scores.
    """
    s = np.asarray(scores, dtype=np.float64)
    n = s.shape[0]
    if n < 2:
        raise InvalidConfig("auto_threshold needs at least 2 nodes")
    if not (0 < target_density <= 1):
        raise InvalidConfig("target_density must be in (0, 1]")
    if direction not in ("at-most", "at-least"):
        raise InvalidConfig(f"unknown direction {direction!r}")
    iu = np.triu_indices(n, k=1)
    pairs = np.sort(np.concatenate([s[iu], s.T[iu]]))
    total = pairs.size
    distinct = np.unique(pairs)
    if distinct.size == 1:
        return ThresholdChoice(float(distinct[0]), 1.0, degenerate=True)
    if direction == "at-most":
        counts = np.searchsorted(pairs, distinct, side="right")
        order = range(distinct.size)
    else:
        counts = total - np.searchsorted(pairs, distinct, side="left")
        order = range(distinct.size - 1, -1, -1)
    needed = target_density * total
    for i in order:
        if counts[i] >= needed - 1e-9:
            return ThresholdChoice(float(distinct[i]), counts[i] / total)
    raise AssertionError("unreachable: the widest candidate connects every pair")


@dataclass(frozen=True, eq=False)
class ChebStack:
    K: int
    polys: tuple[np.ndarray, ...]

    def as_array(self) -> np.ndarray:
        return np.stack(self.polys)


def cheb_stack(scaled_lap, K: int) -> ChebStack:
    """Chebyshev polynomials T_0..T_{K-1} of the scaled Laplacian."""
    if K < 1:
        raise InvalidConfig("Chebyshev order K must be >= 1")
    lt = np.asarray(scaled_lap, dtype=np.float64)
    if lt.ndim != 2 or lt.shape[0] != lt.shape[1]:
        raise ShapeMismatch(f"scaled Laplacian must be square, got {lt.shape}")
    polys = [np.eye(lt.shape[0])]
    if K >= 2:
        polys.append(lt.copy())
    for _ in range(2, K):
        polys.append(2.0 * lt @ polys[-1] - polys[-2])
    for p in polys:
        p.setflags(write=False)
    return ChebStack(K, tuple(polys))


def gcl_apply(stack: ChebStack, signal, weights) -> np.ndarray:
    """Chebyshev graph convolution: sum_k T_k @ signal @ weights[k]."""
    x = np.asarray(signal, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    n = stack.polys[0].shape[0]
    if x.ndim != 2 or x.shape[0] != n:
        raise ShapeMismatch(f"signal must be {n} x F, got {x.shape}")
    if w.ndim != 3 or w.shape[0] != stack.K or w.shape[1] != x.shape[1]:
        raise ShapeMismatch(f"weights must be {stack.K} x {x.shape[1]} x F', got {w.shape}")
    out = np.zeros((n, w.shape[2]))
    for tk, wk in zip(stack.polys, w):
        out += tk @ x @ wk
    return out
