"""Point metrics and cross-dataset normalized-RMSE leaderboards."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import AllMasked, EmptyColumn, EmptyInput, ShapeMismatch

log = logging.getLogger(__name__)

MISSING = "---"


def _pair(pred, truth):
    p = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch(f"prediction shape {p.shape} != truth shape {y.shape}")
    if p.size == 0:
        raise EmptyInput("metrics need at least one element")
    return p, y


def rmse(pred, truth) -> float:
    p, y = _pair(pred, truth)
    return float(np.sqrt(np.mean((p - y) ** 2)))


def mae(pred, truth) -> float:
    p, y = _pair(pred, truth)
    return float(np.mean(np.abs(p - y)))


def mape(pred, truth, mask_threshold: float = 0.0) -> float:
    """Mean of |p - y| / y over points with y > mask_threshold."""
    p, y = _pair(pred, truth)
    keep = y > mask_threshold
    if not keep.any():
        raise AllMasked(f"no truth value exceeds the MAPE mask threshold {mask_threshold}")
    return float(np.mean(np.abs(p[keep] - y[keep]) / y[keep]))


def mape_coverage(truth, mask_threshold: float = 0.0) -> float:
    y = np.asarray(truth, dtype=np.float64)
    if y.size == 0:
        raise EmptyInput("metrics need at least one element")
    return float(np.mean(y > mask_threshold))


@dataclass(frozen=True)
class CellMetrics:
    rmse: float
    mae: float
    mape: float
    mape_coverage: float


def evaluate(pred, truth, mask_threshold: float = 0.0) -> CellMetrics:
    try:
        m = mape(pred, truth, mask_threshold)
    except AllMasked:
        m = math.nan
    return CellMetrics(rmse(pred, truth), mae(pred, truth), m, mape_coverage(truth, mask_threshold))


# -- normalized RMSE ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NRMSETable:
    nrmse: np.ndarray        # models x datasets, NaN where missing
    avg_nrmse: np.ndarray    # per model
    wst_nrmse: np.ndarray    # per model


def nrmse_table(rmse_matrix) -> NRMSETable:
    """Normalize each dataset column by its best (smallest) RMSE.

    Missing cells are NaN and are excluded from a model's mean and max.
    """
    r = np.asarray(rmse_matrix, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] == 0:
        raise EmptyInput("need a non-empty models x datasets matrix")
    finite = np.isfinite(r)
    for j in range(r.shape[1]):
        if not finite[:, j].any():
            raise EmptyColumn(f"dataset column {j} has no finite RMSE")
    best = np.where(finite, r, np.inf).min(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        nrmse = np.where(finite, r / best, np.nan)
    # a perfect-score column (best = 0) normalizes to 1 for the zero entries
    nrmse = np.where(finite & (best == 0) & (r == 0), 1.0, nrmse)
    avg = np.full(r.shape[0], np.nan)
    wst = np.full(r.shape[0], np.nan)
    for i in range(r.shape[0]):
        row = nrmse[i][finite[i]]
        if row.size:
            avg[i], wst[i] = row.mean(), row.max()
    return NRMSETable(nrmse, avg, wst)


# -- leaderboard ---------------------------------------------------------------

@dataclass(frozen=True)
class LeaderRow:
    model: str
    values: tuple[float, ...]     # one per dataset, NaN if missing
    star: tuple[bool, ...]
    bold: tuple[bool, ...]
    avg_nrmse: float
    wst_nrmse: float


def leaderboard(models: Sequence[str], datasets: Sequence[str], rmse_matrix,
                sort_key: str = "avg_nrmse") -> list[LeaderRow]:
    """Rows sorted ascending by ``sort_key`` (``avg_nrmse``, ``wst_nrmse`` or a
    dataset name); per dataset the best value is starred and the best two bold,
    ties broken by model name."""
    r = np.asarray(rmse_matrix, dtype=np.float64)
    if len(models) == 0:
        raise EmptyInput("leaderboard needs at least one model")
    keep = [j for j in range(len(datasets)) if np.isfinite(r[:, j]).any()]
    for j in range(len(datasets)):
        if j not in keep:
            log.warning("dataset %s has no results; omitted from flags", datasets[j])
    star = np.zeros(r.shape, dtype=bool)
    bold = np.zeros(r.shape, dtype=bool)
    for j in keep:
        ranked = sorted((r[i, j], models[i], i) for i in range(len(models)) if np.isfinite(r[i, j]))
        star[ranked[0][2], j] = True
        for _, _, i in ranked[:2]:
            bold[i, j] = True
    avg = np.full(len(models), np.nan)
    wst = np.full(len(models), np.nan)
    if keep:
        table = nrmse_table(r[:, keep])
        avg, wst = table.avg_nrmse, table.wst_nrmse
    rows = [
        LeaderRow(models[i], tuple(float(v) for v in r[i]), tuple(star[i]), tuple(bold[i]), float(avg[i]), float(wst[i]))
        for i in range(len(models))
    ]

    def key(row: LeaderRow):
        if sort_key == "avg_nrmse":
            v = row.avg_nrmse
        elif sort_key == "wst_nrmse":
            v = row.wst_nrmse
        else:
            v = row.values[list(datasets).index(sort_key)]
        return (math.isnan(v), v if not math.isnan(v) else 0.0, row.model)

    return sorted(rows, key=key)


def _fmt(v: float, digits: int = 3) -> str:
    return MISSING if not math.isfinite(v) else f"{v:.{digits}f}"


def render_text(rows: Sequence[LeaderRow], datasets: Sequence[str], digits: int = 3) -> str:
    """Aligned table; ``*`` marks the best value, ``**...**`` the best two."""
    header = ["model", *datasets, "AvgNRMSE", "WstNRMSE"]
    body = []
    for row in rows:
        cells = [row.model]
        for v, s, b in zip(row.values, row.star, row.bold):
            text = _fmt(v, digits) + ("*" if s else "")
            cells.append(f"**{text}**" if b else text)
        cells += [_fmt(row.avg_nrmse), _fmt(row.wst_nrmse)]
        body.append(cells)
    widths = [max(len(r[k]) for r in [header, *body]) for k in range(len(header))]
    lines = []
    for r in [header, *body]:
        lines.append("  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(r, widths))))
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _num(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else MISSING


def render_csv(rows: Sequence[LeaderRow], datasets: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", *datasets, "avg_nrmse", "wst_nrmse"])
    for row in rows:
        writer.writerow([row.model, *[_num(v) for v in row.values], _num(row.avg_nrmse), _num(row.wst_nrmse)])
    return buf.getvalue()


def rmse_matrix(cells: Mapping[tuple[str, str], CellMetrics | None], models, datasets) -> np.ndarray:
    out = np.full((len(models), len(datasets)), np.nan)
    for i, m in enumerate(models):
        for j, d in enumerate(datasets):
            cell = cells.get((m, d))
            if cell is not None:
                out[i, j] = cell.rmse
    return out
