"""Model x dataset benchmark runs with per-cell failure isolation."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, evaluation
from .config import BenchmarkConfig, config_hash
from .data import STDataset, load_dataset
from .errors import CrowdFlowError
from .models import ModelSpec
from .pipeline import CellResult, Prepared, build_graph, prepare, run
from .temporal import TemporalConfig
from .training import write_log_csv

log = logging.getLogger(__name__)

RESULT_FIELDS = ("model", "dataset", "rmse", "mae", "mape", "mape_coverage", "nrmse")


def temporal_for(doc: dict, ds: STDataset) -> TemporalConfig:
    defaults = TemporalConfig()
    return TemporalConfig.from_fitness(
        doc.get("closeness", defaults.closeness),
        doc.get("daily", defaults.daily),
        doc.get("weekly", defaults.weekly),
        ds.time_fitness,
        doc.get("horizon", defaults.horizon),
    )


def spec_from_entry(entry: dict, temporal: TemporalConfig, graphs: dict, seed: int) -> ModelSpec:
    return ModelSpec(
        family=entry["family"],
        temporal=temporal,
        graphs=tuple(graphs[g] for g in entry.get("graphs", [])),
        cheb_order=entry.get("cheb_order", 2),
        hidden_dim=entry.get("hidden_dim", 16),
        fusion=entry.get("fusion", "none"),
        ridge_lambda=entry.get("ridge_lambda", 0.0),
        ar_difference=entry.get("ar_difference", False),
        seed=entry.get("seed", seed),
    )


@dataclass
class _DatasetContext:
    ds: STDataset | None = None
    prep: Prepared | None = None
    graphs: dict | None = None
    temporal: TemporalConfig | None = None
    error: str | None = None


@dataclass
class BenchmarkResult:
    models: list[str]
    datasets: list[str]
    cells: dict[tuple[str, str], CellResult | None]
    errors: dict[tuple[str, str], str]
    station_ids: dict[str, list[str]]

    @property
    def ok(self) -> bool:
        return not self.errors


def _load_context(cfg: BenchmarkConfig, path: Path, needed_graphs: set[str]) -> _DatasetContext:
    ctx = _DatasetContext()
    try:
        ctx.ds = load_dataset(path)
        ctx.temporal = temporal_for(cfg.temporal, ctx.ds)
        ctx.prep = prepare(ctx.ds, ctx.temporal, cfg.split, cfg.scaler)
        ctx.graphs = {name: build_graph(ctx.ds, cfg.graphs[name], ctx.prep.ranges[0])
                      for name in sorted(needed_graphs)}
    except CrowdFlowError as exc:
        ctx.error = f"{type(exc).__name__}: {exc}"
    return ctx


def run_benchmark(cfg: BenchmarkConfig, base_dir: Path = Path(".")) -> BenchmarkResult:
    needed = {g for m in cfg.models for g in m.get("graphs", [])}
    contexts = {name: _load_context(cfg, base_dir / path, needed) for name, path in cfg.datasets}
    jobs = [(m, d) for m in cfg.models for d, _ in cfg.datasets]

    def cell(job):
        entry, dname = job
        ctx = contexts[dname]
        if ctx.error:
            return None, ctx.error
        try:
            spec = spec_from_entry(entry, ctx.temporal, ctx.graphs, cfg.seed)
            return run(ctx.ds, spec, cfg.train, cfg.split, cfg.scaler, cfg.mape_mask, prep=ctx.prep), None
        except CrowdFlowError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(cell, jobs))
    else:
        outcomes = [cell(j) for j in jobs]

    cells, errors = {}, {}
    for (entry, dname), (res, err) in zip(jobs, outcomes):
        key = (entry["name"], dname)
        cells[key] = res
        if err:
            errors[key] = err
            log.error("cell (%s, %s) failed: %s", entry["name"], dname, err)
    ids = {d: [s.id for s in c.ds.stations] for d, c in contexts.items() if c.ds is not None}
    return BenchmarkResult([m["name"] for m in cfg.models], [d for d, _ in cfg.datasets], cells, errors, ids)


def _num(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else evaluation.MISSING


def write_results(result: BenchmarkResult, cfg: BenchmarkConfig, out_dir: Path, raw_config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = {k: (v.metrics if v else None) for k, v in result.cells.items()}
    rm = evaluation.rmse_matrix(metrics, result.models, result.datasets)
    keep = [j for j in range(len(result.datasets)) if np.isfinite(rm[:, j]).any()]
    nrmse = np.full(rm.shape, np.nan)
    if keep:
        nrmse[:, keep] = evaluation.nrmse_table(rm[:, keep]).nrmse

    with open(out_dir / "results.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_FIELDS)
        for i, m in enumerate(result.models):
            for j, d in enumerate(result.datasets):
                cell = metrics[(m, d)]
                if cell is None:
                    writer.writerow([m, d] + [evaluation.MISSING] * 5)
                else:
                    writer.writerow([m, d, _num(cell.rmse), _num(cell.mae), _num(cell.mape),
                                     _num(cell.mape_coverage), _num(nrmse[i, j])])

    rows = evaluation.leaderboard(result.models, result.datasets, rm)
    (out_dir / "leaderboard.txt").write_text(evaluation.render_text(rows, result.datasets), encoding="utf-8")
    (out_dir / "leaderboard.csv").write_text(evaluation.render_csv(rows, result.datasets), encoding="utf-8")

    (out_dir / "logs").mkdir(exist_ok=True)
    (out_dir / "predictions").mkdir(exist_ok=True)
    for (m, d), res in sorted(result.cells.items()):
        if res is None:
            continue
        if res.model.log:
            write_log_csv(res.model.log, out_dir / "logs" / f"{m}__{d}.csv")
        write_predictions(res, out_dir / "predictions" / f"{m}__{d}.csv", result.station_ids.get(d))

    manifest = {
        "crowdflow_version": __version__,
        "config_sha256": config_hash(raw_config),
        "seed": cfg.seed,
        "train_seed": cfg.train.seed,
        "model_seeds": {m["name"]: m.get("seed", cfg.seed) for m in cfg.models},
        "config": cfg.to_dict(),
        "cells": [
            {"model": m, "dataset": d, "status": "failed" if (m, d) in result.errors else "ok",
             "error": result.errors.get((m, d))}
            for m in result.models for d in result.datasets
        ],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def write_predictions(res: CellResult, path: Path, ids: list[str] | None = None) -> None:
    n = res.predictions.shape[1]
    ids = ids or [str(i) for i in range(n)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slot", "station", "predicted", "actual"])
        for row, slot in enumerate(res.target_slots):
            for k in range(n):
                writer.writerow([int(slot), ids[k], repr(float(res.predictions[row, k])),
                                 repr(float(res.truth[row, k]))])
