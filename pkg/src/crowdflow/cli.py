"""Command-line entry point: ``crowdflow <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import Counter, defaultdict
from pathlib import Path

import numpy as np

from . import evaluation, svg
from .benchmark import run_benchmark, spec_from_entry, temporal_for, write_results
from .config import (
    SYNTH_SCHEMA,
    TRAIN_CMD_SCHEMA,
    BenchmarkConfig,
    load,
    read_json,
    train_config,
)
from .data import (
    SplitSpec,
    ingest_events,
    load_dataset,
    parse_timestamp,
    read_stations_csv,
    save_dataset,
    split,
)
from .errors import CrowdFlowError, EmptyRange, InvalidConfig, MissingKey, UnknownStation
from .graphs import auto_threshold, correlation_graph, distance_graph, pearson_matrix, station_distances
from .models import load_model
from .models.io import model_to_dict
from .pipeline import GraphSpec, build_graph, evaluate_model, prepare, run
from .synthetic import SynthConfig, describe, generate
from .training import write_log_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
CONFIG_ERRORS = (InvalidConfig, MissingKey)


def _echo(command: str, args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    print(f"# {command} " + json.dumps(cfg, default=str, sort_keys=True))


# -- commands ------------------------------------------------------------------

def cmd_ingest(args) -> int:
    stations = read_stations_csv(args.stations)
    start, end = parse_timestamp(args.start), parse_timestamp(args.end)
    ds, dropped = ingest_events(args.events, start, end, args.fitness_min, stations)
    save_dataset(ds, args.out)
    print(f"slots={ds.n_slots} stations={ds.n_stations} events_dropped={dropped}")
    return EXIT_OK


def cmd_info(args) -> int:
    ds = load_dataset(args.dataset)
    x = ds.node_traffic
    print(f"slots={ds.n_slots} stations={ds.n_stations}")
    print(f"time_range={ds.time_range[0].isoformat()} .. {ds.time_range[1].isoformat()} "
          f"fitness_min={ds.time_fitness}")
    print(f"flow mean={x.mean():.6g} min={x.min():.6g} max={x.max():.6g} "
          f"zero_share={(x == 0).mean():.4f}")
    if ds.grid_traffic is not None:
        print(f"grid shape={'x'.join(map(str, ds.grid_traffic.shape))}")
    for name in sorted(ds.external):
        print(f"external {name}: {ds.external[name].shape[1]} columns")
    if args.summary:
        print(json.dumps(describe(ds).to_dict(), indent=1))
    return EXIT_OK


def cmd_graph(args) -> int:
    ds = load_dataset(args.dataset)
    train_end = None
    if args.kind == "correlation":
        train_end = prepare_split(ds, args).stop
    if args.threshold is not None:
        if args.kind == "distance":
            graph = distance_graph(ds.stations, args.threshold)
        else:
            graph = correlation_graph(ds.node_traffic, args.threshold, train_end=train_end)
    else:
        density = args.auto_density if args.auto_density is not None else 0.2
        if args.kind == "distance":
            choice = auto_threshold(station_distances(ds.stations), density, "at-most")
            graph = distance_graph(ds.stations, choice.threshold)
        else:
            choice = auto_threshold(pearson_matrix(ds.node_traffic[:train_end]), density, "at-least")
            graph = correlation_graph(ds.node_traffic, choice.threshold, train_end=train_end)
        if choice.degenerate:
            print("warning: all pairwise scores are identical")
    degrees = graph.degrees()
    print(f"kind={graph.kind} threshold={graph.threshold:.6g} density={graph.density:.4f} "
          f"lambda_max={graph.lambda_max:.6g}")
    hist = Counter(int(d) for d in degrees)
    for deg in sorted(hist):
        print(f"degree {deg:4d}: {'#' * hist[deg]} {hist[deg]}")
    if args.svg:
        labels = [str(d) for d in sorted(hist)]
        Path(args.svg).write_text(svg.bars_svg(labels, [hist[int(k)] for k in labels],
                                               f"{graph.kind} graph degree histogram"), encoding="utf-8")
    return EXIT_OK


def prepare_split(ds, args) -> range:
    ratios = SplitSpec(*args.split) if getattr(args, "split", None) else SplitSpec()
    return split(ds, ratios)[0]


def cmd_synth(args) -> int:
    doc = load(args.config, SYNTH_SCHEMA)
    if args.seed is not None:
        doc["seed"] = args.seed
    cfg = SynthConfig(**doc)
    print("# effective " + json.dumps(cfg.to_dict(), sort_keys=True))
    ds = generate(cfg)
    save_dataset(ds, args.out)
    Path(str(args.out) + ".config.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"slots={ds.n_slots} stations={ds.n_stations}")
    return EXIT_OK


def _train_setup(doc: dict, base: Path):
    ds = load_dataset(base / doc["dataset"])
    seed = doc.get("seed", 0)
    temporal = temporal_for(doc.get("temporal", {}), ds)
    split_spec = SplitSpec(**doc.get("split", {}))
    scheme = doc.get("scaler", "zscore-per-station")
    prep = prepare(ds, temporal, split_spec, scheme)
    graph_specs = {k: GraphSpec(**v) for k, v in doc.get("graphs", {}).items()}
    for g in doc["model"].get("graphs", []):
        if g not in graph_specs:
            raise InvalidConfig(f"$.model.graphs: unknown graph {g!r}")
    graphs = {k: build_graph(ds, graph_specs[k], prep.ranges[0]) for k in doc["model"].get("graphs", [])}
    spec = spec_from_entry(doc["model"], temporal, graphs, seed)
    return ds, prep, spec, train_config(doc.get("train"), seed), split_spec, scheme


def cmd_train(args) -> int:
    doc = load(args.config, TRAIN_CMD_SCHEMA)
    if args.seed is not None:
        doc["seed"] = args.seed
    print("# effective " + json.dumps(doc, sort_keys=True))
    ds, prep, spec, tcfg, split_spec, scheme = _train_setup(doc, Path(args.config).parent)
    mape_mask = doc.get("metrics", {}).get("mape_mask", 0.0)
    result = run(ds, spec, tcfg, split_spec, scheme, mape_mask, prep=prep)
    dump = model_to_dict(result.model)
    dump["pipeline"] = {
        "split": [split_spec.train_ratio, split_spec.val_ratio, split_spec.test_ratio],
        "scaler": scheme,
        "mape_mask": mape_mask,
    }
    Path(args.out).write_text(json.dumps(dump, indent=1, allow_nan=False) + "\n", encoding="utf-8")
    if result.model.log:
        write_log_csv(result.model.log, str(args.out) + ".log.csv")
    _print_metrics(result.metrics)
    return EXIT_OK


def _print_metrics(m: evaluation.CellMetrics) -> None:
    print(f"rmse={m.rmse!r} mae={m.mae!r} mape={m.mape!r} mape_coverage={m.mape_coverage!r}")


def cmd_eval(args) -> int:
    model = load_model(args.model)
    raw = json.loads(Path(args.model).read_text(encoding="utf-8"))
    pipe = raw.get("pipeline", {})
    ds = load_dataset(args.dataset)
    split_spec = SplitSpec(*pipe.get("split", (0.8, 0.1, 0.1)))
    prep = prepare(ds, model.spec.temporal, split_spec, pipe.get("scaler", "zscore-per-station"),
                   scaler=model.scaler, context_scaler=model.context_scaler)
    result = evaluate_model(model, prep, ds, pipe.get("mape_mask", 0.0))
    _print_metrics(result.metrics)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    raw = read_json(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    cfg = BenchmarkConfig.from_dict(raw, str(args.config))
    print("# effective " + json.dumps(cfg.to_dict(), sort_keys=True))
    result = run_benchmark(cfg, Path(args.config).parent)
    out = Path(args.out)
    write_results(result, cfg, out, raw)
    print((out / "leaderboard.txt").read_text(encoding="utf-8"), end="")
    for (m, d), err in sorted(result.errors.items()):
        print(f"error [{m} x {d}]: {err}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_RUNTIME


def _read_predictions(path):
    rows = defaultdict(list)
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rows[r["station"]].append((int(r["slot"]), float(r["predicted"]), float(r["actual"])))
    return rows


def cmd_plot(args) -> int:
    if args.kind == "stations":
        if not args.dataset:
            raise InvalidConfig("plot --kind stations needs --dataset")
        text = svg.stations_svg(load_dataset(args.dataset).stations, "stations")
    else:
        if not args.predictions:
            raise InvalidConfig(f"plot --kind {args.kind} needs --predictions")
        rows = _read_predictions(args.predictions)
        if args.kind == "series":
            if args.station not in rows:
                raise UnknownStation(f"station {args.station!r} not in {args.predictions}")
            pts = sorted(rows[args.station])
            lo = args.start if args.start is not None else pts[0][0]
            hi = args.end if args.end is not None else pts[-1][0]
            pts = [p for p in pts if lo <= p[0] <= hi]
            if not pts:
                raise EmptyRange(f"no predictions for station {args.station!r} in slots [{lo}, {hi}]")
            text = svg.series_svg([p[0] for p in pts], [p[1] for p in pts], [p[2] for p in pts],
                                  f"station {args.station}")
        else:
            labels = sorted(rows)
            values = [float(np.sqrt(np.mean([(p - a) ** 2 for _, p, a in rows[k]]))) for k in labels]
            text = svg.bars_svg(labels, values, "per-station RMSE")
    Path(args.out).write_text(text, encoding="utf-8")
    print(f"wrote {args.out}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdflow", description="Spatiotemporal crowd-flow toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "aggregate an event CSV into a dataset container")
    p.add_argument("--events", required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--end", required=True)
    p.add_argument("--fitness-min", type=int, required=True)
    p.add_argument("--stations", required=True, help="CSV with id,lat,lng[,name]")
    p.add_argument("--out", required=True)

    p = add("info", cmd_info, "print dataset shape and statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--summary", action="store_true", help="also print per-station summary")

    p = add("graph", cmd_graph, "build a graph and report its statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=["distance", "correlation"], default="distance")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--threshold", type=float)
    grp.add_argument("--auto-density", type=float)
    p.add_argument("--split", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--svg", help="write a degree histogram SVG")

    p = add("synth", cmd_synth, "generate a synthetic city dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "fit one model and save it")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "evaluate a saved model on a dataset's test split")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)

    p = add("benchmark", cmd_benchmark, "run a model x dataset benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None, help="parallel cells; 1 forces sequential")

    p = add("plot", cmd_plot, "write an SVG chart")
    p.add_argument("--kind", choices=["stations", "series", "error-bars"], required=True)
    p.add_argument("--dataset")
    p.add_argument("--predictions", help="predictions CSV written by benchmark")
    p.add_argument("--station")
    p.add_argument("--start", type=int)
    p.add_argument("--end", type=int)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("ingest", "info", "graph", "eval", "plot"):
        _echo(args.command, args)
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CrowdFlowError as exc:
        print(f"error ({exc.kind}): {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
