"""Command-line pipeline: simulate -> cluster -> fit -> forecast -> attribute -> report.

Each stage reads the raw event file plus the artifacts of earlier stages
from the output directory and writes its own artifacts atomically, so
stages can be rerun in place and identical inputs yield identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import attribution, baselines, forecast, simulate, taggraph
from .hawkes import fit_mle, fit_result_to_dict
from .ingest import ParseError, parse_events, write_events
from .taggraph import GenreCluster

__all__ = ["main"]

DEFAULT_MODELS = "arima_lite,hawkes,nhpp_drift,pc_nhpp,poisson"


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, obj: object) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    _atomic_write_text(path, buf.getvalue())


def _require_artifact(path: Path, produced_by: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(
            f"missing artifact {path}: run 'tagburst {produced_by}' first")
    return path


def _load_clusters(args) -> tuple[object, list[GenreCluster], dict]:
    """Rebuild GenreClusters from the input events plus the cluster artifacts."""
    out = Path(args.out)
    stream = parse_events(args.input, format=args.format)
    meta = json.loads(_require_artifact(out / "clusters.json", "cluster").read_text())
    assign_path = _require_artifact(out / "assignments.csv", "cluster")
    with assign_path.open(newline="", encoding="utf-8") as fh:
        assignment = {row["video_id"]: int(row["cluster_id"])
                      for row in csv.DictReader(fh)}
    members: dict[int, list] = {}
    for e in stream.events:
        if e.video_id not in assignment:
            raise ValueError(f"assignments.csv lacks video {e.video_id!r}; rerun 'tagburst cluster'")
        members.setdefault(assignment[e.video_id], []).append(e)
    tags = {c["cluster_id"]: frozenset(c["tags"]) for c in meta["clusters"]}
    clusters = [
        GenreCluster(cluster_id=cid, tags=tags.get(cid, frozenset()),
                     events=type(stream)(stream.origin, tuple(evs), stream.horizon_T))
        for cid, evs in sorted(members.items())]
    return stream, clusters, meta


def _parallel_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cmd_simulate(args) -> int:
    out = Path(args.out)
    stream, truth = simulate.make_synthetic_corpus(
        simulate.default_corpus_spec(), T=args.t_days, seed=args.seed)
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / "events.jsonl.stage"
    write_events(stream, tmp, format="jsonl")
    os.replace(tmp, out / "events.jsonl")
    _write_json(out / "ground_truth.json", truth)
    print(f"wrote {out / 'events.jsonl'} ({len(stream)} events) and ground_truth.json")
    return 0


def cmd_cluster(args) -> int:
    if args.eta is None and args.sweep is None:
        raise ValueError("cluster needs --eta and/or --sweep A:B")
    out = Path(args.out)
    stream = parse_events(args.input, format=args.format)

    if args.sweep is not None:
        lo, hi = args.sweep
        rows = taggraph.sweep_eta(stream, range(lo, hi + 1))
        _write_csv(out / "eta_sweep.csv",
                   ["eta", "n_components", "n_clusters", "min_events",
                    "mean_events", "max_events"],
                   [[r["eta"], r["n_components"], r["n_clusters"], r["min_events"],
                     repr(r["mean_events"]), r["max_events"]] for r in rows])
        print(f"wrote {out / 'eta_sweep.csv'} ({len(rows)} thresholds)")

    if args.eta is not None:
        graph = taggraph.build_affinity_graph(stream)
        components = taggraph.connected_components(
            taggraph.prune_graph(graph, args.eta))
        clusters = taggraph.assign_videos(stream, components)
        _write_csv(out / "assignments.csv", ["video_id", "cluster_id"],
                   taggraph.assignment_rows(stream, clusters))
        _write_json(out / "clusters.json", {
            "eta": args.eta,
            "n_components": len(components),
            "clusters": taggraph.cluster_summaries(clusters),
        })
        print(f"wrote {out / 'clusters.json'} ({len(clusters)} clusters "
              f"from {len(components)} components at eta={args.eta})")
    return 0


def cmd_fit(args) -> int:
    out = Path(args.out)
    _, clusters, meta = _load_clusters(args)

    def fit_one(c: GenreCluster) -> dict:
        times = c.events.times
        horizon = c.events.horizon_T
        entry: dict = {"cluster_id": c.cluster_id, "n_events": len(c.events)}
        try:
            entry["hawkes"] = fit_result_to_dict(fit_mle(times, horizon))
        except ValueError as exc:
            entry["hawkes"] = {"error": str(exc)}
        try:
            entry["poisson"] = fit_result_to_dict(baselines.fit_poisson(times, horizon))
        except ValueError as exc:
            entry["poisson"] = {"error": str(exc)}
        return entry

    entries = _parallel_map(fit_one, clusters, args.threads)
    _write_json(out / "fits.json", {"eta": meta.get("eta"), "clusters": entries})
    n_ok = sum(1 for e in entries if "error" not in e["hawkes"])
    print(f"wrote {out / 'fits.json'} ({n_ok}/{len(entries)} self-exciting fits)")
    return 0


def cmd_forecast(args) -> int:
    out = Path(args.out)
    _require_artifact(out / "fits.json", "fit")
    stream, clusters, _ = _load_clusters(args)
    if args.train_days is None:
        raise ValueError("forecast needs --train-days")
    spec = forecast.default_split(stream.horizon_T, args.train_days, args.horizon_days)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    table = forecast.evaluate_all(
        clusters, spec, models, bin_width=args.bin_width,
        mc_samples=args.mc_samples, seed=args.seed,
        aic_pairs=[("hawkes", "poisson")] if {"hawkes", "poisson"} <= set(models) else [])

    header = ["cluster_id", "model", "train_days", "horizon_days", "loglik", "aic",
              "predicted", "actual", "abs_error", "rel_error", "status", "note"]
    rows = [[r.cluster_id, r.model, repr(r.train_days), repr(r.horizon_days),
             None if r.loglik is None else repr(r.loglik),
             None if r.aic is None else repr(r.aic),
             None if r.predicted is None else repr(r.predicted), r.actual,
             None if r.abs_error is None else repr(r.abs_error),
             None if r.rel_error is None else repr(r.rel_error), r.status, r.note]
            for r in table.rows]
    _write_csv(out / "forecast.csv", header, rows)
    _write_json(out / "forecast.json", {
        "train_days": spec.train_days,
        "horizon_days": spec.horizon_days,
        "split_point": spec.split_point,
        "models": sorted(set(models)),
        "rows": [vars(r) for r in table.rows],
        "aggregates": table.aggregates,
        "exclusions": [{"cluster_id": cid, "reason": reason}
                       for cid, reason in table.exclusions],
        "aic_differences": list(table.aic_differences),
    })
    refused = sum(1 for r in table.rows if r.status == "refused")
    msg = f"wrote {out / 'forecast.csv'} ({len(table.rows)} rows"
    if refused:
        msg += f", {refused} refused"
    print(msg + ")")
    return 0


def cmd_attribute(args) -> int:
    out = Path(args.out)
    fits_doc = json.loads(_require_artifact(out / "fits.json", "fit").read_text())
    _, clusters, _ = _load_clusters(args)
    fits = {}
    for entry in fits_doc["clusters"]:
        h = entry["hawkes"]
        if "error" in h:
            continue
        fits[entry["cluster_id"]] = baselines.make_fit_result(
            h["model"], {"mu": h["mu"], "beta": h["beta"], "omega": h["omega"]},
            h["loglik"], h["n_params"], h["converged"], h["n_iter"],
            branching_ratio=h.get("branching_ratio"),
            warnings=tuple(h.get("warnings", ())))
    missing = [c.cluster_id for c in clusters if c.cluster_id not in fits]
    clusters = [c for c in clusters if c.cluster_id in fits]
    reports = attribution.attribution_report(
        clusters, fits, w_comments=args.w_comments, pop_scope=args.pop_scope,
        causal=not args.all_time_average)
    for cid in missing:
        reports.append(attribution.AttributionReport(
            cid, None, None, None, 0, args.w_comments, attributable=False,
            note="not attributable: no usable fit"))
    reports.sort(key=lambda r: r.cluster_id)

    _write_json(out / "attribution.json", {
        "w_comments": args.w_comments,
        "pop_scope": args.pop_scope,
        "causal": not args.all_time_average,
        "clusters": [vars(r) for r in reports],
    })
    factor_rows = []
    for r in reports:
        if not r.attributable:
            continue
        for factor, value in (("self", r.s_self), ("popularity", r.s_pop),
                              ("exogenous", r.s_exo)):
            factor_rows.append([r.cluster_id, factor, repr(value)])
    _write_csv(out / "attribution_factors.csv", ["cluster_id", "factor", "value"],
               factor_rows)
    print(f"wrote {out / 'attribution.json'} "
          f"({sum(r.attributable for r in reports)}/{len(reports)} attributable)")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    clusters_doc = json.loads(_require_artifact(out / "clusters.json", "cluster").read_text())
    fits_doc = json.loads(_require_artifact(out / "fits.json", "fit").read_text())
    forecast_doc = json.loads(_require_artifact(out / "forecast.json", "forecast").read_text())
    attribution_doc = json.loads(
        _require_artifact(out / "attribution.json", "attribute").read_text())
    _, clusters, _ = _load_clusters(args)

    aic_rows = []
    for entry in fits_doc["clusters"]:
        h, po = entry["hawkes"], entry["poisson"]
        if "error" in h or "error" in po:
            continue
        aic_rows.append([entry["cluster_id"], repr(h["aic"]), repr(po["aic"]),
                         repr(h["aic"] - po["aic"])])
    _write_csv(out / "aic_diff.csv",
               ["cluster_id", "aic_hawkes", "aic_poisson", "aic_diff"], aic_rows)

    factor_rows = []
    for r in attribution_doc["clusters"]:
        if not r["attributable"]:
            continue
        for factor, key in (("self", "s_self"), ("popularity", "s_pop"),
                            ("exogenous", "s_exo")):
            factor_rows.append([r["cluster_id"], factor, repr(r[key])])
    _write_csv(out / "factors.csv", ["cluster_id", "factor", "value"], factor_rows)

    weekly_rows = []
    for c in clusters:
        weeks = np.floor(c.events.times / 7.0).astype(int)
        for week, count in zip(*np.unique(weeks, return_counts=True)):
            weekly_rows.append([c.cluster_id, int(week), int(count)])
    _write_csv(out / "weekly_counts.csv", ["cluster_id", "week", "count"], weekly_rows)

    _write_json(out / "report.json", {
        "input": Path(args.input).name,
        "clusters": clusters_doc,
        "fits": fits_doc,
        "forecast": forecast_doc,
        "attribution": attribution_doc,
    })
    print(f"wrote {out / 'report.json'}")
    return 0


def _parse_sweep(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split(":")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected A:B with integers, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"need 1 <= A <= B, got {text!r}")
    return lo, hi


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagburst",
        description="Cluster tagged upload streams and model their burst dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_input: bool = True):
        if needs_input:
            p.add_argument("--input", required=True, help="event file (.jsonl or .csv)")
            p.add_argument("--format", choices=["jsonl", "csv"], default=None,
                           help="override the format inferred from the suffix")
        p.add_argument("--out", required=True, help="artifact directory")
        p.add_argument("--config", default=None,
                       help="key=value defaults file; explicit flags win")

    p = sub.add_parser("simulate", help="generate a labeled synthetic corpus")
    common(p, needs_input=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-days", type=float, default=120.0,
                   help="length of the simulated window in days")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cluster", help="build the tag graph and assign videos")
    common(p)
    p.add_argument("--eta", type=int, default=None,
                   help="co-occurrence pruning threshold (positive integer)")
    p.add_argument("--sweep", type=_parse_sweep, default=None, metavar="A:B",
                   help="also write component counts for eta in A..B")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("fit", help="fit self-exciting and Poisson models per cluster")
    common(p)
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for per-cluster fits")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="train/test evaluation of count forecasts")
    common(p)
    p.add_argument("--train-days", type=float, default=None)
    p.add_argument("--horizon-days", type=float, default=14.0)
    p.add_argument("--models", default=DEFAULT_MODELS,
                   help=f"comma-separated subset of {', '.join(forecast.KNOWN_MODELS)}")
    p.add_argument("--bin-width", type=float, default=7.0)
    p.add_argument("--mc-samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("attribute", help="decompose activity into factor shares")
    common(p)
    p.add_argument("--w-comments", type=float, default=1.0,
                   help="weight of comments in the popularity value")
    p.add_argument("--pop-scope", choices=["platform", "cluster"], default="platform",
                   help="history used for uploader popularity averages")
    p.add_argument("--all-time-average", action="store_true",
                   help="compare against all-time uploader averages instead of "
                        "strictly earlier uploads")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("report", help="collate artifacts into report.json and plot data")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config(argv: list[str]) -> list[str]:
    """Inject key=value pairs from --config as defaults before the user flags."""
    if "--config" not in argv:
        return argv
    path = Path(argv[argv.index("--config") + 1])
    if not path.is_file():
        raise FileNotFoundError(f"missing config file: {path}")
    injected: list[str] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        injected.extend([f"--{key.strip().replace('_', '-')}", value.strip()])
    # defaults go right after the subcommand so explicit flags override them
    return argv[:1] + injected + argv[1:]


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        if argv and not argv[0].startswith("-"):
            argv = _apply_config(argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
