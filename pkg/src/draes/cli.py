"""Command-line entry point.

Exit codes: 0 success, 1 experiment failure (e.g. bootstrap did not
converge), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict

from .adversary import AdversaryConfigError
from .graph import DegenerateConfigError, Snapshot
from .harness import (
    ConfigError,
    ExperimentConfig,
    derive_streams,
    run_comparison_norefresh,
    run_experiment,
    run_sweep,
)
from .metrics import ALL_FLAGS, DegreeBounds, compute_metrics
from .protocol import ParamError, ProtocolParams, run_bootstrap

SEED_ENV = "DRAES_SEED"

OVERRIDES = ("n", "d", "c", "k", "refresh_prob", "bootstrap_rounds_max", "rounds", "seed", "metrics_every")


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _number(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _add_overrides(p):
    p.add_argument("config", help="JSON config file")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--c", type=_number)
    p.add_argument("--k", type=int)
    p.add_argument("--refresh-prob", dest="refresh_prob", type=float)
    p.add_argument("--bootstrap-rounds-max", dest="bootstrap_rounds_max", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--metrics-every", dest="metrics_every", type=int)
    p.add_argument("--csv")
    p.add_argument("--json")
    p.add_argument("--churn-events", dest="churn_events")


def _load_config(args) -> ExperimentConfig:
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    env_seed = _default_seed()
    if env_seed is not None and "seed" not in data:
        data["seed"] = env_seed
    for key in OVERRIDES:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    out = dict(data.get("output", {}))
    for key in ("csv", "json", "churn_events"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    data["output"] = out
    return ExperimentConfig.from_dict(data)


def _print_summary(trace):
    print(json.dumps({"bootstrap_rounds_used": trace.bootstrap_rounds_used, **trace.summary}, indent=1))


def cmd_bootstrap(args):
    seed = args.seed if args.seed is not None else (_default_seed() or 0)
    params = ProtocolParams(args.n, args.d, args.c, args.k, bootstrap_rounds_max=args.bootstrap_rounds_max)
    res = run_bootstrap(params, derive_streams(seed).protocol)
    print(f"rounds_used {res.rounds_used}")
    print(f"converged {str(res.converged).lower()}")
    flags = ("spectral", "core", "lcc") if args.n > 20 else ALL_FLAGS
    rec = compute_metrics(res.graph.snapshot(), params, flags)
    print(json.dumps(asdict(rec), indent=1))
    return 0 if res.converged else 1


def cmd_run(args):
    cfg = _load_config(args)
    trace = run_experiment(cfg)
    _print_summary(trace)
    if trace.failed:
        print(f"experiment failed: {trace.failure}", file=sys.stderr)
        return 1
    return 0


def cmd_compare(args):
    cfg = _load_config(args)
    with_refresh, without = run_comparison_norefresh(cfg)
    for label, tr in (("refresh", with_refresh), ("norefresh", without)):
        print(label)
        _print_summary(tr)
    if with_refresh.failed or without.failed:
        return 1
    return 0


def _parse_grid(items):
    grid = {}
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise ConfigError(f"grid entry must look like key=v1,v2: {item!r}")
        parsed = []
        for v in values.split(","):
            try:
                parsed.append(json.loads(v))
            except json.JSONDecodeError:
                parsed.append(v)
        grid[key] = parsed
    return grid


def cmd_sweep(args):
    cfg = _load_config(args)
    grid = _parse_grid(args.grid)
    results = run_sweep(cfg, grid, args.repeats, args.outdir, args.workers)
    failed = 0
    for i, (point, trace) in enumerate(results):
        s = trace.summary
        print(
            f"point {i} seed={point.seed} n={point.n} d={point.d} k={point.k} "
            f"refresh_prob={point.params.refresh_prob:.4g} failed={trace.failed} "
            f"min_core_size={s['min_core_size']} median_lambda2={s['median_lambda2']}"
        )
        failed += trace.failed
    return 1 if failed else 0


def read_edge_list(path) -> Snapshot:
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: node ids must be integers") from None
    return Snapshot.from_edges(edges)


def cmd_expansion(args):
    try:
        snap = read_edge_list(args.edges)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.edges}: {exc}") from None
    if snap.n < 2:
        raise ConfigError("edge list describes fewer than 2 nodes")
    d = args.d if args.d is not None else max(1, min(snap.degrees()))
    cap = max(max(snap.degrees()), d + 1)
    rec = compute_metrics(snap, DegreeBounds(d, cap), ALL_FLAGS, args.tol)
    print(json.dumps(asdict(rec), indent=1))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="draes", description="RAES / D-RAES overlay simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bootstrap", help="run the bootstrap protocol only")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--c", type=_number, default=2)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--bootstrap-rounds-max", dest="bootstrap_rounds_max", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("run", help="full experiment from a config file")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="with vs without neighbour refresh, same churn")
    _add_overrides(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="cartesian parameter sweep")
    _add_overrides(p)
    p.add_argument("--grid", nargs="+", required=True, metavar="KEY=V1,V2")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--outdir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("expansion", help="metrics for an edge-list file")
    p.add_argument("edges")
    p.add_argument("--d", type=int)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_expansion)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, ParamError, AdversaryConfigError, DegenerateConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
