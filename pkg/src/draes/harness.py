"""Experiment orchestration: config, seed streams, run loop, traces, sweeps."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

from .adversary import STRATEGIES, AdversaryConfigError, auto_churn_rate, make_adversary, write_events
from .metrics import ALL_FLAGS, DEFAULT_TOL, compute_metrics
from .protocol import ParamError, ProtocolParams, RoundReport, run_bootstrap, run_maintenance_round

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "round",
    "churn_removed",
    "churn_added",
    "refreshed",
    "edges_added",
    "edges_dropped_adjust",
    "min_deg",
    "max_deg",
    "mean_deg",
    "below_d",
    "max_below_d_streak",
    "lambda2",
    "expansion_lower",
    "expansion_upper",
    "exact_expansion",
    "core_size",
    "core_lambda2",
    "lcc_size",
)

STREAM_TAGS = ("protocol", "adversary", "metrics")


class ConfigError(ValueError):
    pass


class TraceSchemaError(ValueError):
    pass


# ---------------------------------------------------------------- seeds


def stream_seed(master_seed: int, tag: str) -> int:
    """64-bit seed for one named stream, keyed by the tag."""
    h = hashlib.blake2b(str(int(master_seed)).encode(), key=tag.encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


class Streams(NamedTuple):
    protocol: random.Random
    adversary: random.Random
    metrics: random.Random


def derive_streams(master_seed: int) -> Streams:
    return Streams(*(random.Random(stream_seed(master_seed, t)) for t in STREAM_TAGS))


def point_seed(master_seed: int, index: int) -> int:
    h = hashlib.blake2b(f"{int(master_seed)}:{index}".encode(), key=b"sweep", digest_size=8)
    return int.from_bytes(h.digest(), "little")


# ---------------------------------------------------------------- config


@dataclass
class AdversaryConfig:
    strategy: str = "uniform"
    churn_rate: int | str = "auto"
    delta_h: int = 4
    attachments: int = 1
    fringe_window: int | None = None


@dataclass
class OutputConfig:
    csv: str | None = None
    json: str | None = None
    churn_events: str | None = None


@dataclass
class ExperimentConfig:
    n: int
    d: int = 3
    c: float = 2
    k: int = 2
    refresh_prob: float | None = None
    bootstrap_rounds_max: int | None = None
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    rounds: int = 0
    seed: int = 0
    metrics_every: int | None = None
    metrics_start: int = 1
    metrics_flags: tuple = ALL_FLAGS
    tol: float = DEFAULT_TOL
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        try:
            self.params = ProtocolParams(
                self.n, self.d, self.c, self.k, self.refresh_prob, self.bootstrap_rounds_max
            )
        except (ParamError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        self.metrics_flags = tuple(self.metrics_flags)
        bad = set(self.metrics_flags) - set(ALL_FLAGS)
        if bad:
            raise ConfigError(f"unknown metrics flags {sorted(bad)}")
        if self.metrics_every is None:
            self.metrics_every = 1 if self.n <= 4096 else 10
        if not isinstance(self.rounds, int) or self.rounds < 0:
            raise ConfigError("rounds must be a non-negative integer")
        if self.metrics_every < 1 or self.metrics_start < 1:
            raise ConfigError("metrics_every and metrics_start must be >= 1")
        adv = self.adversary
        if adv.strategy not in STRATEGIES:
            raise ConfigError(f"unknown adversary strategy {adv.strategy!r}")
        rate = self.churn_rate
        if not isinstance(rate, int) or rate < 0:
            raise ConfigError(f"churn_rate must be 'auto' or a non-negative integer, got {adv.churn_rate!r}")
        if rate > self.n // 2:
            raise ConfigError(f"churn_rate {rate} exceeds n/2 = {self.n // 2}")
        if adv.delta_h < 1 or not 1 <= adv.attachments <= adv.delta_h:
            raise ConfigError("need delta_h >= 1 and 1 <= attachments <= delta_h")

    @property
    def churn_rate(self) -> int:
        r = self.adversary.churn_rate
        return auto_churn_rate(self.n, self.k) if r == "auto" else r

    def sampled(self, t: int) -> bool:
        """Whether maintenance round number t (1-based) gets metrics."""
        return t >= self.metrics_start and (t - self.metrics_start) % self.metrics_every == 0

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["adversary"] = asdict(self.adversary)
        out["output"] = asdict(self.output)
        out["metrics_flags"] = list(self.metrics_flags)
        out["c"] = self.c if isinstance(self.c, (int, float)) else str(self.c)
        # resolved values, for provenance
        out["resolved"] = {
            "delta_cap": self.params.delta_cap,
            "refresh_prob": self.params.refresh_prob,
            "bootstrap_rounds_max": self.params.bootstrap_rounds_max,
            "churn_rate": self.churn_rate,
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        data.pop("resolved", None)
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "n" not in data:
            raise ConfigError("config needs 'n'")
        try:
            data["adversary"] = AdversaryConfig(**data.get("adversary", {}))
            data["output"] = OutputConfig(**data.get("output", {}))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def with_changes(self, **changes) -> "ExperimentConfig":
        adv = changes.pop("adversary", None)
        cfg = replace(self, **changes)
        if adv is not None:
            cfg = replace(cfg, adversary=replace(self.adversary, **adv))
        return cfg


# ---------------------------------------------------------------- trace


def summarize(reports: list[RoundReport]) -> dict:
    sampled = [r.metrics for r in reports if r.metrics is not None]
    core = [m.core_size for m in sampled if m.core_size is not None]
    lam = [m.lambda2 for m in sampled if m.lambda2 is not None]
    core_lam = [m.core_lambda2 for m in sampled if m.core_lambda2 is not None]
    streaks = [m.max_below_d_streak for m in sampled]
    return {
        "rounds": len(reports),
        "sampled_rounds": len(sampled),
        "min_core_size": min(core, default=None),
        "median_core_size": statistics.median(core) if core else None,
        "min_lambda2": min(lam, default=None),
        "median_lambda2": statistics.median(lam) if lam else None,
        "min_core_lambda2": min(core_lam, default=None),
        "median_core_lambda2": statistics.median(core_lam) if core_lam else None,
        "max_below_d_streak": max(streaks, default=None),
        "rounds_over_cap": [r.round for r in reports if r.phase_outcome.nodes_above_cap_after > 0],
    }


@dataclass
class Trace:
    config: dict
    bootstrap_rounds_used: int
    bootstrap_converged: bool
    bootstrap_metrics: object = None
    reports: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    failure: str | None = None

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def sampled_reports(self):
        return [r for r in self.reports if r.metrics is not None]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "bootstrap": {
                "rounds_used": self.bootstrap_rounds_used,
                "converged": self.bootstrap_converged,
                "metrics": None if self.bootstrap_metrics is None else self.bootstrap_metrics.to_dict(),
            },
            "failure": self.failure,
            "reports": [r.to_dict() for r in self.reports],
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Trace":
        from .metrics import MetricsRecord

        try:
            boot = data["bootstrap"]
            bm = boot.get("metrics")
            trace = cls(
                config=data["config"],
                bootstrap_rounds_used=boot["rounds_used"],
                bootstrap_converged=boot["converged"],
                bootstrap_metrics=None if bm is None else MetricsRecord.from_dict(bm),
                reports=[RoundReport.from_dict(r) for r in data["reports"]],
                summary=data["summary"],
                failure=data.get("failure"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceSchemaError(f"malformed trace: {exc!r}") from None
        rounds = [r.round for r in trace.reports]
        if any(b <= a for a, b in zip(rounds, rounds[1:])):
            raise TraceSchemaError("report rounds are not strictly increasing")
        if summarize(trace.reports) != trace.summary:
            raise TraceSchemaError("stored summary does not match the reports")
        return trace


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_row(report: RoundReport) -> list[str]:
    m, po = report.metrics, report.phase_outcome
    values = {
        "round": report.round,
        "churn_removed": report.churn_removed,
        "churn_added": report.churn_added,
        "refreshed": len(po.refreshed),
        "edges_added": po.edges_added,
        "edges_dropped_adjust": po.edges_dropped_adjust,
    }
    for col in CSV_COLUMNS[6:]:
        values[col] = getattr(m, col)
    return [_csv_cell(values[c]) for c in CSV_COLUMNS]


def write_trace(trace: Trace, csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in trace.sampled_reports():
                w.writerow(csv_row(r))
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(trace.to_dict(), fh, indent=1)
            fh.write("\n")


def load_trace(path) -> Trace:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise TraceSchemaError(f"cannot read trace {path}: {exc}") from None
    return Trace.from_dict(data)


# ---------------------------------------------------------------- runs


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> Trace:
    """Bootstrap with a silent adversary, then ``cfg.rounds`` maintenance rounds.

    The silent period is always ``bootstrap_rounds_max`` rounds long: if the
    protocol converges earlier the graph idles (it is a fixed point) until the
    first maintenance round B+1.  Churn rounds therefore never depend on the
    protocol's random bits.
    """
    params = cfg.params
    streams = derive_streams(cfg.seed)
    metrics_seed = stream_seed(cfg.seed, "metrics") % 2**32
    boot = run_bootstrap(params, streams.protocol)
    g = boot.graph
    trace = Trace(cfg.to_dict(), boot.rounds_used, boot.converged)
    if not boot.converged:
        trace.failure = (
            f"bootstrap did not reach degrees in [{params.d}, {params.delta_cap}] "
            f"within {params.bootstrap_rounds_max} rounds"
        )
    else:
        trace.bootstrap_metrics = compute_metrics(
            g.snapshot(), params, cfg.metrics_flags, cfg.tol, metrics_seed
        )
        g.round = params.bootstrap_rounds_max
        a = cfg.adversary
        adv = make_adversary(
            a.strategy,
            cfg.churn_rate,
            a.delta_h,
            seed=stream_seed(cfg.seed, "adversary"),
            n=params.n,
            attachments=a.attachments,
            fringe_window=a.fringe_window,
        )
        events = []
        for t in range(1, cfg.rounds + 1):
            ev = adv.next_churn(g.round + 1)
            events.append(ev)
            report = run_maintenance_round(g, ev, params, streams.protocol)
            if cfg.sampled(t):
                report.metrics = compute_metrics(
                    g.snapshot(), params, cfg.metrics_flags, cfg.tol, metrics_seed
                )
            trace.reports.append(report)
        if write and cfg.output.churn_events:
            write_events(events, cfg.output.churn_events)
    trace.summary = summarize(trace.reports)
    if write:
        write_trace(trace, cfg.output.csv, cfg.output.json)
    return trace


def churn_sequence(cfg: ExperimentConfig):
    """The churn events ``run_experiment`` would apply, computed stand-alone."""
    a = cfg.adversary
    adv = make_adversary(
        a.strategy,
        cfg.churn_rate,
        a.delta_h,
        seed=stream_seed(cfg.seed, "adversary"),
        n=cfg.n,
        attachments=a.attachments,
        fringe_window=a.fringe_window,
    )
    return adv.generate(cfg.params.bootstrap_rounds_max + 1, cfg.rounds)


def _suffixed(path, suffix):
    if path is None:
        return None
    p = Path(path)
    return str(p.with_name(f"{p.stem}.{suffix}{p.suffix}"))


def run_comparison_norefresh(cfg: ExperimentConfig, write: bool = True) -> tuple[Trace, Trace]:
    """Same seed, same adversary stream; only the refresh probability differs."""
    if cfg.adversary.strategy != "fringe_growth":
        log.warning("comparison run with %s adversary; fringe_growth is the intended one", cfg.adversary.strategy)
    with_refresh = replace(cfg, refresh_prob=cfg.params.refresh_prob)
    without = replace(cfg, refresh_prob=0.0)
    out = cfg.output
    with_refresh.output = OutputConfig(*(_suffixed(p, "refresh") for p in (out.csv, out.json, out.churn_events)))
    without.output = OutputConfig(*(_suffixed(p, "norefresh") for p in (out.csv, out.json, out.churn_events)))
    return run_experiment(with_refresh, write), run_experiment(without, write)


def _run_point(cfg):
    return run_experiment(cfg)


def sweep_points(cfg: ExperimentConfig, grid: dict, repeats: int = 1, outdir=None) -> list[ExperimentConfig]:
    """Cartesian product of ``grid`` values times ``repeats`` seeds.

    Point i gets seed ``point_seed(cfg.seed, i)`` so points are independent
    yet reproducible individually.
    """
    keys = sorted(grid)
    points = []
    combos = list(itertools.product(*(grid[k] for k in keys)))
    for i, (values, rep) in enumerate(itertools.product(combos, range(repeats))):
        changes = dict(zip(keys, values))
        adv = {k[len("adversary."):]: changes.pop(k) for k in list(changes) if k.startswith("adversary.")}
        changes["seed"] = point_seed(cfg.seed, i)
        if outdir is not None:
            stem = Path(outdir) / f"point{i:04d}"
            changes["output"] = OutputConfig(f"{stem}.csv", f"{stem}.json", f"{stem}.churn.jsonl")
        else:
            changes["output"] = OutputConfig()
        try:
            point = cfg.with_changes(adversary=adv or None, **changes)
        except TypeError as exc:
            raise ConfigError(f"bad sweep key: {exc}") from None
        points.append(point)
    return points


def run_sweep(cfg: ExperimentConfig, grid: dict, repeats: int = 1, outdir=None, workers: int | None = None):
    points = sweep_points(cfg, grid, repeats, outdir)
    if outdir is not None:
        Path(outdir).mkdir(parents=True, exist_ok=True)
    if workers == 1 or len(points) <= 1:
        traces = [_run_point(p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_run_point, points))
    return list(zip(points, traces))
