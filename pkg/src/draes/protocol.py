"""RAES bootstrap and D-RAES maintenance phases.

Every phase fixes its actor set from the state at phase start and then lets
the actors move one at a time in ascending id order.  This sequentialises the
simultaneous moves of the synchronous model while each actor still samples
uniformly at the moment it acts.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .graph import DegenerateConfigError, GraphError, OverlayGraph, sample_uniform


class ParamError(ValueError):
    pass


class ChurnContractError(RuntimeError):
    """The adversary emitted an event that does not fit the current graph."""


def log2_ceil(n: int) -> int:
    return max(1, math.ceil(math.log2(n)))


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    d: int
    c: float | Fraction = 2
    k: int = 2
    refresh_prob: float | None = None
    bootstrap_rounds_max: int | None = None

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 2:
            raise ParamError(f"n must be an integer >= 2, got {self.n!r}")
        if not isinstance(self.d, int) or not 1 <= self.d <= self.n - 1:
            raise ParamError(f"d must be an integer in [1, n-1], got {self.d!r}")
        if Fraction(str(self.c)) <= 1:
            raise ParamError(f"c must be > 1, got {self.c!r}")
        if not isinstance(self.k, int) or self.k < 1:
            raise ParamError(f"k must be an integer >= 1, got {self.k!r}")
        if not self.d < self.delta_cap < self.n:
            raise ParamError(
                f"need d < floor(c*d) < n, got d={self.d}, cap={self.delta_cap}, n={self.n}"
            )
        if self.refresh_prob is None:
            object.__setattr__(self, "refresh_prob", 1.0 / log2_ceil(self.n) ** self.k)
        if not 0.0 <= self.refresh_prob <= 1.0:
            raise ParamError(f"refresh_prob must lie in [0, 1], got {self.refresh_prob!r}")
        if self.bootstrap_rounds_max is None:
            object.__setattr__(self, "bootstrap_rounds_max", 10 * log2_ceil(self.n))
        if self.bootstrap_rounds_max < 1:
            raise ParamError("bootstrap_rounds_max must be >= 1")

    @property
    def delta_cap(self) -> int:
        # Fraction(str(.)) keeps e.g. c=2.3, d=10 at 23 instead of 22
        return math.floor(Fraction(str(self.c)) * self.d)

    def replace(self, **changes) -> "ProtocolParams":
        kw = asdict(self)
        kw.update(changes)
        return ProtocolParams(**kw)


@dataclass
class PhaseOutcome:
    refreshed: set[int] = field(default_factory=set)
    reconnect_requests: int = 0
    edges_added: int = 0
    edges_dropped_adjust: int = 0
    nodes_below_d_after: int = 0
    nodes_above_cap_after: int = 0
    # nodes that sat at degree >= d after reconnection but were pushed below d by pruning
    unlucky: int = 0

    def to_dict(self):
        out = asdict(self)
        out["refreshed"] = sorted(self.refreshed)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["refreshed"] = set(data.get("refreshed", ()))
        return cls(**data)


@dataclass
class RoundReport:
    round: int
    churn_removed: int
    churn_added: int
    phase_outcome: PhaseOutcome
    metrics: object = None  # metrics.MetricsRecord when sampled

    def to_dict(self):
        return {
            "round": self.round,
            "churn_removed": self.churn_removed,
            "churn_added": self.churn_added,
            "phase_outcome": self.phase_outcome.to_dict(),
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        from .metrics import MetricsRecord

        m = data.get("metrics")
        return cls(
            round=data["round"],
            churn_removed=data["churn_removed"],
            churn_added=data["churn_added"],
            phase_outcome=PhaseOutcome.from_dict(data["phase_outcome"]),
            metrics=None if m is None else MetricsRecord.from_dict(m),
        )


def phase_refresh(g: OverlayGraph, params: ProtocolParams, rng) -> set[int]:
    p = params.refresh_prob
    if p <= 0.0:
        return set()
    lo, hi = params.d, params.delta_cap
    adj = g.adjacency
    eligible = [u for u in g.alive if lo <= len(adj[u]) <= hi]
    chosen = [u for u in eligible if rng.random() < p]
    for u in chosen:
        g.drop_all_edges(u)
    return set(chosen)


def phase_reconnect(g: OverlayGraph, params: ProtocolParams, rng, outcome=None) -> PhaseOutcome:
    out = outcome if outcome is not None else PhaseOutcome()
    d = params.d
    if len(g) < d + 1:
        raise DegenerateConfigError(f"population {len(g)} cannot support degree {d}")
    adj = g.adjacency
    deficits = [(u, d - len(adj[u])) for u in g.alive if len(adj[u]) < d]
    n = len(g)
    for u, need in deficits:
        out.reconnect_requests += need
        nbrs = adj[u]
        # a node already adjacent to everyone has degree n-1 >= d; nothing left to ask
        need = min(need, n - 1 - len(nbrs))
        picks = sample_uniform(g, need, nbrs | {u}, rng)
        for v in picks:
            nbrs.add(v)
            adj[v].add(u)
        out.edges_added += len(picks)
    return out


def phase_adjust(g: OverlayGraph, params: ProtocolParams, rng, outcome=None) -> PhaseOutcome:
    out = outcome if outcome is not None else PhaseOutcome()
    cap = params.delta_cap
    adj = g.adjacency
    over = [(u, len(adj[u])) for u in g.alive if len(adj[u]) > cap]
    for u, start in over:
        cur = len(adj[u])
        drop = min(start - cap, cur - cap, cur)
        if drop <= 0:
            continue
        for v in rng.sample(sorted(adj[u]), drop):
            adj[u].discard(v)
            adj[v].discard(u)
        out.edges_dropped_adjust += drop
    return out


def _finish_counts(g: OverlayGraph, params: ProtocolParams, out: PhaseOutcome) -> None:
    d, cap = params.d, params.delta_cap
    below = above = 0
    for a in g.adjacency.values():
        k = len(a)
        if k < d:
            below += 1
        elif k > cap:
            above += 1
    out.nodes_below_d_after = below
    out.nodes_above_cap_after = above


def raes_round(g: OverlayGraph, params: ProtocolParams, rng) -> PhaseOutcome:
    """One round of the static protocol: reconnect, then adjust."""
    out = phase_reconnect(g, params, rng)
    _adjust_tracking_unlucky(g, params, rng, out)
    g.round += 1
    g.update_streaks(params.d)
    _finish_counts(g, params, out)
    return out


def _adjust_tracking_unlucky(g, params, rng, out):
    d = params.d
    adj = g.adjacency
    ok_before = {u for u in g.alive if len(adj[u]) >= d}
    phase_adjust(g, params, rng, out)
    out.unlucky = sum(1 for u in ok_before if len(adj[u]) < d)


@dataclass
class BootstrapResult:
    graph: OverlayGraph
    rounds_used: int
    converged: bool
    outcomes: list = field(default_factory=list)


def all_in_range(g: OverlayGraph, params: ProtocolParams) -> bool:
    lo, hi = params.d, params.delta_cap
    return all(lo <= len(a) <= hi for a in g.adjacency.values())


def run_bootstrap(params: ProtocolParams, rng) -> BootstrapResult:
    """Build the initial overlay from n isolated nodes.

    Stops as soon as every degree lies in [d, cap].  Running out of
    ``bootstrap_rounds_max`` rounds is reported via ``converged=False``.
    """
    g = OverlayGraph()
    for u in range(params.n):
        g.add_node(u, 0)
    outcomes = []
    while g.round < params.bootstrap_rounds_max:
        outcomes.append(raes_round(g, params, rng))
        if all_in_range(g, params):
            return BootstrapResult(g, g.round, True, outcomes)
    return BootstrapResult(g, g.round, False, outcomes)


def apply_churn(g: OverlayGraph, churn) -> None:
    r = g.round + 1
    if churn.round != r:
        raise ChurnContractError(f"churn event for round {churn.round} applied at round {r}")
    removed, added = set(churn.removed), set(churn.added)
    if len(removed) != len(added):
        raise ChurnContractError(f"round {r}: {len(removed)} departures vs {len(added)} arrivals")
    for u in removed:
        if u not in g:
            raise ChurnContractError(f"round {r}: departure of unknown node {u}")
    for u, host in churn.attachments:
        if u not in added:
            raise ChurnContractError(f"round {r}: attachment for non-arrival {u}")
        if host not in g or host in removed:
            raise ChurnContractError(f"round {r}: attachment host {host} is not a survivor")
    attached = {u for u, _ in churn.attachments}
    if attached != added:
        raise ChurnContractError(f"round {r}: arrivals without attachment {sorted(added - attached)}")
    for u in sorted(removed):
        g.remove_node(u)
    try:
        for u in sorted(added):
            g.add_node(u, r)
    except GraphError as exc:
        raise ChurnContractError(f"round {r}: {exc}") from None
    for u, host in churn.attachments:
        g.add_edge(u, host)


def run_maintenance_round(g: OverlayGraph, churn, params: ProtocolParams, rng) -> RoundReport:
    """Churn, then refresh / reconnect / adjust, then close the round."""
    apply_churn(g, churn)
    refreshed = phase_refresh(g, params, rng)
    out = phase_reconnect(g, params, rng, PhaseOutcome(refreshed=refreshed))
    _adjust_tracking_unlucky(g, params, rng, out)
    g.round += 1
    g.update_streaks(params.d)
    _finish_counts(g, params, out)
    return RoundReport(g.round, len(churn.removed), len(churn.added), out)
