"""Snapshot metrics: degrees, connectivity, d-core, spectral gap, edge expansion."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph

from .graph import Snapshot

EXACT_MAX_N = 20
DENSE_MAX_N = 64
DEFAULT_TOL = 1e-8
MAX_ITER = 100_000


class MetricsInputError(ValueError):
    pass


class SpectralConvergenceError(RuntimeError):
    def __init__(self, msg, estimate, residual):
        super().__init__(f"{msg} (estimate={estimate}, residual={residual})")
        self.estimate = estimate
        self.residual = residual


class DegreeBounds(NamedTuple):
    """Stand-in for ProtocolParams when only the degree window is known."""

    d: int
    delta_cap: int


@dataclass
class MetricsRecord:
    round: int
    n_alive: int
    min_deg: int
    max_deg: int
    mean_deg: float
    below_d: int
    above_cap: int
    max_below_d_streak: int
    lambda2: float | None = None
    expansion_lower: float | None = None
    expansion_upper: float | None = None
    exact_expansion: float | None = None
    core_size: int | None = None
    core_lambda2: float | None = None
    lcc_size: int | None = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown metrics fields {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class CoreSubgraph:
    members: frozenset
    snapshot: Snapshot

    def __len__(self):
        return len(self.members)


def degree_stats(s: Snapshot, params):
    d, cap = params.d, params.delta_cap
    degs = s.degrees()
    if not degs:
        return 0, 0, 0.0, 0, 0
    return (
        min(degs),
        max(degs),
        sum(degs) / len(degs),
        sum(1 for x in degs if x < d),
        sum(1 for x in degs if x > cap),
    )


def components(s: Snapshot) -> list[list[int]]:
    seen = set()
    comps = []
    adj = s.adjacency
    for root in s.nodes:
        if root in seen:
            continue
        seen.add(root)
        comp = [root]
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    comp.append(v)
                    queue.append(v)
        comps.append(comp)
    return comps


def largest_component(s: Snapshot) -> int:
    return max((len(c) for c in components(s)), default=0)


def d_core(s: Snapshot, d: int) -> CoreSubgraph:
    if d < 1:
        raise MetricsInputError("core order must be >= 1")
    adj = s.adjacency
    deg = {u: len(adj[u]) for u in s.nodes}
    removed = set()
    queue = deque(u for u in s.nodes if deg[u] < d)
    removed.update(queue)
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in removed:
                deg[v] -= 1
                if deg[v] < d:
                    removed.add(v)
                    queue.append(v)
    members = frozenset(u for u in s.nodes if u not in removed)
    return CoreSubgraph(members, s.induced(members))


def exact_edge_expansion(s: Snapshot) -> float:
    """min |boundary(S)| / |S| over nonempty S with |S| <= n/2, by enumeration."""
    n = s.n
    if n < 2:
        raise MetricsInputError("edge expansion needs at least 2 nodes")
    if n > EXACT_MAX_N:
        raise MetricsInputError(f"exact expansion refused for n={n} > {EXACT_MAX_N}")
    index = {u: i for i, u in enumerate(s.nodes)}
    masks = np.arange(1, 1 << n, dtype=np.int64)
    size = np.zeros(masks.shape, dtype=np.int64)
    for i in range(n):
        size += (masks >> i) & 1
    keep = size <= n // 2
    masks, size = masks[keep], size[keep]
    boundary = np.zeros(masks.shape, dtype=np.int64)
    for u, v in s.edges():
        boundary += ((masks >> index[u]) ^ (masks >> index[v])) & 1
    # compare b1/s1 < b2/s2 exactly by picking min over sizes separately
    best = math.inf
    for k in range(1, n // 2 + 1):
        sel = size == k
        if sel.any():
            best = min(best, int(boundary[sel].min()) / k)
    return float(best)


def adjacency_matrix(s: Snapshot) -> sp.csr_matrix:
    index = {u: i for i, u in enumerate(s.nodes)}
    adj = s.adjacency
    degs = [len(adj[u]) for u in s.nodes]
    cols = np.fromiter((index[v] for u in s.nodes for v in adj[u]), dtype=np.int64, count=sum(degs))
    rows = np.repeat(np.arange(s.n), degs)
    return sp.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(s.n, s.n))


def lambda2(s: Snapshot, tol: float = DEFAULT_TOL, seed: int = 0) -> float:
    """Second-smallest eigenvalue of I - D^-1/2 A D^-1/2.

    Isolated nodes get a zero row, i.e. they are their own eigenvalue-0
    component.  More than one component means lambda2 = 0, returned exactly.
    For a connected graph the kernel vector sqrt(deg) is deflated and the
    largest eigenvalue of the deflated normalized adjacency, which is
    1 - lambda2, is found by Lanczos (dense solve for tiny graphs).
    """
    n = s.n
    if n < 2:
        raise MetricsInputError("lambda2 needs at least 2 nodes")
    A = adjacency_matrix(s)
    ncomp, _ = csgraph.connected_components(A, directed=False)
    if ncomp > 1:
        return 0.0
    deg = np.asarray(A.sum(axis=1)).ravel()
    Dm = sp.diags(1.0 / np.sqrt(deg))
    N = (Dm @ A @ Dm).tocsr()
    if n <= DENSE_MAX_N:
        ev = np.linalg.eigvalsh(np.eye(n) - N.toarray())
        return float(min(2.0, max(0.0, ev[1])))

    k0 = np.sqrt(deg)
    k0 /= np.linalg.norm(k0)

    def matvec(x):
        x = x.ravel()
        return N.dot(x) - (2.0 * k0.dot(x)) * k0

    op = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    start = np.random.default_rng(seed).standard_normal(n)
    try:
        w, vec = spla.eigsh(op, k=1, which="LA", v0=start, tol=tol / 4, ncv=min(n - 1, 20), maxiter=MAX_ITER)
    except spla.ArpackNoConvergence as exc:
        est = float(1.0 - exc.eigenvalues[0]) if len(exc.eigenvalues) else float("nan")
        raise SpectralConvergenceError("lambda2 did not converge", est, float("nan")) from None
    mu = float(w[0])
    x = vec[:, 0]
    residual = float(np.linalg.norm(matvec(x) - mu * x))
    # eigenvalue error of a symmetric problem is bounded by the residual norm
    if residual > tol:
        raise SpectralConvergenceError("lambda2 residual above tolerance", 1.0 - mu, residual)
    return float(min(2.0, max(0.0, 1.0 - mu)))


def cheeger_bounds(lam2: float, min_deg: int, max_deg: int) -> tuple[float, float]:
    """Edge-expansion bounds implied by the discrete Cheeger inequality.

    lam2/2 <= conductance <= sqrt(2*lam2), and degrees in [min_deg, max_deg]
    turn conductance into edge expansion.
    """
    if not 0.0 <= lam2 <= 2.0:
        raise MetricsInputError(f"lambda2 must lie in [0, 2], got {lam2}")
    if not 1 <= min_deg <= max_deg:
        raise MetricsInputError(f"need 1 <= min_deg <= max_deg, got {min_deg}, {max_deg}")
    return min_deg * lam2 / 2.0, max_deg * math.sqrt(2.0 * lam2)


def core_report(s: Snapshot, params, tol: float = DEFAULT_TOL, seed: int = 0) -> tuple[int, float]:
    core = d_core(s, params.d)
    if len(core) < 2:
        return len(core), 0.0
    return len(core), lambda2(core.snapshot, tol, seed)


ALL_FLAGS = ("spectral", "exact", "core", "lcc")


def compute_metrics(s: Snapshot, params, flags=ALL_FLAGS, tol=DEFAULT_TOL, seed=0) -> MetricsRecord:
    mn, mx, mean, below, above = degree_stats(s, params)
    rec = MetricsRecord(
        round=s.round,
        n_alive=s.n,
        min_deg=mn,
        max_deg=mx,
        mean_deg=mean,
        below_d=below,
        above_cap=above,
        max_below_d_streak=s.max_below_d_streak(),
    )
    flags = set(flags)
    if "spectral" in flags and s.n >= 2:
        rec.lambda2 = lambda2(s, tol, seed)
        if mn >= 1:
            rec.expansion_lower, rec.expansion_upper = cheeger_bounds(rec.lambda2, mn, mx)
        else:
            # an isolated node makes the true expansion 0
            rec.expansion_lower, rec.expansion_upper = 0.0, 0.0
    if "exact" in flags and 2 <= s.n <= EXACT_MAX_N:
        rec.exact_expansion = exact_edge_expansion(s)
    if "core" in flags:
        if rec.lambda2 is not None and mn >= params.d:
            # the d-core is the whole graph
            rec.core_size, rec.core_lambda2 = s.n, rec.lambda2
        else:
            rec.core_size, rec.core_lambda2 = core_report(s, params, tol, seed)
    if "lcc" in flags:
        rec.lcc_size = largest_component(s)
    return rec
