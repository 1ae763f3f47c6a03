"""Dynamic overlay graph: node registry, undirected simple adjacency, snapshots.

Node ids are plain ints.  A run allocates them from a monotonically
increasing counter, so an id also encodes join order.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping


class GraphError(Exception):
    """Invalid mutation of an overlay graph (dead endpoint, reused id, ...)."""


class DegenerateConfigError(ValueError):
    """The alive population is too small for the requested sample."""


@dataclass
class NodeRecord:
    id: int
    join_round: int
    below_d_since: int | None = None


class OverlayGraph:
    """The evolving graph G_t.

    Only one driver should mutate an instance.  ``round`` counts completed
    rounds; nodes added while round ``r`` is executing get ``join_round=r``.
    """

    def __init__(self):
        self.nodes: dict[int, NodeRecord] = {}
        self.adjacency: dict[int, set[int]] = {}
        self.round = 0
        # kept sorted so sampling depends only on the alive set, not on history
        self._alive: list[int] = []
        self._retired: set[int] = set()
        self._next_id = 0

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, u):
        return u in self.nodes

    @property
    def alive(self) -> list[int]:
        return self._alive

    def new_id(self) -> int:
        return self._next_id

    def degree(self, u: int) -> int:
        try:
            return len(self.adjacency[u])
        except KeyError:
            raise GraphError(f"unknown node {u}") from None

    def neighbors(self, u: int) -> set[int]:
        try:
            return self.adjacency[u]
        except KeyError:
            raise GraphError(f"unknown node {u}") from None

    def num_edges(self) -> int:
        return sum(len(a) for a in self.adjacency.values()) // 2

    def edges(self):
        for u in self._alive:
            for v in self.adjacency[u]:
                if u < v:
                    yield u, v

    def add_node(self, u: int, round: int | None = None) -> None:
        if u in self.nodes or u in self._retired:
            raise GraphError(f"node id {u} already used")
        if round is None:
            round = self.round
        self.nodes[u] = NodeRecord(u, round, below_d_since=round)
        self.adjacency[u] = set()
        if not self._alive or u > self._alive[-1]:
            self._alive.append(u)
        else:
            bisect.insort(self._alive, u)
        if isinstance(u, int) and u >= self._next_id:
            self._next_id = u + 1

    def remove_node(self, u: int) -> int:
        if u not in self.nodes:
            raise GraphError(f"cannot remove unknown node {u}")
        nbrs = self.adjacency.pop(u)
        for v in nbrs:
            self.adjacency[v].discard(u)
        del self.nodes[u]
        del self._alive[bisect.bisect_left(self._alive, u)]
        self._retired.add(u)
        return len(nbrs)

    def _check_alive(self, *us):
        for u in us:
            if u not in self.nodes:
                raise GraphError(f"node {u} is not alive")

    def add_edge(self, u: int, v: int) -> bool:
        self._check_alive(u, v)
        if u == v or v in self.adjacency[u]:
            return False
        self.adjacency[u].add(v)
        self.adjacency[v].add(u)
        return True

    def remove_edge(self, u: int, v: int) -> bool:
        self._check_alive(u, v)
        if v not in self.adjacency[u]:
            return False
        self.adjacency[u].discard(v)
        self.adjacency[v].discard(u)
        return True

    def drop_all_edges(self, u: int) -> int:
        self._check_alive(u)
        nbrs = self.adjacency[u]
        for v in nbrs:
            self.adjacency[v].discard(u)
        self.adjacency[u] = set()
        return len(nbrs)

    def update_streaks(self, d: int) -> None:
        """Refresh ``below_d_since`` for every node at a round boundary."""
        r = self.round
        adj = self.adjacency
        for u, rec in self.nodes.items():
            if len(adj[u]) < d:
                if rec.below_d_since is None:
                    rec.below_d_since = r
            else:
                rec.below_d_since = None

    def check_invariants(self, d: int | None = None) -> None:
        """Full scan of symmetry, simplicity, registry and streak consistency."""
        assert set(self.nodes) == set(self.adjacency)
        assert self._alive == sorted(self.nodes)
        for u, nbrs in self.adjacency.items():
            assert u not in nbrs, f"self-loop at {u}"
            for v in nbrs:
                assert v in self.nodes, f"dangling endpoint {v}"
                assert u in self.adjacency[v], f"asymmetric edge {u}-{v}"
        if d is not None:
            for u, rec in self.nodes.items():
                assert (rec.below_d_since is not None) == (len(self.adjacency[u]) < d)

    def snapshot(self) -> "Snapshot":
        return Snapshot(
            round=self.round,
            nodes=tuple(self._alive),
            join_rounds=MappingProxyType({u: r.join_round for u, r in self.nodes.items()}),
            below_d_since=MappingProxyType(
                {u: r.below_d_since for u, r in self.nodes.items() if r.below_d_since is not None}
            ),
            adjacency=MappingProxyType({u: frozenset(a) for u, a in self.adjacency.items()}),
        )

    @classmethod
    def from_snapshot(cls, s: "Snapshot") -> "OverlayGraph":
        """Rebuild a mutable graph.  Retired ids are not known to a snapshot."""
        g = cls()
        g.round = s.round
        for u in s.nodes:
            g.add_node(u, s.join_rounds.get(u, 0))
            g.nodes[u].below_d_since = s.below_d_since.get(u)
        for u, v in s.edges():
            g.add_edge(u, v)
        return g


def sample_uniform(g: OverlayGraph, count: int, exclude, rng) -> list[int]:
    """Draw ``count`` distinct alive ids uniformly, avoiding ``exclude``.

    Rejection-free: each draw picks a rank among the still-available
    positions of the sorted alive list and maps it past the excluded
    positions.  ``rng`` is a ``random.Random``.
    """
    alive = g.alive
    blocked = sorted({bisect.bisect_left(alive, x) for x in exclude if x in g.nodes})
    available = len(alive) - len(blocked)
    if count > available:
        raise DegenerateConfigError(
            f"cannot sample {count} nodes from {available} eligible (population {len(alive)})"
        )
    out = []
    for _ in range(count):
        p = rng.randrange(available)
        for b in blocked:
            if b <= p:
                p += 1
            else:
                break
        out.append(alive[p])
        bisect.insort(blocked, p)
        available -= 1
    return out


@dataclass(frozen=True)
class Snapshot:
    """Immutable view of the graph at a round boundary."""

    round: int
    nodes: tuple[int, ...]
    join_rounds: Mapping[int, int]
    below_d_since: Mapping[int, int]
    adjacency: Mapping[int, frozenset]

    def __len__(self):
        return len(self.nodes)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    def num_edges(self) -> int:
        return sum(len(a) for a in self.adjacency.values()) // 2

    def edges(self):
        for u in self.nodes:
            for v in sorted(self.adjacency[u]):
                if u < v:
                    yield u, v

    def degrees(self) -> list[int]:
        return [len(self.adjacency[u]) for u in self.nodes]

    def induced(self, members: Iterable[int]) -> "Snapshot":
        keep = frozenset(members)
        nodes = tuple(u for u in self.nodes if u in keep)
        return Snapshot(
            round=self.round,
            nodes=nodes,
            join_rounds=MappingProxyType({u: self.join_rounds[u] for u in nodes}),
            below_d_since=MappingProxyType({}),
            adjacency=MappingProxyType({u: self.adjacency[u] & keep for u in nodes}),
        )

    def max_below_d_streak(self) -> int:
        """Longest current run of consecutive boundaries spent below d."""
        if not self.below_d_since:
            return 0
        return max(self.round - s + 1 for s in self.below_d_since.values())

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]], nodes: Iterable[int] = (), round: int = 0):
        adj: dict[int, set] = {u: set() for u in nodes}
        for u, v in edges:
            adj.setdefault(u, set())
            adj.setdefault(v, set())
            if u != v:
                adj[u].add(v)
                adj[v].add(u)
        order = tuple(sorted(adj))
        return cls(
            round=round,
            nodes=order,
            join_rounds=MappingProxyType({u: 0 for u in order}),
            below_d_since=MappingProxyType({}),
            adjacency=MappingProxyType({u: frozenset(adj[u]) for u in order}),
        )
