import random

import pytest

from draes.adversary import ChurnEvent
from draes.graph import DegenerateConfigError, OverlayGraph
from draes.protocol import (
    ChurnContractError,
    ParamError,
    ProtocolParams,
    phase_adjust,
    phase_reconnect,
    phase_refresh,
    run_bootstrap,
    run_maintenance_round,
)


def graph(n, edges=()):
    g = OverlayGraph()
    for u in range(n):
        g.add_node(u, 0)
    for u, v in edges:
        g.add_edge(u, v)
    return g


def cycle(n):
    return [(i, (i + 1) % n) for i in range(n)]


def degrees(g):
    return {u: len(a) for u, a in g.adjacency.items()}


# ---------------------------------------------------------------- params


def test_params_defaults():
    p = ProtocolParams(1024, 3, 2, 2)
    assert p.delta_cap == 6
    assert p.refresh_prob == pytest.approx(1 / 100)
    assert p.bootstrap_rounds_max == 100


def test_params_fractional_c():
    assert ProtocolParams(100, 10, 2.3).delta_cap == 23
    assert ProtocolParams(100, 4, 1.5).delta_cap == 6


@pytest.mark.parametrize(
    "kw",
    [
        dict(n=10, d=0),
        dict(n=10, d=3, c=1),
        dict(n=10, d=3, c=1.2),  # floor(3.6) == 3 == d
        dict(n=7, d=3, c=3),  # cap 9 >= n
        dict(n=10, d=3, refresh_prob=1.5),
        dict(n=10, d=3, k=0),
        dict(n=10, d=3, bootstrap_rounds_max=0),
    ],
)
def test_params_rejected(kw):
    with pytest.raises(ParamError):
        ProtocolParams(**kw)


# ---------------------------------------------------------------- refresh


def test_refresh_p0_noop():
    g = graph(8, cycle(8))
    before = g.snapshot()
    assert phase_refresh(g, ProtocolParams(8, 2, 2, refresh_prob=0.0), random.Random(0)) == set()
    assert g.snapshot() == before


def test_refresh_p1_clears_all():
    g = graph(8, cycle(8))
    out = phase_refresh(g, ProtocolParams(8, 2, 2, refresh_prob=1.0), random.Random(0))
    assert out == set(range(8))
    assert g.num_edges() == 0


def test_refresh_guard():
    # node 5 has degree 1 < d and must not refresh even at p=1
    g = graph(6, cycle(5) + [(5, 0)])
    out = phase_refresh(g, ProtocolParams(6, 2, 2, refresh_prob=1.0), random.Random(0))
    assert 5 not in out
    assert out == {0, 1, 2, 3, 4}


def test_refresh_guard_uses_phase_start_degree():
    # star center 0 has degree 5 > cap 4: never eligible; leaves have degree 1 < d
    g = graph(6, [(0, i) for i in range(1, 6)])
    out = phase_refresh(g, ProtocolParams(6, 2, 2, refresh_prob=1.0), random.Random(0))
    assert out == set()


# ---------------------------------------------------------------- reconnect


def test_reconnect_single_deficit():
    # d=2: cycle nodes have degree 2, node 5 hangs off node 0 with degree 1
    g = graph(6, cycle(5) + [(5, 0)])
    params = ProtocolParams(6, 2, 2)
    out = phase_reconnect(g, params, random.Random(1))
    assert out.edges_added == 1
    assert out.reconnect_requests == 1
    assert g.degree(5) == 2
    g.check_invariants()


def test_reconnect_noop_when_no_deficit():
    g = graph(6, cycle(6))
    before = g.snapshot()
    out = phase_reconnect(g, ProtocolParams(6, 2, 2), random.Random(0))
    assert out.edges_added == 0
    assert g.snapshot() == before


def test_reconnect_from_empty():
    g = graph(100)
    out = phase_reconnect(g, ProtocolParams(100, 3, 2), random.Random(5))
    # every node issues exactly d successful requests
    assert out.edges_added == 300
    assert g.num_edges() == 300
    degs = degrees(g).values()
    assert min(degs) >= 3
    assert sum(degs) / 100 <= 6
    g.check_invariants()


def test_reconnect_degenerate():
    # population too small for d once nodes disappear
    params = ProtocolParams(5, 2, 2)
    g = graph(5)
    for u in (0, 1, 2):
        g.remove_node(u)
    with pytest.raises(DegenerateConfigError):
        phase_reconnect(g, params, random.Random(0))


# ---------------------------------------------------------------- adjust


def test_adjust_exact_drop_count():
    params = ProtocolParams(20, 2, 2)  # cap 4
    g = graph(20, [(0, i) for i in range(1, 7)])  # degree cap + 2
    out = phase_adjust(g, params, random.Random(0))
    assert out.edges_dropped_adjust == 2
    assert g.degree(0) == 4


def test_adjust_noop():
    g = graph(8, cycle(8))
    before = g.snapshot()
    out = phase_adjust(g, ProtocolParams(8, 2, 2), random.Random(0))
    assert out.edges_dropped_adjust == 0
    assert g.snapshot() == before


def test_adjust_star_makes_unlucky_leaves():
    params = ProtocolParams(30, 3, 2)  # cap 6
    g = graph(13, [(0, i) for i in range(1, 13)])  # center degree 2 * cap
    phase_adjust(g, params, random.Random(4))
    assert g.degree(0) == 6
    leaves = [g.degree(i) for i in range(1, 13)]
    assert sorted(leaves) == [0] * 6 + [1] * 6


def test_adjust_clamps_on_shared_edges():
    # two adjacent over-cap nodes; earlier drops may already cover the later one's excess
    params = ProtocolParams(40, 2, 2)  # cap 4
    edges = [(0, 1)] + [(0, i) for i in range(2, 7)] + [(1, i) for i in range(7, 12)]
    for seed in range(50):
        g = graph(40, edges)
        phase_adjust(g, params, random.Random(seed))
        assert max(degrees(g).values()) <= 4
        assert g.degree(1) == 4
        # node 0 acts first; node 1 may then prune the shared edge
        assert g.degree(0) == 4 or (g.degree(0) == 3 and 1 not in g.adjacency[0])


# ---------------------------------------------------------------- bootstrap


def enumerate_n4_d1():
    """All outcomes of one reconnect round on 4 isolated nodes with d=1.

    Independent of the package: walks every branch of the sequential
    uniform choices and returns (probability, degree vector) pairs.
    """
    outcomes = []

    def walk(u, adj, prob):
        if u == 4:
            outcomes.append((prob, [len(a) for a in adj]))
            return
        # every node started isolated, so each owes exactly one request,
        # clamped to zero when it is already adjacent to everybody
        cands = [v for v in range(4) if v != u and v not in adj[u]]
        if not cands:
            walk(u + 1, adj, prob)
            return
        for v in cands:
            nxt = [set(a) for a in adj]
            nxt[u].add(v)
            nxt[v].add(u)
            walk(u + 1, nxt, prob / len(cands))

    walk(0, [set() for _ in range(4)], 1.0)
    return outcomes


def test_bootstrap_n4_terminates_in_one_round():
    outcomes = enumerate_n4_d1()
    assert sum(p for p, _ in outcomes) == pytest.approx(1.0)
    # probability mass of "all degrees in [1, 3]" after the first round
    assert sum(p for p, degs in outcomes if all(1 <= x <= 3 for x in degs)) == pytest.approx(1.0)
    params = ProtocolParams(4, 1, 3)
    for seed in range(200):
        res = run_bootstrap(params, random.Random(seed))
        assert res.converged and res.rounds_used == 1


def test_bootstrap_n1024_within_50_rounds():
    params = ProtocolParams(1024, 3, 2, bootstrap_rounds_max=50)
    ok = sum(run_bootstrap(params, random.Random(s)).converged for s in range(100))
    assert ok >= 95


def test_bootstrap_failure_is_reported():
    params = ProtocolParams(1024, 3, 2, bootstrap_rounds_max=1)
    res = run_bootstrap(params, random.Random(0))
    assert not res.converged
    assert res.rounds_used == 1


def test_bootstrap_result_in_range():
    params = ProtocolParams(300, 3, 2)
    res = run_bootstrap(params, random.Random(2))
    degs = degrees(res.graph).values()
    assert 3 <= min(degs) and max(degs) <= 6
    res.graph.check_invariants(3)


# ---------------------------------------------------------------- maintenance


def booted(n=64, d=3, c=2, seed=0, **kw):
    params = ProtocolParams(n, d, c, **kw)
    res = run_bootstrap(params, random.Random(seed))
    assert res.converged
    return res.graph, params


def test_maintenance_fixed_point():
    g, params = booted(refresh_prob=0.0)
    before = g.snapshot()
    rep = run_maintenance_round(g, ChurnEvent(g.round + 1), params, random.Random(0))
    assert rep.phase_outcome.edges_added == 0
    assert rep.phase_outcome.edges_dropped_adjust == 0
    assert rep.phase_outcome.refreshed == set()
    after = g.snapshot()
    assert after.adjacency == before.adjacency
    assert after.round == before.round + 1


def test_maintenance_replace_one_node():
    g, params = booted(seed=3)
    new = g.new_id()
    ev = ChurnEvent(g.round + 1, removed=(5,), added=(new,), attachments=((new, 9),))
    rep = run_maintenance_round(g, ev, params, random.Random(1))
    assert rep.churn_removed == rep.churn_added == 1
    assert rep.phase_outcome.nodes_above_cap_after == 0
    assert max(degrees(g).values()) <= params.delta_cap
    assert len(g) == params.n
    assert 5 not in g and new in g
    # the arrival issued its reconnection requests this round; only pruning can undercut it
    assert g.degree(new) >= params.d or rep.phase_outcome.unlucky > 0
    g.check_invariants(params.d)


def test_maintenance_bad_churn():
    g, params = booted()
    r = g.round + 1
    bad = [
        ChurnEvent(r, removed=(10_000,), added=(g.new_id(),), attachments=((g.new_id(), 1),)),
        ChurnEvent(r, removed=(1,), added=(2,), attachments=((2, 3),)),
        ChurnEvent(r, removed=(1,), added=(g.new_id(),), attachments=()),
        ChurnEvent(r, removed=(1,), added=(g.new_id(),), attachments=((g.new_id(), 1),)),
        ChurnEvent(r + 5),
    ]
    for ev in bad:
        with pytest.raises(ChurnContractError):
            run_maintenance_round(g, ev, params, random.Random(0))


def test_long_run_cap_holds():
    from draes.adversary import auto_churn_rate, make_adversary

    n = 1024
    params = ProtocolParams(n, 3, 2, 2)
    res = run_bootstrap(params, random.Random(11))
    g = res.graph
    rate = auto_churn_rate(n, 2)
    assert rate == 10
    adv = make_adversary("uniform", rate, 4, seed=5, n=n)
    rng = random.Random(12)
    for _ in range(500):
        rep = run_maintenance_round(g, adv.next_churn(g.round + 1), params, rng)
        assert rep.phase_outcome.nodes_above_cap_after == 0
        assert max(len(a) for a in g.adjacency.values()) <= 6
        assert len(g) == n
