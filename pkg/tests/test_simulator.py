import math

import numpy as np
import pytest

from graphbm import catalog
from graphbm.calculus import FWData, GraphData
from graphbm.domain import ball_domain, whole_graph_domain
from graphbm.metric_graph import GraphValidationError, Interior, Vertex
from graphbm.resolvent import exit_from_point, exit_problem
from graphbm.rng import CounterRng
from graphbm.simulator import (
    BATCH_HEADER,
    KIND_KILLED,
    batch_rows,
    build_simulation,
    revive,
    shell_kernel,
    simulate,
    simulate_until_exit,
)

N = 50_000


def within(mean, se, target, k=3.0):
    return abs(mean - target) <= k * se


def test_walsh_shell_kernel_is_exact():
    cfg = catalog.walsh()
    for delta in (0.01, 0.1, 0.5):
        k = shell_kernel(cfg.graph, cfg.data["v"], delta)
        assert k.edge_probs == pytest.approx((0.5, 0.3, 0.2), abs=1e-15)
        assert k.mean_time == pytest.approx(delta**2, rel=1e-14)


def test_sticky_shell_mean_time():
    cfg = catalog.sticky(0.2)
    assert shell_kernel(cfg.graph, cfg.data["v"], 0.1).mean_time == pytest.approx(0.035, rel=1e-13)


def test_trap_kernel():
    G = catalog.star(1)
    k = shell_kernel(G, FWData("v", c3=1.0), 0.1)
    assert k.is_trap and math.isinf(k.mean_time)


def test_shell_radius_checks():
    cfg = catalog.jump_atom()
    with pytest.raises(GraphValidationError):
        shell_kernel(cfg.graph, cfg.data["v"], 1.0)  # reaches the atom
    with pytest.raises(GraphValidationError):
        shell_kernel(cfg.graph, cfg.data["v"], 0.0)


def test_reflecting_halfline_mean_exit_time():
    G = catalog.star(1)
    data = GraphData({"v": FWData("v", c2={"e1": 1.0})})
    sim = build_simulation(G, data, ball_domain(G, "v", 0.1), 0.01)
    b = simulate(sim, Vertex("v"), N, seed=1)
    t = b.mean_time
    assert within(t.mean(), t.std(ddof=1) / math.sqrt(N), 0.01)
    assert np.all(b.x == 0.1)


@pytest.mark.parametrize("delta", [0.3 / 10, 0.3 / 50])
def test_walsh_frequencies_do_not_depend_on_delta(delta):
    cfg = catalog.walsh()
    sim = build_simulation(cfg.graph, cfg.data, ball_domain(cfg.graph, "v", 0.3), delta)
    b = simulate(sim, Vertex("v"), N, seed=2)
    for j, p in enumerate((0.5, 0.3, 0.2)):
        freq = np.mean(b.edge == j)
        assert within(freq, math.sqrt(p * (1 - p) / N), p)
    t = b.mean_time
    assert within(t.mean(), t.std(ddof=1) / math.sqrt(N), 0.09)


def test_killing_frequency_matches_exit_problem():
    G = catalog.star(2)
    data = GraphData({"v": FWData("v", c1_delta=0.9, c2={"e1": 0.05, "e2": 0.05})})
    dom = ball_domain(G, "v", 0.2)
    want = exit_problem(G, data, dom).probabilities["v"][("killed", "v")]
    b = simulate(build_simulation(G, data, dom, 0.02), Vertex("v"), N, seed=3)
    freq = np.mean(b.kind == KIND_KILLED)
    assert within(freq, math.sqrt(want * (1 - want) / N), want)


def test_start_inside_an_edge():
    cfg = catalog.interval()
    dom = whole_graph_domain(cfg.graph)
    sol = exit_problem(cfg.graph, cfg.data, dom)
    sim = build_simulation(cfg.graph, cfg.data, dom)
    b = simulate(sim, Interior("i", 0.7), 20_000, seed=4)
    # no exit points: everything ends killed, at a or at b
    assert np.all(b.kind == KIND_KILLED)
    probs, t = exit_from_point(cfg.graph, sol, Interior("i", 0.7))
    p_a = probs[("killed", "a")]
    freq = np.mean(b.vertex == cfg.graph.vertices.index("a"))
    assert within(freq, math.sqrt(p_a * (1 - p_a) / 20_000), p_a)
    assert within(b.mean_time.mean(), b.mean_time.std(ddof=1) / math.sqrt(20_000), t)


def test_results_do_not_depend_on_chunking():
    cfg = catalog.three_vertex()
    sim = build_simulation(cfg.graph, cfg.data, whole_graph_domain(cfg.graph, 2.0))
    a = simulate(sim, Vertex("v2"), 3000, seed=5, chunk=3000)
    b = simulate(sim, Vertex("v2"), 3000, seed=5, chunk=700)
    for name in ("kind", "vertex", "edge", "x", "mean_time", "steps"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = simulate(sim, Vertex("v2"), 3000, seed=6, chunk=3000)
    assert not np.array_equal(a.mean_time, c.mean_time)


def test_single_path_wrapper_matches_batch():
    cfg = catalog.mixed_star()
    dom = ball_domain(cfg.graph, "v", 0.2)
    b = simulate(build_simulation(cfg.graph, cfg.data, dom), Vertex("v"), 5, seed=7)
    rec = simulate_until_exit(cfg.graph, cfg.data, Vertex("v"), dom, CounterRng(7), path=3)
    assert rec == b.records()[3]


def test_revival_counts_are_geometric():
    cfg = catalog.elastic()
    G = cfg.graph
    sim = build_simulation(G, cfg.data, ball_domain(G, "v", 0.5))
    base = simulate(sim, Vertex("v"), N, seed=8)
    p = 1 - np.mean(base.kind == KIND_KILLED)
    rev = revive(sim, base, [(Vertex("v"), 1.0)], seed=8, stream=1)
    assert not np.any(rev.kind == KIND_KILLED)
    for n in range(4):
        want = (1 - p) ** n * p
        freq = np.mean(rev.revivals == n)
        assert within(freq, math.sqrt(want * (1 - want) / N) + 1e-12, want, k=4)


def test_batch_rows_format():
    cfg = catalog.elastic()
    sim = build_simulation(cfg.graph, cfg.data, ball_domain(cfg.graph, "v", 0.2))
    b = simulate(sim, Vertex("v"), 200, seed=9)
    rows = list(batch_rows(b))
    assert len(BATCH_HEADER) == 6 and len(rows) == 200
    kinds = {r[1] for r in rows}
    assert kinds == {"killed", "exit"}
    for r in rows:
        if r[1] == "killed":
            assert r[2] == "v" and r[3] is None
        else:
            assert r[2] in ("e1", "e2") and r[3] == pytest.approx(0.2)
