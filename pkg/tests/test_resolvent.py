import numpy as np
import pytest

from graphbm import catalog
from graphbm.bm1d import interval_dirichlet
from graphbm.calculus import FWData, GraphData, GraphFunction, normalize_data
from graphbm.domain import ball_domain, whole_graph_domain
from graphbm.expoly import ExpPoly
from graphbm.metric_graph import Interior, parse_graph
from graphbm.resolvent import (
    assemble_system,
    boundary_residual_check,
    evaluation_grid,
    exit_from_point,
    exit_problem,
    resolvent_identity_residual,
    semigroup_limit_check,
    solve_resolvent,
    star_closed_form,
)
from graphbm.simulator import shell_kernel
from graphbm.verification import sample_functions


def interval_graph(L=1.0):
    return parse_graph({"vertices": ["a", "b"], "internal_edges": [{"id": "i", "from": "a", "to": "b", "length": L}]})


def one(G):
    return GraphFunction.constant(G, 1.0)


def test_killed_interval_is_dirichlet():
    G = interval_graph(1.5)
    f = GraphFunction({"i": ExpPoly.from_terms([(1.0, 0, 0.0), (0.5, 1, 0.0)])})
    # admissible data needs some diffusion; a negligible c2 makes the ends killing-only
    data = GraphData({v: normalize_data(G, FWData(v, c1_delta=1.0, c2={"i": 1e-300})) for v in "ab"})
    sol = solve_resolvent(G, data, f, 0.7)
    assert abs(sol.vertex_values["a"]) < 1e-12 and abs(sol.vertex_values["b"]) < 1e-12
    ref = interval_dirichlet(f.on("i"), 0.7, 1.5)
    for x in (0.2, 0.75, 1.3):
        assert sol.evaluate(Interior("i", x)) == pytest.approx(ref(x), abs=1e-12)


@pytest.mark.parametrize("alpha", [0.3, 1.0, 5.0])
def test_conservative_cases_give_one_over_alpha(alpha):
    cfg = catalog.reflecting_interval()
    sol = solve_resolvent(cfg.graph, cfg.data, one(cfg.graph), alpha)
    for p in evaluation_grid(cfg.graph):
        assert sol.evaluate(p) == pytest.approx(1 / alpha, rel=1e-12)
    G = catalog.star(2)
    data = GraphData({"v": FWData("v", c2={"e1": 0.5, "e2": 0.5})})
    sol = solve_resolvent(G, data, one(G), alpha)
    for p in evaluation_grid(G):
        assert sol.evaluate(p) == pytest.approx(1 / alpha, rel=1e-12)


def test_elastic_halfline_value():
    G = catalog.star(1)
    data = GraphData({"v": FWData("v", c1_delta=0.5, c2={"e1": 0.5})})
    sol = solve_resolvent(G, data, one(G), 0.5)
    # [c2 * 2 int e^{-x} dx] / (c1 + c2) = 1
    assert sol.vertex_values["v"] == pytest.approx(1.0, rel=1e-14)
    assert 0.5 * sol.vertex_values["v"] < 1


@pytest.mark.parametrize("name", sorted(catalog.STAR_CONFIGS))
def test_star_closed_form(name):
    cfg = catalog.STAR_CONFIGS[name]()
    rng = np.random.default_rng(1)
    for f in sample_functions(cfg.graph, rng, 3):
        for alpha in (0.4, 2.0):
            sol = solve_resolvent(cfg.graph, cfg.data, f, alpha)
            want = star_closed_form(cfg.graph, cfg.data["v"], f, alpha)
            assert sol.vertex_values["v"] == pytest.approx(want, rel=1e-10)


def test_jump_couples_vertices():
    cfg = catalog.three_vertex()
    sys = assemble_system(cfg.graph, cfg.data, one(cfg.graph), 1.0)
    i1, i2 = sys.vertices.index("v1"), sys.vertices.index("v2")
    # v2 jumps onto e1, a half-line at v1
    assert sys.matrix[i2, i1] != 0


@pytest.mark.parametrize("name", ["three_vertex", "interval", "loop_graph", "mixed_star"])
def test_boundary_residuals_and_perturbation(name):
    cfg = catalog.ALL_CONFIGS[name]()
    G = cfg.graph
    f = sample_functions(G, np.random.default_rng(3), 2)[1]
    sol = solve_resolvent(G, cfg.data, f, 1.3)
    assert boundary_residual_check(sol, cfg.data).max_abs < 1e-8
    v = G.vertices[0]
    res = []
    for h in (1e-3, 2e-3):
        vals = dict(sol.vertex_values)
        vals[v] += h
        res.append(boundary_residual_check(sol, cfg.data, vals).residuals[v])
    assert res[1] == pytest.approx(2 * res[0], rel=1e-6)
    assert abs(res[0]) > 1e-6


def test_derivative_at_vertex_by_finite_differences():
    cfg = catalog.three_vertex()
    sol = solve_resolvent(cfg.graph, cfg.data, one(cfg.graph), 0.9)
    h = 1e-6
    # i1 runs v1 -> v2; outward at v1 is the coordinate direction
    fd = (sol.evaluate(Interior("i1", h)) - sol.vertex_values["v1"]) / h
    assert sol.derivative_at_vertex("v1", "i1") == pytest.approx(fd, abs=1e-5)
    fd = (sol.evaluate(Interior("i1", 1.0 - h)) - sol.vertex_values["v2"]) / h
    assert sol.derivative_at_vertex("v2", "i1") == pytest.approx(fd, abs=1e-5)
    assert -sol.derivative("i1", 1.0) == pytest.approx(fd, abs=1e-5)


def test_sub_markov_and_conservation():
    for name, make in catalog.ALL_CONFIGS.items():
        cfg = make()
        G = cfg.graph
        sol = solve_resolvent(G, cfg.data, one(G), 1.0)
        for p in evaluation_grid(G):
            val = sol.evaluate(p)
            assert val <= 1 + 1e-10
            if not any(cfg.data[v].c1 > 0 for v in G.vertices):
                assert val == pytest.approx(1.0, abs=1e-8), name
    cfg = catalog.elastic()
    assert solve_resolvent(cfg.graph, cfg.data, one(cfg.graph), 1.0).vertex_values["v"] < 1


def test_semigroup_limit():
    cfg = catalog.reflecting_interval()
    f = GraphFunction({"i": ExpPoly.from_terms([(1.0, 0, 0.0), (0.5, 2, 0.0)])})
    rep = semigroup_limit_check(cfg.graph, cfg.data, f, alphas=(1e2, 1e3, 1e4))
    assert rep.sup_deviation[-1] < 1e-2
    assert rep.sup_deviation[0] > rep.sup_deviation[-1]


@pytest.mark.parametrize("name", ["mixed_star", "three_vertex", "interval"])
def test_resolvent_identity(name):
    cfg = catalog.ALL_CONFIGS[name]()
    f = sample_functions(cfg.graph, np.random.default_rng(4), 2)[1]
    assert resolvent_identity_residual(cfg.graph, cfg.data, f, 0.5, 2.0) < 1e-6


# -- exit problems --------------------------------------------------------------


def test_walsh_ball_exit_law():
    cfg = catalog.walsh()
    eps = 0.3
    sol = exit_problem(cfg.graph, cfg.data, ball_domain(cfg.graph, "v", eps))
    probs = sol.probabilities["v"]
    for e, w in (("e1", 0.5), ("e2", 0.3), ("e3", 0.2)):
        assert probs[("point", Interior(e, eps))] == pytest.approx(w, abs=1e-14)
    assert sol.mean_time["v"] == pytest.approx(eps**2, rel=1e-12)


@pytest.mark.parametrize("c3", [0.2, 0.5])
def test_sticky_mean_exit_time(c3):
    cfg = catalog.sticky(c3)
    p2 = 1 - c3
    eps = 0.1
    sol = exit_problem(cfg.graph, cfg.data, ball_domain(cfg.graph, "v", eps))
    assert sol.mean_time["v"] == pytest.approx(eps * (p2 * eps + c3) / p2, rel=1e-12)
    if c3 == 0.2:
        assert sol.mean_time["v"] == pytest.approx(0.035, rel=1e-12)


def test_elastic_jump_ball_matches_shell_kernel():
    cfg = catalog.jump_atom()
    G, d = cfg.graph, cfg.data["v"]
    delta = 0.1
    k = shell_kernel(G, d, delta)
    sol = exit_problem(G, cfg.data, ball_domain(G, "v", delta))
    probs = sol.probabilities["v"]
    D = d.p2 + delta * (d.c1 + d.c4.total_mass())
    assert probs[("point", Interior("e1", delta))] == pytest.approx(d.c2["e1"] / D, rel=1e-12)
    assert probs[("killed", "v")] == pytest.approx(k.kill_prob, rel=1e-12)
    assert probs[("point", Interior("e1", 1.0))] == pytest.approx(k.jump_prob, rel=1e-12)
    # with the unnormalized numbers: 0.3 / 0.6516395, 0.02 / 0.6516395, 0.0316395 / 0.6516395
    assert probs[("point", Interior("e1", delta))] == pytest.approx(0.460378, abs=1e-6)
    assert k.kill_prob == pytest.approx(0.030692, abs=1e-6)
    assert k.jump_prob == pytest.approx(0.048554, abs=1e-6)


def test_exit_from_interior_point_interpolates():
    cfg = catalog.interval()
    sol = exit_problem(cfg.graph, cfg.data, whole_graph_domain(cfg.graph))
    probs, t = exit_from_point(cfg.graph, sol, Interior("i", 0.7))
    assert sum(probs.values()) == pytest.approx(1.0, abs=1e-12)
    assert t > 0
