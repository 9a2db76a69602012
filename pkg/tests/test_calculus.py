import math

import numpy as np
import pytest
from scipy.integrate import quad

from graphbm import catalog
from graphbm.calculus import (
    Density,
    FWData,
    GraphData,
    GraphFunction,
    JumpMeasure,
    boundary_residual,
    check_data,
    data_to_dict,
    derivative_along,
    graph_data_to_list,
    jump_integral,
    normalization_integral,
    normalization_value,
    normalize_data,
    parse_data,
    parse_function,
    parse_graph_data,
    revive_data,
    split_data,
)
from graphbm.expoly import ExpPoly
from graphbm.metric_graph import GraphValidationError, Interior, Vertex, insert_vertex, parse_graph


def interval(L=1.0):
    return parse_graph({"vertices": ["a", "b"], "internal_edges": [{"id": "i", "from": "a", "to": "b", "length": L}]})


# -- ExpPoly ----------------------------------------------------------------

F = ExpPoly.from_terms([(1.5, 0, 0.0), (-0.7, 2, 1.3), (0.4, 1, 0.5)])


def test_expoly_derivative_matches_finite_differences():
    x, h = 0.8, 1e-5
    assert F.derivative()(x) == pytest.approx((F(x + h) - F(x - h)) / (2 * h), rel=1e-8)
    assert F.derivative(2)(x) == pytest.approx((F(x + h) - 2 * F(x) + F(x - h)) / h**2, rel=1e-4)


def test_expoly_integral_matches_quadrature():
    assert F.integrate(0.2, 3.1) == pytest.approx(quad(F, 0.2, 3.1)[0], rel=1e-12)
    G = ExpPoly.from_terms([(2.0, 3, 0.7), (-1.0, 0, 2.0)])
    assert G.integrate(0.0, math.inf) == pytest.approx(quad(G, 0, math.inf)[0], rel=1e-10)


def test_expoly_reflect_and_shift():
    for x in (0.0, 0.3, 1.7):
        assert F.reflect(2.0)(x) == pytest.approx(F(2.0 - x), rel=1e-12)
        assert F.shift(0.6)(x) == pytest.approx(F(x + 0.6), rel=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 0.845])  # 0.845 = 1.3**2 / 2 is resonant
def test_particular_resolvent_solves_ode(alpha):
    p = F.particular_resolvent(alpha)
    for x in (0.0, 0.4, 2.5):
        assert 0.5 * p.derivative(2)(x) - alpha * p(x) == pytest.approx(-F(x), abs=1e-12)


def test_expoly_terms_round_trip():
    assert ExpPoly.from_terms(F.to_terms()).to_terms() == F.to_terms()


# -- derivatives and residuals -----------------------------------------------


def test_outward_derivative_signs():
    G = interval(2.0)
    f = GraphFunction({"i": ExpPoly.term(1.0, 1)})  # f = x
    assert derivative_along(G, f, "a", "i") == 1.0
    assert derivative_along(G, f, "b", "i") == -1.0
    H = catalog.star(1)
    g = GraphFunction({"e1": ExpPoly.term(1.0, 0, 0.7)})
    assert derivative_along(H, g, "v", "e1") == pytest.approx(-0.7)


def test_walsh_residual_vanishes_for_balanced_slopes():
    G = catalog.star(3)
    d = FWData("v", c2={"e1": 0.5, "e2": 0.3, "e3": 0.2})

    def linear(slopes):
        return GraphFunction({e: ExpPoly.from_terms([(1.0, 0, 0.0), (s, 1, 0.0)]) for e, s in slopes.items()})

    assert boundary_residual(G, linear({"e1": 0.6, "e2": -0.5, "e3": -0.75}), d) == pytest.approx(0.0, abs=1e-15)
    # unbalanced slopes leave -(0.3 - 0.3 - 0.3)
    assert boundary_residual(G, linear({"e1": 0.6, "e2": -1.0, "e3": -1.5}), d) == pytest.approx(0.3, abs=1e-15)


def test_killing_residual_and_neumann_case():
    G = catalog.star(1)
    f = GraphFunction({"e1": ExpPoly.constant(0.2)})
    assert boundary_residual(G, f, FWData("v", c1_delta=1.0)) == pytest.approx(0.2)
    assert boundary_residual(G, f, FWData("v", c2={"e1": 1.0})) == 0.0


# -- jump integrals ------------------------------------------------------------


def test_atom_at_distance_one():
    G = catalog.star(1)
    m = JumpMeasure(((Interior("e1", 1.0), 0.25),))
    assert normalization_integral(G, "v", m) == pytest.approx(0.25 * (1 - math.exp(-1)), rel=1e-15)
    assert normalization_integral(G, "v", JumpMeasure()) == 0.0


def test_density_closed_form():
    G = catalog.star(1)
    m = JumpMeasure((), (Density("e1", (1.0, 2.0), (1.0,)),))
    # int_1^2 (1 - e^{-x}) dx = 1 - (e^{-1} - e^{-2})
    want = 1.0 - (math.exp(-1) - math.exp(-2))
    assert normalization_integral(G, "v", m) == pytest.approx(want, rel=1e-14)
    assert want == pytest.approx(0.7674558, abs=1e-7)


def test_density_across_a_bend_uses_graph_distance():
    # on the 5-edge of the double edge graph, distance from v1 bends at the far end
    G = catalog.double_edge()
    m = JumpMeasure((), (Density("i1", (0.0, 10.0), (0.1,)),))
    num = quad(lambda x: 0.1 * (1 - math.exp(-min(x, 15.0 - x))), 0, 10, points=[7.5])[0]
    assert normalization_integral(G, "v1", m) == pytest.approx(num, rel=1e-10)


def test_generic_callable_integrand():
    G = catalog.star(2)
    m = JumpMeasure(((Interior("e1", 0.5), 0.3),), (Density("e2", (1.0, 2.0), (0.5,)),))
    f = GraphFunction({"e1": ExpPoly.term(1.0, 1), "e2": ExpPoly.term(2.0, 2)})
    via_function = jump_integral(G, f, "v", m)
    via_callable = jump_integral(G, lambda p: f.value(G, p), "v", m)
    assert via_function == pytest.approx(via_callable, rel=1e-10)
    assert via_function == pytest.approx(0.3 * 0.5 + 0.5 * 2 * (8 - 1) / 3, rel=1e-12)


# -- normalization and revival --------------------------------------------------


def test_normalize_examples():
    G = catalog.star(2)
    d = normalize_data(catalog.star(1), FWData("v", c1_delta=1.0, c2={"e1": 1.0}))
    assert (d.c1_delta, d.c2["e1"]) == (0.5, 0.5)
    d = normalize_data(G, FWData("v", c2={"e1": 1.0, "e2": 1.0}, c3=2.0))
    assert (d.c2["e1"], d.c2["e2"], d.c3) == (0.25, 0.25, 0.5)


def test_nearly_normalized_atom_example():
    G = catalog.star(3)
    raw = FWData("v", c1_delta=0.2, c2={"e1": 0.3, "e2": 0.3}, c4=JumpMeasure(((Interior("e1", 1.0), 0.316395),)))
    # 0.316395 is a rounded 0.4 / (1 - e^{-1})
    assert normalization_value(G, raw) == pytest.approx(1.0, abs=1e-6)
    d = normalize_data(G, raw)
    assert normalization_value(G, d) == pytest.approx(1.0, abs=1e-12)
    assert d.c1_delta == pytest.approx(0.2, rel=1e-6)


@pytest.mark.parametrize("name", sorted(catalog.ALL_CONFIGS))
def test_catalog_data_is_normalized(name):
    cfg = catalog.ALL_CONFIGS[name]()
    for v in cfg.graph.vertices:
        assert abs(normalization_value(cfg.graph, cfg.data[v]) - 1.0) <= 1e-12


def test_revive_instant_return_drops_killing():
    cfg = catalog.jump_atom()
    G, d = cfg.graph, cfg.data["v"]
    r = revive_data(G, d, [(Vertex("v"), 1.0)])
    assert r.c1 == 0.0
    assert r.c4.atoms[0][0] == d.c4.atoms[0][0]
    scale = 1.0 / (1.0 - d.c1)
    assert r.c2["e1"] == pytest.approx(d.c2["e1"] * scale, rel=1e-12)
    assert r.c4.atoms[0][1] == pytest.approx(d.c4.atoms[0][1] * scale, rel=1e-12)


def test_revive_to_a_point_adds_an_atom():
    G = catalog.star(1)
    d = FWData("v", c1_delta=0.5, c2={"e1": 0.5})
    r = revive_data(G, d, [(Interior("e1", 1.0), 1.0)])
    norm = 0.5 + 0.5 * (1 - math.exp(-1))
    assert norm == pytest.approx(0.8160603, abs=1e-7)
    assert r.c2["e1"] == pytest.approx(0.5 / norm, rel=1e-12)
    assert r.c4.atoms == ((Interior("e1", 1.0), pytest.approx(0.5 / norm, rel=1e-12)),)


def test_revive_without_killing_is_identity():
    cfg = catalog.walsh()
    d = cfg.data["v"]
    assert revive_data(cfg.graph, d, [(Interior("e1", 1.0), 1.0)]) is d


def test_revival_law_must_be_probability():
    cfg = catalog.elastic()
    with pytest.raises(GraphValidationError):
        revive_data(cfg.graph, cfg.data["v"], [(Vertex("v"), 0.5)])


# -- validation -----------------------------------------------------------------


def test_check_data_rejects_bad_input():
    G = catalog.star(2)
    with pytest.raises(GraphValidationError) as exc:
        check_data(G, FWData("v", c2={"e1": -0.1, "e2": 1.1}), normalized=False)
    assert exc.value.field == "c2.e1"
    with pytest.raises(GraphValidationError):
        check_data(G, FWData("v", c2={"e1": 0.5}))  # not normalized
    with pytest.raises(GraphValidationError):
        check_data(G, FWData("v", c1_delta=1.0), normalized=False)  # no diffusion
    with pytest.raises(GraphValidationError):
        Density("e1", (1.0, 0.5), (1.0,))


def test_data_round_trip():
    for name in ("mixed_star", "three_vertex", "interval", "loop_graph"):
        cfg = catalog.ALL_CONFIGS[name]()
        doc = graph_data_to_list(cfg.data)
        assert parse_graph_data(cfg.graph, doc) == cfg.data
    cfg = catalog.jump_density()
    assert parse_data(cfg.graph, data_to_dict(cfg.data["v"])) == cfg.data["v"]


def test_parse_data_reports_field_paths():
    G = catalog.star(2)
    with pytest.raises(GraphValidationError) as exc:
        parse_graph_data(G, [{"vertex": "v", "c2": {"e1": 1.0}, "c5": 1}])
    assert "c5" in exc.value.field


def test_parse_function():
    G = catalog.star(2)
    f = parse_function(G, {"default": 1.0, "edges": {"e2": [[2.0, 1, 0.5]]}})
    assert f.value(G, Interior("e1", 3.0)) == 1.0
    assert f.value(G, Interior("e2", 2.0)) == pytest.approx(4.0 * math.exp(-1.0))
    with pytest.raises(GraphValidationError):
        parse_function(G, {"edges": {"e2": [[2.0, -1, 0.5]]}})
    with pytest.raises(GraphValidationError):
        parse_function(G, {"edges": {"zz": []}})


def test_split_data_moves_atoms_and_densities():
    cfg = catalog.jump_density()
    G, d = cfg.graph, cfg.data["v"]
    H, pm, new = insert_vertex(G, Interior("e3", 1.2))
    s = split_data(G, d, pm)
    assert normalization_value(H, s) == pytest.approx(1.0, abs=1e-12)
    assert sum(dn.mass() for dn in s.c4.densities) == pytest.approx(d.c4.total_mass(), rel=1e-14)
