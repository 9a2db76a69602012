import math

import numpy as np
import pytest

from graphbm import catalog
from graphbm.calculus import FWData, GraphData, revive_data
from graphbm.estimator import (
    DEFAULT_EPSILONS,
    Extrapolation,
    FWEstimate,
    compare_report,
    estimate_vertex,
    exact_curves,
    exit_statistics,
    extrapolate,
    extrapolate_linear,
    truth_components,
)
from graphbm.metric_graph import Interior


def test_extrapolation_recovers_polynomials_exactly():
    eps = np.array(DEFAULT_EPSILONS)
    y = 0.3 - 1.2 * eps + 0.7 * eps**2
    ex = extrapolate(eps, y, np.full(4, 0.01))
    assert ex.value == pytest.approx(0.3, abs=1e-13)
    assert ex.slope == pytest.approx(-1.2, abs=1e-11)
    lin = extrapolate_linear(eps, 0.3 + 2 * eps, np.full(4, 0.01))
    assert lin.value == pytest.approx(0.3, abs=1e-13)


def test_extrapolation_error_propagation():
    # equal errors, linear fit: se of the intercept from the OLS formula
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    s = 0.01
    ex = extrapolate_linear(eps, np.zeros(4), np.full(4, s))
    X = np.vander(eps, 2, increasing=True)
    want = s * math.sqrt(np.linalg.inv(X.T @ X)[0, 0])
    assert ex.se == pytest.approx(want, rel=1e-12)


def test_extrapolation_tolerates_zero_errors():
    ex = extrapolate([0.2, 0.1, 0.05, 0.025], [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0])
    assert ex.value == 0.0 and ex.se == 0.0


@pytest.mark.parametrize("name", ["walsh", "sticky_0.2", "sticky_0.5", "elastic", "mixed_star"])
def test_exact_curves_extrapolate_to_the_data(name):
    cfg = catalog.STAR_CONFIGS[name]()
    d = cfg.data["v"]
    curves = [exact_curves(cfg.graph, d, e) for e in DEFAULT_EPSILONS]
    truth = truth_components(cfg.graph, d, [], 0.5)
    for key in curves[0]:
        y = [c[key] for c in curves]
        ex = extrapolate(DEFAULT_EPSILONS, y, [1.0] * 4)
        # the cubic remainder of the curves is far below Monte Carlo error at 1e5 paths
        assert ex.value == pytest.approx(truth[key], abs=1e-4), key


def test_sticky_curve_formula():
    cfg = catalog.sticky(0.5)
    d = cfg.data["v"]
    for eps in DEFAULT_EPSILONS:
        s = -math.expm1(-eps) / eps
        want = (d.p2 * eps + d.c3) / (d.p2 * eps + d.c3 + d.p2 * s)
        assert exact_curves(cfg.graph, d, eps)["c3"] == pytest.approx(want, rel=1e-14)


def test_trap_vertex():
    G = catalog.star(1)
    data = GraphData({"v": FWData("v", c3=1.0)})
    st = exit_statistics(G, data, "v", 0.1, 10, seed=1)
    assert st.K == 1.0 and st.values["c3"] == 1.0 and st.degenerate


def test_reflecting_halfline_K():
    G = catalog.star(1)
    data = GraphData({"v": FWData("v", c2={"e1": 1.0})})
    st = exit_statistics(G, data, "v", 0.1, 20_000, seed=2)
    want = 1 + (1 - math.exp(-0.1)) / 0.01
    assert want == pytest.approx(10.5163, abs=1e-4)
    assert abs(st.K - want) <= 3 * st.K_se


def test_walsh_levy_mass_on_shells():
    cfg = catalog.walsh()
    eps = 0.2
    st = exit_statistics(cfg.graph, cfg.data, "v", eps, 20_000, seed=3)
    # every path exits through a shell edge after a mean time eps^2
    for e, p in (("e1", 0.5), ("e2", 0.3), ("e3", 0.2)):
        assert st.nu[f"edge:{e}"] == pytest.approx(p / eps**2, rel=0.05)


def _fake_estimate(values, se=0.01):
    comps = {k: Extrapolation(v, se, 0.0, (), ()) for k, v in values.items()}
    return FWEstimate("v", DEFAULT_EPSILONS, comps)


def test_compare_report_mechanics():
    cfg = catalog.walsh()
    truth = truth_components(cfg.graph, cfg.data["v"], [], 0.5)
    rep = compare_report(cfg.graph, _fake_estimate(truth), cfg.data["v"])
    assert rep.passed and all(v.z == 0 for v in rep.verdicts)
    off = dict(truth)
    off["c2:e3"] += 0.05  # 5 sigma and 25 %
    rep = compare_report(cfg.graph, _fake_estimate(off), cfg.data["v"])
    assert [v.name for v in rep.failures()] == ["c2:e3"]
    assert rep.failures()[0].z == pytest.approx(5.0)


def test_normalization_of_estimate_sums_components():
    est = _fake_estimate({"c1_delta": 0.2, "c1_inf": 0.0, "c2:e1": 0.5, "c3": 0.1, "c4_weighted": 0.2, "c4:e1:[1,1.5)": 9.0})
    total, se = est.normalization()
    assert total == pytest.approx(1.0)
    assert se == pytest.approx(0.01 * math.sqrt(5))


def test_walsh_recovery_small_run():
    cfg = catalog.walsh()
    _, est = estimate_vertex(cfg.graph, cfg.data, "v", 20_000, seed=4)
    rep = compare_report(cfg.graph, est, cfg.data["v"])
    assert rep.passed, [(v.name, v.z) for v in rep.failures()]
    assert est.value("c1_inf") == 0.0
    total, se = est.normalization()
    assert abs(total - 1) <= 3 * se


def test_revived_estimate_matches_revived_data():
    cfg = catalog.elastic()
    q = [(Interior("e2", 0.7), 1.0)]
    _, est = estimate_vertex(cfg.graph, cfg.data, "v", 20_000, seed=5, revival=q)
    truth = revive_data(cfg.graph, cfg.data["v"], q)
    rep = compare_report(cfg.graph, est, truth)
    assert rep.passed, [(v.name, v.z) for v in rep.failures()]
    assert est.value("c1_delta") == 0.0
