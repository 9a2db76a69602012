import pytest

from graphbm import catalog
from graphbm.domain import ball_domain, classify, region_domain, whole_graph_domain
from graphbm.metric_graph import GraphValidationError, Interior, Vertex


def test_ball_domain_on_star():
    G = catalog.star(3)
    dom = ball_domain(G, "v", 0.1)
    assert sorted(dom.segments) == [("e1", 0.0, 0.1), ("e2", 0.0, 0.1), ("e3", 0.0, 0.1)]
    assert dom.contains(G, Vertex("v")) and dom.contains(G, Interior("e1", 0.05))
    assert not dom.contains(G, Interior("e1", 0.1))
    assert set(dom.exit_points(G)) == {Interior(e, 0.1) for e in ("e1", "e2", "e3")}


def test_ball_respects_orientation():
    # v3 is the start of i2, i3, i7 and the end of i6
    G = catalog.multigraph()
    dom = ball_domain(G, "v3", 0.2)
    seg = {e: (lo, hi) for e, lo, hi in dom.segments}
    for e in ("i2", "i3", "i7"):
        assert seg[e] == (0.0, 0.2)
    L = G.length("i6")
    assert seg["i6"] == pytest.approx((L - 0.2, L))


def test_ball_must_stay_inside_edges():
    with pytest.raises(GraphValidationError):
        ball_domain(catalog.double_edge(), "v1", 5.0)


def test_whole_graph_and_region():
    cfg = catalog.three_vertex()
    G = cfg.graph
    dom = whole_graph_domain(G, 2.0)
    assert dom.vertices == frozenset(G.vertices)
    assert dom.exit_points(G) == [Interior("e1", 2.0)]
    reg = region_domain(G, ["v1"], 1.0)
    reg.validate(G)
    assert classify(G, reg, Vertex("v2")) != classify(G, reg, Vertex("v1"))
