import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphbm import catalog
from graphbm.metric_graph import (
    GraphValidationError,
    Interior,
    Vertex,
    ball,
    distance,
    eliminate_loops,
    graph_to_dict,
    insert_vertex,
    parse_graph,
    parse_point,
    point_text,
    shortest_path,
)
from graphbm.verification import brute_distance, brute_vertex_distances, random_graph, random_point


def test_double_edge_distance_is_seven():
    G = catalog.double_edge()
    # 8 along the long edge, 1 + 5 + 1 around through the short one
    assert distance(G, Interior("i1", 1.0), Interior("i1", 9.0)) == 7.0


def test_multigraph_counts():
    G = catalog.multigraph()
    assert (len(G.vertices), len(G.internal_edges), len(G.external_edges)) == (6, 11, 8)


def test_points_are_canonical():
    G = catalog.double_edge()
    assert G.point("i1", 0.0) == Vertex("v1")
    assert G.point("i1", 10.0) == Vertex("v2")
    assert isinstance(G.point("i1", 3.0), Interior)


def test_points_on_different_parallel_edges():
    G = catalog.double_edge()
    assert distance(G, Interior("i1", 2.0), Interior("i2", 4.0)) == 6.0


def test_external_edges_are_rays():
    G = catalog.star(2)
    assert distance(G, Interior("e1", 3.0), Interior("e2", 0.5)) == 3.5
    assert distance(G, Interior("e1", 3.0), Interior("e1", 1.0)) == 2.0


def test_shortest_path_through_multi_edge():
    G = catalog.double_edge()
    p = shortest_path(G, "v1", "v2")
    assert p.length == 5.0


@pytest.mark.parametrize("seed", range(20))
def test_distance_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    G = random_graph(rng)
    D = brute_vertex_distances(G)
    for _ in range(10):
        p, q = random_point(G, rng), random_point(G, rng)
        d, ref = distance(G, p, q), brute_distance(G, D, p, q)
        # disconnected pairs are at infinite distance in both
        assert d == ref or abs(d - ref) <= 1e-12


def test_parse_errors_name_the_field():
    with pytest.raises(GraphValidationError) as exc:
        parse_graph({"vertices": ["a"], "internal_edges": [{"id": "i", "from": "a", "to": "a", "length": -1}]})
    assert exc.value.field == "internal_edges[0].length"
    with pytest.raises(GraphValidationError) as exc:
        parse_graph({"vertices": ["a", "a"]})
    assert exc.value.field == "vertices[1]"
    with pytest.raises(GraphValidationError):
        parse_graph({"vertices": []})


def test_round_trip():
    for G in (catalog.multigraph(), catalog.double_edge(), catalog.three_vertex().graph):
        assert parse_graph(graph_to_dict(G)) == G


def test_point_text_round_trip():
    G = catalog.three_vertex().graph
    for p in (Vertex("v2"), Interior("i2", 0.3), Interior("e1", 7.25)):
        assert parse_point(G, point_text(p)) == p


def test_loop_elimination_preserves_distances():
    raw = parse_graph(
        {
            "vertices": ["a", "b"],
            "internal_edges": [
                {"id": "l", "from": "a", "to": "a", "length": 2.0},
                {"id": "i", "from": "a", "to": "b", "length": 1.5},
            ],
            "external_edges": [{"id": "e", "vertex": "b"}],
        }
    )
    assert raw.has_loops
    H, pm = eliminate_loops(raw)
    assert not H.has_loops
    pts = [Vertex("a"), Interior("l", 0.3), Interior("l", 1.0), Interior("l", 1.7), Interior("e", 2.0), Interior("i", 0.4)]
    for p in pts:
        for q in pts:
            assert distance(H, pm(p), pm(q)) == pytest.approx(distance(raw, p, q), abs=1e-12)


def test_insert_vertex_on_external_edge():
    G = catalog.star(2)
    H, pm, v = insert_vertex(G, Interior("e1", 1.5))
    assert v in H.vertices
    assert distance(H, pm(Interior("e1", 3.0)), pm(Interior("e2", 1.0))) == 4.0
    assert pm(Interior("e1", 1.5)) == Vertex(v)


def test_ball_segments():
    G = catalog.double_edge()
    segs = ball(G, "v1", 0.5)
    assert sorted((s.edge, s.lo, s.hi) for s in segs) == [("i1", 0.0, 0.5), ("i2", 0.0, 0.5)]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    G = random_graph(rng)
    p, q, r = (random_point(G, rng) for _ in range(3))
    assert distance(G, p, r) <= distance(G, p, q) + distance(G, q, r) + 1e-12
    assert distance(G, p, q) == pytest.approx(distance(G, q, p), abs=1e-12)
