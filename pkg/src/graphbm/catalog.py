"""Named graphs and vertex data used by the verification suite and the shipped configs."""

from __future__ import annotations

from dataclasses import dataclass

from .calculus import Density, FWData, GraphData, JumpMeasure, non_skew_data, normalize_data
from .metric_graph import Interior, MetricGraph, eliminate_loops, parse_graph


@dataclass(frozen=True)
class Config:
    name: str
    graph: MetricGraph
    data: GraphData


def star(k: int = 3) -> MetricGraph:
    return parse_graph({"vertices": ["v"], "external_edges": [{"id": f"e{j}", "vertex": "v"} for j in range(1, k + 1)]})


def _star_config(name: str, raw: FWData, k: int = 3) -> Config:
    G = star(k)
    return Config(name, G, GraphData({"v": normalize_data(G, raw)}))


def walsh() -> Config:
    return _star_config("walsh", FWData("v", c2={"e1": 0.5, "e2": 0.3, "e3": 0.2}))


def sticky(c3: float = 0.2) -> Config:
    # P2 + c3 = 1 with the edge weights in ratio 5:3
    p2 = 1.0 - c3
    raw = FWData("v", c2={"e1": 0.625 * p2, "e2": 0.375 * p2}, c3=c3)
    return _star_config(f"sticky_{c3:g}", raw, k=2)


def elastic() -> Config:
    return _star_config("elastic", FWData("v", c1_delta=0.3, c2={"e1": 0.4, "e2": 0.3}), k=2)


def jump_atom() -> Config:
    raw = FWData("v", c1_delta=0.2, c2={"e1": 0.3, "e2": 0.3}, c4=JumpMeasure(((Interior("e1", 1.0), 0.316395),)))
    return _star_config("jump_atom", raw)


def jump_density() -> Config:
    dens = Density("e3", (0.5, 1.0, 1.5), (0.4, 0.2))
    raw = FWData("v", c2={"e1": 0.4, "e2": 0.2}, c3=0.1, c4=JumpMeasure((), (dens,)))
    return _star_config("jump_density", raw)


def mixed_star() -> Config:
    """Every component at once, jumps landing both near and far."""
    c4 = JumpMeasure(((Interior("e2", 0.8), 0.2),), (Density("e3", (1.0, 2.0), (0.3,)),))
    raw = FWData("v", c1_delta=0.1, c2={"e1": 0.3, "e2": 0.2, "e3": 0.1}, c3=0.15, c4=c4)
    return _star_config("mixed_star", raw)


def interval() -> Config:
    """Two-ended interval with stickiness, killing and a jump into the inside."""
    G = parse_graph({"vertices": ["a", "b"], "internal_edges": [{"id": "i", "from": "a", "to": "b", "length": 2.0}]})
    da = FWData("a", c1_delta=0.1, c2={"i": 0.6}, c3=0.2, c4=JumpMeasure(((Interior("i", 1.2), 0.4),)))
    db = FWData("b", c1_delta=0.3, c2={"i": 0.5})
    return Config("interval", G, GraphData({"a": normalize_data(G, da), "b": normalize_data(G, db)}))


def three_vertex() -> Config:
    G = parse_graph(
        {
            "vertices": ["v1", "v2", "v3"],
            "internal_edges": [
                {"id": "i1", "from": "v1", "to": "v2", "length": 1.0},
                {"id": "i2", "from": "v2", "to": "v3", "length": 1.5},
                {"id": "i3", "from": "v3", "to": "v1", "length": 0.8},
            ],
            "external_edges": [{"id": "e1", "vertex": "v1"}],
        }
    )
    c4_v2 = JumpMeasure(((Interior("i2", 0.9), 0.3),), (Density("e1", (0.5, 1.0, 3.0), (0.2, 0.1)),))
    data = GraphData(
        {
            "v1": normalize_data(G, FWData("v1", c1_delta=0.2, c2={"i1": 0.3, "i3": 0.2, "e1": 0.3})),
            "v2": normalize_data(G, FWData("v2", c2={"i1": 0.4, "i2": 0.4}, c4=c4_v2)),
            "v3": normalize_data(G, FWData("v3", c2={"i2": 0.2, "i3": 0.5}, c3=0.3)),
        }
    )
    return Config("three_vertex", G, data)


def loop_graph() -> Config:
    """A loop at ``a`` (split through a non-skew vertex) and a pendant external edge."""
    G0 = parse_graph(
        {
            "vertices": ["a", "b"],
            "internal_edges": [
                {"id": "l", "from": "a", "to": "a", "length": 2.0},
                {"id": "i", "from": "a", "to": "b", "length": 1.5},
            ],
            "external_edges": [{"id": "e", "vertex": "b"}],
        }
    )
    G, pm = eliminate_loops(G0)
    _, minus, plus, mid = pm.splits["l"]
    da = FWData("a", c1_delta=0.15, c2={minus: 0.3, plus: 0.2, "i": 0.4}, c3=0.1)
    db = FWData("b", c2={"i": 0.5, "e": 0.3}, c4=JumpMeasure(((Interior("e", 1.0), 0.4),)))
    data = GraphData({"a": normalize_data(G, da), "b": normalize_data(G, db), mid: non_skew_data(G, mid)})
    return Config("loop_graph", G, data)


def multigraph() -> MetricGraph:
    """Six vertices, eleven internal edges (double and triple edges), eight external edges.

    Edges ``i2, i3, i7`` start at ``v3`` and ``i6`` ends there.
    """
    edges = [
        ("i1", "v1", "v2", 1.0),
        ("i2", "v3", "v2", 1.5),
        ("i3", "v3", "v1", 2.0),
        ("i4", "v1", "v6", 2.5),
        ("i5", "v1", "v6", 3.0),
        ("i6", "v6", "v3", 1.2),
        ("i7", "v3", "v4", 2.2),
        ("i8", "v4", "v6", 1.4),
        ("i9", "v4", "v5", 0.8),
        ("i10", "v4", "v5", 1.1),
        ("i11", "v4", "v5", 1.3),
    ]
    ext = [("e1", "v1"), ("e2", "v2"), ("e3", "v2"), ("e4", "v4"), ("e5", "v4"), ("e6", "v5"), ("e7", "v5"), ("e8", "v6")]
    return parse_graph(
        {
            "vertices": [f"v{k}" for k in range(1, 7)],
            "internal_edges": [{"id": i, "from": a, "to": b, "length": L} for i, a, b, L in edges],
            "external_edges": [{"id": e, "vertex": v} for e, v in ext],
        }
    )


def double_edge() -> MetricGraph:
    """Two vertices joined by edges of lengths 10 and 5."""
    return parse_graph(
        {
            "vertices": ["v1", "v2"],
            "internal_edges": [
                {"id": "i1", "from": "v1", "to": "v2", "length": 10.0},
                {"id": "i2", "from": "v1", "to": "v2", "length": 5.0},
            ],
        }
    )


def reflecting_interval(length: float = 1.0) -> Config:
    G = parse_graph({"vertices": ["a", "b"], "internal_edges": [{"id": "i", "from": "a", "to": "b", "length": length}]})
    return Config("reflecting_interval", G, GraphData({"a": FWData("a", c2={"i": 1.0}), "b": FWData("b", c2={"i": 1.0})}))


STAR_CONFIGS = {
    "walsh": walsh,
    "sticky_0.2": lambda: sticky(0.2),
    "sticky_0.5": lambda: sticky(0.5),
    "elastic": elastic,
    "jump_atom": jump_atom,
    "jump_density": jump_density,
    "mixed_star": mixed_star,
}

ALL_CONFIGS = {
    **STAR_CONFIGS,
    "interval": interval,
    "three_vertex": three_vertex,
    "loop_graph": loop_graph,
    "reflecting_interval": reflecting_interval,
}
