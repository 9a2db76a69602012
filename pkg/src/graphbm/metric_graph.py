"""Finite metric graphs with the metric of shortest paths.

Edges are identified with intervals: an internal edge ``i`` with ``[0, length]``
where coordinate 0 is glued to ``v_minus`` and ``length`` to ``v_plus``; an
external edge ``e`` with ``[0, inf)`` glued to its vertex at 0.  Points are
always kept canonical: edge endpoints are represented by the vertex itself.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Iterator, Union

INF = math.inf


class GraphValidationError(ValueError):
    """Invalid graph document or argument; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


# ---------------------------------------------------------------------------
# points and symbols


@dataclass(frozen=True, order=True)
class Vertex:
    id: str


@dataclass(frozen=True, order=True)
class Interior:
    edge: str
    x: float


GraphPoint = Union[Vertex, Interior]


@dataclass(frozen=True)
class EdgeStart:
    """The point ``(l, 0+)`` of the compactified graph."""

    edge: str


@dataclass(frozen=True)
class EdgeEnd:
    """The point ``(i, length-)`` of the compactified graph."""

    edge: str


@dataclass(frozen=True)
class Infinity:
    """The point ``(e, +inf)`` at the far end of an external edge."""

    edge: str


BoundarySymbol = Union[EdgeStart, EdgeEnd, Infinity]


@dataclass(frozen=True)
class InternalEdge:
    id: str
    v_minus: str
    v_plus: str
    length: float

    @property
    def is_loop(self) -> bool:
        return self.v_minus == self.v_plus


@dataclass(frozen=True)
class ExternalEdge:
    id: str
    vertex: str
    length: float = INF


@dataclass(frozen=True)
class Path:
    vertices: tuple[str, ...]
    edges: tuple[str, ...]
    length: float


@dataclass(frozen=True)
class Segment:
    """Coordinate range ``lo..hi`` on ``edge``; ``closed_lo``/``closed_hi`` flag the ends."""

    edge: str
    lo: float
    hi: float
    closed_lo: bool
    closed_hi: bool

    def contains(self, x: float) -> bool:
        lo_ok = x >= self.lo if self.closed_lo else x > self.lo
        hi_ok = x <= self.hi if self.closed_hi else x < self.hi
        return lo_ok and hi_ok


# ---------------------------------------------------------------------------
# the graph


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple[str, ...]
    internal_edges: tuple[InternalEdge, ...] = ()
    external_edges: tuple[ExternalEdge, ...] = ()
    _edges: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vertex_set = set()
        for k, v in enumerate(self.vertices):
            if v in vertex_set:
                raise GraphValidationError(f"vertices[{k}]", f"duplicate vertex id {v!r}")
            vertex_set.add(v)
        if not self.vertices:
            raise GraphValidationError("vertices", "a graph needs at least one vertex")
        edges: dict[str, InternalEdge | ExternalEdge] = {}
        for k, e in enumerate(self.internal_edges):
            where = f"internal_edges[{k}]"
            if e.id in edges or e.id in vertex_set:
                raise GraphValidationError(f"{where}.id", f"duplicate id {e.id!r}")
            for end, v in (("from", e.v_minus), ("to", e.v_plus)):
                if v not in vertex_set:
                    raise GraphValidationError(f"{where}.{end}", f"unknown vertex {v!r}")
            if not (isinstance(e.length, (int, float)) and math.isfinite(e.length) and e.length > 0):
                raise GraphValidationError(f"{where}.length", f"must be finite and > 0, got {e.length!r}")
            edges[e.id] = e
        for k, e in enumerate(self.external_edges):
            where = f"external_edges[{k}]"
            if e.id in edges or e.id in vertex_set:
                raise GraphValidationError(f"{where}.id", f"duplicate id {e.id!r}")
            if e.vertex not in vertex_set:
                raise GraphValidationError(f"{where}.vertex", f"unknown vertex {e.vertex!r}")
            if e.length != INF:
                raise GraphValidationError(f"{where}.length", "external edges have infinite length")
            edges[e.id] = e
        object.__setattr__(self, "_edges", edges)

    # -- combinatorics ------------------------------------------------------
    def edge(self, edge_id: str) -> InternalEdge | ExternalEdge:
        try:
            return self._edges[edge_id]
        except KeyError:
            raise KeyError(f"unknown edge {edge_id!r}") from None

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(self._edges)

    def is_external(self, edge_id: str) -> bool:
        return isinstance(self.edge(edge_id), ExternalEdge)

    def length(self, edge_id: str) -> float:
        return self.edge(edge_id).length

    def endpoints(self, edge_id: str) -> tuple[str, str | None]:
        """``(vertex at 0, vertex at length)``; the second is ``None`` for external edges."""
        e = self.edge(edge_id)
        if isinstance(e, ExternalEdge):
            return e.vertex, None
        return e.v_minus, e.v_plus

    def incidences(self, v: str) -> list[tuple[str, int]]:
        """Edges at ``v`` as ``(edge, side)``; side 0 means ``v`` sits at coordinate 0.

        A loop shows up twice, once per side.
        """
        out = []
        for e in self.internal_edges:
            if e.v_minus == v:
                out.append((e.id, 0))
            if e.v_plus == v:
                out.append((e.id, 1))
        for e in self.external_edges:
            if e.vertex == v:
                out.append((e.id, 0))
        return out

    def incident_edges(self, v: str) -> list[str]:
        seen = []
        for eid, _ in self.incidences(v):
            if eid not in seen:
                seen.append(eid)
        return seen

    def side_at(self, v: str, edge_id: str) -> int:
        a, b = self.endpoints(edge_id)
        if a == v:
            return 0
        if b == v:
            return 1
        raise GraphValidationError("edge", f"edge {edge_id!r} is not incident with {v!r}")

    @property
    def has_loops(self) -> bool:
        return any(e.is_loop for e in self.internal_edges)

    # -- points -------------------------------------------------------------
    def point(self, edge_id: str, x: float) -> GraphPoint:
        """Canonical point at coordinate ``x`` of ``edge_id``."""
        length = self.length(edge_id)
        if not (0.0 <= x <= length) or math.isinf(x):
            raise GraphValidationError("x", f"coordinate {x!r} outside edge {edge_id!r}")
        a, b = self.endpoints(edge_id)
        if x == 0.0:
            return Vertex(a)
        if x == length:
            return Vertex(b)
        return Interior(edge_id, float(x))

    def check_point(self, p: GraphPoint) -> None:
        if isinstance(p, Vertex):
            if p.id not in self.vertices:
                raise GraphValidationError("point", f"unknown vertex {p.id!r}")
        elif not (0.0 < p.x < self.length(p.edge)):
            raise GraphValidationError("point", f"{p!r} is not an interior point")

    def _anchors(self, p: GraphPoint) -> list[tuple[str, float]]:
        """Vertices reachable from ``p`` without passing another vertex, with internal distance."""
        if isinstance(p, Vertex):
            return [(p.id, 0.0)]
        a, b = self.endpoints(p.edge)
        out = [(a, p.x)]
        if b is not None:
            out.append((b, self.length(p.edge) - p.x))
        return out

    # -- metric -------------------------------------------------------------
    @cached_property
    def _adjacency(self) -> dict[str, list[tuple[str, float, str]]]:
        adj: dict[str, list[tuple[str, float, str]]] = {v: [] for v in self.vertices}
        for e in self.internal_edges:
            adj[e.v_minus].append((e.v_plus, e.length, e.id))
            adj[e.v_plus].append((e.v_minus, e.length, e.id))
        return adj

    def dijkstra(self, source: str) -> tuple[dict[str, float], dict[str, tuple[str, str]]]:
        """Single-source shortest paths over the vertex set."""
        dist = {v: INF for v in self.vertices}
        pred: dict[str, tuple[str, str]] = {}
        dist[source] = 0.0
        heap = [(0.0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for w, length, eid in self._adjacency[u]:
                nd = d + length
                if nd < dist[w]:
                    dist[w] = nd
                    pred[w] = (u, eid)
                    heapq.heappush(heap, (nd, w))
        return dist, pred

    @cached_property
    def vertex_distances(self) -> dict[str, dict[str, float]]:
        return {v: self.dijkstra(v)[0] for v in self.vertices}

    def finite_diameter(self) -> float:
        """Largest finite vertex-to-vertex distance plus the longest internal edge."""
        best = 0.0
        for row in self.vertex_distances.values():
            for d in row.values():
                if math.isfinite(d):
                    best = max(best, d)
        longest = max((e.length for e in self.internal_edges), default=0.0)
        return best + longest


def internal_distance(G: MetricGraph, p: GraphPoint, q: GraphPoint) -> float:
    """Distance measured inside a single edge, ``inf`` if ``p`` and ``q`` share none."""
    if p == q:
        return 0.0
    if isinstance(p, Interior) and isinstance(q, Interior):
        return abs(p.x - q.x) if p.edge == q.edge else INF
    if isinstance(p, Vertex) and isinstance(q, Vertex):
        return INF
    if isinstance(p, Interior):
        p, q = q, p
    # p vertex, q interior
    best = INF
    for v, d in G._anchors(q):
        if v == p.id:
            best = min(best, d)
    return best


def distance(G: MetricGraph, p: GraphPoint, q: GraphPoint) -> float:
    """Metric of the shortest paths; ``inf`` between different components."""
    if p == q:
        return 0.0
    best = internal_distance(G, p, q)
    vd = G.vertex_distances
    for a, da in G._anchors(p):
        row = vd[a]
        for b, db in G._anchors(q):
            best = min(best, da + row[b] + db)
    return best


def distance_to_vertex(G: MetricGraph, v: str, p: GraphPoint) -> float:
    return distance(G, Vertex(v), p)


def shortest_path(G: MetricGraph, v: str, w: str) -> Path | None:
    """A path of minimal length from ``v`` to ``w``, or ``None`` if disconnected."""
    dist, pred = G.dijkstra(v)
    if math.isinf(dist[w]):
        return None
    verts = [w]
    edges = []
    while verts[-1] != v:
        u, eid = pred[verts[-1]]
        edges.append(eid)
        verts.append(u)
    verts.reverse()
    edges.reverse()
    return Path(tuple(verts), tuple(edges), dist[w])


# ---------------------------------------------------------------------------
# transforms


class PointMap:
    """Maps points of a source graph to a graph obtained by splitting edges.

    ``splits[edge] = (cut, first, second, new_vertex)``: coordinates below ``cut``
    go to ``first`` unchanged, the cut itself to ``new_vertex``, the rest to
    ``second`` shifted by ``-cut``.
    """

    def __init__(self, target: MetricGraph, splits: dict[str, tuple[float, str, str, str]]):
        self.target = target
        self.splits = dict(splits)

    def __call__(self, p: GraphPoint) -> GraphPoint:
        if isinstance(p, Vertex) or p.edge not in self.splits:
            return p
        cut, first, second, new_vertex = self.splits[p.edge]
        if p.x < cut:
            return self.target.point(first, p.x)
        if p.x == cut:
            return Vertex(new_vertex)
        return self.target.point(second, p.x - cut)

    def is_identity(self) -> bool:
        return not self.splits


def _fresh(name: str, taken: set[str]) -> str:
    cand = name
    k = 1
    while cand in taken:
        cand = f"{name}_{k}"
        k += 1
    taken.add(cand)
    return cand


def eliminate_loops(G: MetricGraph) -> tuple[MetricGraph, PointMap]:
    """Split every loop at its midpoint through a new vertex."""
    taken = set(G.vertices) | set(G.edge_ids)
    vertices = list(G.vertices)
    internal = []
    splits = {}
    for e in G.internal_edges:
        if not e.is_loop:
            internal.append(e)
            continue
        mid = _fresh(f"{e.id}^t", taken)
        minus = _fresh(f"{e.id}-", taken)
        plus = _fresh(f"{e.id}+", taken)
        vertices.append(mid)
        internal.append(InternalEdge(minus, e.v_minus, mid, e.length / 2))
        internal.append(InternalEdge(plus, mid, e.v_plus, e.length / 2))
        splits[e.id] = (e.length / 2, minus, plus, mid)
    H = MetricGraph(tuple(vertices), tuple(internal), G.external_edges)
    return H, PointMap(H, splits)


def insert_vertex(
    G: MetricGraph, p: GraphPoint, name: str | None = None
) -> tuple[MetricGraph, PointMap, str]:
    """Split the edge carrying ``p`` at ``p``; returns the new graph, map and vertex id."""
    if isinstance(p, Vertex):
        raise GraphValidationError("point", "a vertex cannot be inserted at an existing vertex")
    G.check_point(p)
    taken = set(G.vertices) | set(G.edge_ids)
    new_v = _fresh(name or f"{p.edge}@{p.x:g}", taken)
    first = _fresh(f"{p.edge}'1", taken)
    second = _fresh(f"{p.edge}'2", taken)
    e = G.edge(p.edge)
    internal = [f for f in G.internal_edges if f.id != p.edge]
    external = [f for f in G.external_edges if f.id != p.edge]
    if isinstance(e, ExternalEdge):
        internal.append(InternalEdge(first, e.vertex, new_v, p.x))
        external.append(ExternalEdge(second, new_v))
    else:
        internal.append(InternalEdge(first, e.v_minus, new_v, p.x))
        internal.append(InternalEdge(second, new_v, e.v_plus, e.length - p.x))
    H = MetricGraph(G.vertices + (new_v,), tuple(internal), tuple(external))
    return H, PointMap(H, {p.edge: (p.x, first, second, new_v)}), new_v


# ---------------------------------------------------------------------------
# neighbourhoods and compactification


def min_incident_length(G: MetricGraph, v: str) -> float:
    return min((G.length(eid) for eid, _ in G.incidences(v)), default=INF)


def ball(G: MetricGraph, v: str, r: float) -> list[Segment]:
    """The open ball of radius ``r`` around ``v`` as half-open edge segments."""
    if not r > 0:
        raise GraphValidationError("r", "radius must be positive")
    if r >= min_incident_length(G, v):
        raise GraphValidationError(
            "r", f"radius {r} reaches beyond an edge at {v!r}; shrink epsilon below {min_incident_length(G, v)}"
        )
    out = []
    for eid, side in G.incidences(v):
        if side == 0:
            out.append(Segment(eid, 0.0, r, True, False))
        else:
            L = G.length(eid)
            out.append(Segment(eid, L - r, L, False, True))
    return out


def boundary_symbols(G: MetricGraph, v: str) -> list[BoundarySymbol]:
    """Points added when ``v`` is cut out of the graph and the rest compactified."""
    out: list[BoundarySymbol] = []
    for eid, side in G.incidences(v):
        out.append(EdgeStart(eid) if side == 0 else EdgeEnd(eid))
    out.extend(Infinity(e.id) for e in G.external_edges)
    return out


def shell_symbol(G: MetricGraph, v: str, edge_id: str) -> BoundarySymbol:
    return EdgeStart(edge_id) if G.side_at(v, edge_id) == 0 else EdgeEnd(edge_id)


# ---------------------------------------------------------------------------
# serialization


def parse_graph(document: str | dict[str, Any]) -> MetricGraph:
    """Build a validated :class:`MetricGraph` from JSON text or a decoded dict."""
    doc = json.loads(document) if isinstance(document, str) else document
    if not isinstance(doc, dict):
        raise GraphValidationError("$", "graph document must be a JSON object")
    unknown = set(doc) - {"vertices", "internal_edges", "external_edges"}
    if unknown:
        raise GraphValidationError(sorted(unknown)[0], "unknown field")
    verts = doc.get("vertices")
    if not isinstance(verts, list) or not all(isinstance(v, str) for v in verts):
        raise GraphValidationError("vertices", "must be a list of strings")
    internal = []
    for k, e in enumerate(doc.get("internal_edges", [])):
        where = f"internal_edges[{k}]"
        if not isinstance(e, dict):
            raise GraphValidationError(where, "must be an object")
        for key in ("id", "from", "to", "length"):
            if key not in e:
                raise GraphValidationError(f"{where}.{key}", "missing")
        length = e["length"]
        if isinstance(length, bool) or not isinstance(length, (int, float)):
            raise GraphValidationError(f"{where}.length", "must be a number")
        internal.append(InternalEdge(str(e["id"]), str(e["from"]), str(e["to"]), float(length)))
    external = []
    for k, e in enumerate(doc.get("external_edges", [])):
        where = f"external_edges[{k}]"
        if not isinstance(e, dict):
            raise GraphValidationError(where, "must be an object")
        for key in ("id", "vertex"):
            if key not in e:
                raise GraphValidationError(f"{where}.{key}", "missing")
        external.append(ExternalEdge(str(e["id"]), str(e["vertex"])))
    return MetricGraph(tuple(verts), tuple(internal), tuple(external))


def graph_to_dict(G: MetricGraph) -> dict[str, Any]:
    return {
        "vertices": list(G.vertices),
        "internal_edges": [
            {"id": e.id, "from": e.v_minus, "to": e.v_plus, "length": e.length} for e in G.internal_edges
        ],
        "external_edges": [{"id": e.id, "vertex": e.vertex} for e in G.external_edges],
    }


def load_graph(path) -> MetricGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(json.load(fh))


def iter_points(G: MetricGraph, per_edge: int = 5, external_reach: float = 3.0) -> Iterator[GraphPoint]:
    """Vertices plus ``per_edge`` interior points on each edge (for grids and tests)."""
    for v in G.vertices:
        yield Vertex(v)
    for eid in G.edge_ids:
        L = G.length(eid)
        top = external_reach if math.isinf(L) else L
        for k in range(1, per_edge + 1):
            yield Interior(eid, top * k / (per_edge + 1))


def point_to_dict(p: GraphPoint) -> dict[str, Any]:
    if isinstance(p, Vertex):
        return {"vertex": p.id}
    return {"edge": p.edge, "x": p.x}


def point_from_dict(G: MetricGraph, d: dict[str, Any], where: str = "point") -> GraphPoint:
    if "vertex" in d:
        v = str(d["vertex"])
        if v not in G.vertices:
            raise GraphValidationError(f"{where}.vertex", f"unknown vertex {v!r}")
        return Vertex(v)
    if "edge" not in d or "x" not in d:
        raise GraphValidationError(where, "needs either 'vertex' or 'edge' and 'x'")
    eid = str(d["edge"])
    if eid not in G.edge_ids:
        raise GraphValidationError(f"{where}.edge", f"unknown edge {eid!r}")
    try:
        return G.point(eid, float(d["x"]))
    except GraphValidationError as exc:
        raise GraphValidationError(f"{where}.x", exc.message) from None


def point_text(p: GraphPoint) -> str:
    """Inverse of :func:`parse_point`."""
    if isinstance(p, Vertex):
        return p.id
    return f"{p.edge}:{p.x!r}"


def parse_point(G: MetricGraph, text: str) -> GraphPoint:
    """``"v1"`` or ``"e1:0.5"`` to a canonical point."""
    if ":" in text:
        eid, x = text.split(":", 1)
        return point_from_dict(G, {"edge": eid, "x": float(x)})
    return point_from_dict(G, {"vertex": text})


PointFn = Callable[[GraphPoint], float]
