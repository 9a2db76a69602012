"""Functions on metric graphs, Feller-Wentzell vertex data and jump measures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Union

from scipy.integrate import quad

from .expoly import ExpPoly
from .metric_graph import (
    INF,
    GraphPoint,
    GraphValidationError,
    Interior,
    MetricGraph,
    PointMap,
    Vertex,
    distance,
    point_from_dict,
    point_to_dict,
)

NORMALIZATION_TOL = 1e-12


# ---------------------------------------------------------------------------
# graph functions


@dataclass(frozen=True)
class GraphFunction:
    """A function given on every edge by an :class:`ExpPoly` in the local coordinate."""

    edges: Mapping[str, ExpPoly]

    @classmethod
    def constant(cls, G: MetricGraph, c: float) -> "GraphFunction":
        return cls({eid: ExpPoly.constant(c) for eid in G.edge_ids})

    @classmethod
    def zero(cls, G: MetricGraph) -> "GraphFunction":
        return cls.constant(G, 0.0)

    def on(self, edge_id: str) -> ExpPoly:
        try:
            return self.edges[edge_id]
        except KeyError:
            raise KeyError(f"function has no piece on edge {edge_id!r}") from None

    def __add__(self, other: "GraphFunction") -> "GraphFunction":
        return GraphFunction({k: self.edges[k] + other.edges[k] for k in self.edges})

    def __sub__(self, other: "GraphFunction") -> "GraphFunction":
        return GraphFunction({k: self.edges[k] - other.edges[k] for k in self.edges})

    def __mul__(self, s: float) -> "GraphFunction":
        return GraphFunction({k: p * s for k, p in self.edges.items()})

    __rmul__ = __mul__

    def value(self, G: MetricGraph, p: GraphPoint) -> float:
        if isinstance(p, Interior):
            return float(self.on(p.edge)(p.x))
        eid, side = G.incidences(p.id)[0] if G.incidences(p.id) else (None, 0)
        if eid is None:
            raise GraphValidationError("point", f"isolated vertex {p.id!r} carries no function value")
        return float(self.on(eid)(0.0 if side == 0 else G.length(eid)))

    def vertex_limits(self, G: MetricGraph, v: str) -> list[float]:
        out = []
        for eid, side in G.incidences(v):
            out.append(float(self.on(eid)(0.0 if side == 0 else G.length(eid))))
        return out

    def continuity_defect(self, G: MetricGraph) -> float:
        worst = 0.0
        for v in G.vertices:
            lim = self.vertex_limits(G, v)
            if lim:
                worst = max(worst, max(lim) - min(lim))
        return worst

    def second_derivative(self, G: MetricGraph, v: str) -> float:
        """``f''(v)`` read off the first incident edge."""
        eid, side = G.incidences(v)[0]
        return float(self.on(eid).derivative(2)(0.0 if side == 0 else G.length(eid)))

    def is_c0(self, G: MetricGraph) -> bool:
        return all(self.on(e.id).is_bounded_on_halfline() and self.on(e.id).max_rate() > 0 for e in G.external_edges)


def derivative_along(G: MetricGraph, f: GraphFunction, v: str, edge_id: str) -> float:
    """Directional derivative of ``f`` at ``v`` into ``edge_id``."""
    side = G.side_at(v, edge_id)
    d = f.on(edge_id).derivative()
    if side == 0:
        return float(d(0.0))
    return -float(d(G.length(edge_id)))


# ---------------------------------------------------------------------------
# jump measures


@dataclass(frozen=True)
class Density:
    """Piecewise-constant density on ``edge``: ``values[k]`` on ``[breaks[k], breaks[k+1])``."""

    edge: str
    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.breaks) != len(self.values) + 1:
            raise GraphValidationError("densities.breaks", "need one more break than values")
        if any(b >= c for b, c in zip(self.breaks, self.breaks[1:])):
            raise GraphValidationError("densities.breaks", "breaks must be strictly increasing")
        if any(v < 0 or not math.isfinite(v) for v in self.values):
            raise GraphValidationError("densities.values", "values must be finite and >= 0")
        if not all(math.isfinite(b) for b in self.breaks):
            raise GraphValidationError("densities.breaks", "breaks must be finite")

    def cells(self) -> Iterable[tuple[float, float, float]]:
        for a, b, c in zip(self.breaks, self.breaks[1:], self.values):
            if c > 0:
                yield a, b, c

    def mass(self) -> float:
        return sum((b - a) * c for a, b, c in self.cells())


@dataclass(frozen=True)
class JumpMeasure:
    atoms: tuple[tuple[GraphPoint, float], ...] = ()
    densities: tuple[Density, ...] = ()

    def __post_init__(self):
        for p, w in self.atoms:
            if not (w > 0 and math.isfinite(w)):
                raise GraphValidationError("atoms.w", f"atom weights must be finite and > 0, got {w!r}")

    def is_empty(self) -> bool:
        return not self.atoms and all(d.mass() == 0 for d in self.densities)

    def total_mass(self) -> float:
        return sum(w for _, w in self.atoms) + sum(d.mass() for d in self.densities)

    def scaled(self, s: float) -> "JumpMeasure":
        if s == 0:
            return JumpMeasure()
        return JumpMeasure(
            tuple((p, w * s) for p, w in self.atoms),
            tuple(Density(d.edge, d.breaks, tuple(c * s for c in d.values)) for d in self.densities),
        )

    def plus_atoms(self, atoms: Iterable[tuple[GraphPoint, float]]) -> "JumpMeasure":
        merged: dict[GraphPoint, float] = {}
        for p, w in list(self.atoms) + list(atoms):
            merged[p] = merged.get(p, 0.0) + w
        return JumpMeasure(tuple((p, w) for p, w in merged.items() if w > 0), self.densities)


def distance_profile(G: MetricGraph, v: str, edge_id: str) -> tuple[float, float, float]:
    """``(d(v, end0), d(v, end1), L)`` so that ``d(v, (edge, x)) = min(d0 + x, d1 + L - x)``."""
    a, b = G.endpoints(edge_id)
    row = G.vertex_distances[v]
    L = G.length(edge_id)
    return row[a], (row[b] if b is not None else INF), L


def _linear_pieces(G: MetricGraph, v: str, edge_id: str, lo: float, hi: float):
    """Split ``[lo, hi]`` where ``d(v, .)`` is affine; yields ``(a, b, c, s)`` with ``d = c + s x``."""
    d0, d1, L = distance_profile(G, v, edge_id)
    if math.isinf(d1):
        if not math.isinf(d0):
            yield lo, hi, d0, 1.0
        return
    if math.isinf(d0):
        yield lo, hi, d1 + L, -1.0
        return
    kink = (d1 + L - d0) / 2.0
    if kink > lo:
        yield lo, min(hi, kink), d0, 1.0
    if kink < hi:
        yield max(lo, kink), hi, d1 + L, -1.0


def _compose_affine(k: ExpPoly, c: float, s: float) -> ExpPoly:
    """``x -> k(c + s x)`` for ``s = +-1``."""
    return k.shift(c) if s > 0 else k.reflect(c)


def support_gap(G: MetricGraph, v: str, m: JumpMeasure) -> float:
    """Smallest distance from ``v`` to the support of ``m``."""
    gap = INF
    for p, _ in m.atoms:
        gap = min(gap, distance(G, Vertex(v), p))
    for dens in m.densities:
        for a, b, _ in dens.cells():
            for lo, hi, c, s in _linear_pieces(G, v, dens.edge, a, b):
                gap = min(gap, c + s * lo, c + s * hi)
    return gap


Integrand = Union[GraphFunction, ExpPoly, Callable[[GraphPoint], float]]


def jump_integral(
    G: MetricGraph, h: Integrand, v: str, m: JumpMeasure, *, kernel: bool | None = None
) -> float:
    """``int h dm`` for a jump measure owned by ``v``.

    ``h`` may be a :class:`GraphFunction`, an :class:`ExpPoly` read as a kernel of
    ``d(v, g)``, or any callable on points (adaptive quadrature).
    """
    if kernel is None:
        kernel = isinstance(h, ExpPoly)
    total = 0.0
    for p, w in m.atoms:
        if isinstance(p, Vertex) and p.id == v:
            raise GraphValidationError("atoms", f"jump measure of {v!r} has an atom at {v!r}")
        if kernel:
            total += w * float(h(distance(G, Vertex(v), p)))
        elif isinstance(h, GraphFunction):
            total += w * h.value(G, p)
        else:
            total += w * float(h(p))
    for dens in m.densities:
        L = G.length(dens.edge)
        for a, b, c in dens.cells():
            if b > L:
                raise GraphValidationError("densities.breaks", f"cell beyond edge {dens.edge!r}")
            if kernel:
                for lo, hi, c0, s in _linear_pieces(G, v, dens.edge, a, b):
                    total += c * _compose_affine(h, c0, s).integrate(lo, hi)
            elif isinstance(h, GraphFunction):
                total += c * h.on(dens.edge).integrate(a, b)
            else:
                val, _ = quad(lambda x: float(h(G.point(dens.edge, x))), a, b, epsabs=1e-12, epsrel=1e-12, limit=200)
                total += c * val
    return total


ONE_MINUS_EXP = ExpPoly({0.0: [1.0], 1.0: [-1.0]})


def normalization_integral(G: MetricGraph, v: str, m: JumpMeasure) -> float:
    """``int (1 - exp(-d(v, g))) m(dg)``."""
    return jump_integral(G, ONE_MINUS_EXP, v, m)


# ---------------------------------------------------------------------------
# Feller-Wentzell data


@dataclass(frozen=True)
class FWData:
    vertex: str
    c1_delta: float = 0.0
    c1_inf: float = 0.0
    c2: Mapping[str, float] = field(default_factory=dict)
    c3: float = 0.0
    c4: JumpMeasure = field(default_factory=JumpMeasure)

    @property
    def c1(self) -> float:
        return self.c1_delta + self.c1_inf

    @property
    def p2(self) -> float:
        return float(sum(self.c2.values()))

    def is_trap(self) -> bool:
        return self.c1 == 0 and self.p2 == 0 and self.c4.is_empty()

    def scaled(self, s: float) -> "FWData":
        return FWData(
            self.vertex,
            self.c1_delta * s,
            self.c1_inf * s,
            {k: w * s for k, w in self.c2.items()},
            self.c3 * s,
            self.c4.scaled(s),
        )


def normalization_value(G: MetricGraph, d: FWData) -> float:
    return d.c1 + d.p2 + d.c3 + normalization_integral(G, d.vertex, d.c4)


def check_data(G: MetricGraph, d: FWData, *, normalized: bool = True) -> None:
    """Raise :class:`GraphValidationError` unless ``d`` is admissible data at its vertex."""
    v = d.vertex
    if v not in G.vertices:
        raise GraphValidationError("vertex", f"unknown vertex {v!r}")
    incident = set(G.incident_edges(v))
    for name, val in (("c1_delta", d.c1_delta), ("c1_inf", d.c1_inf), ("c3", d.c3)):
        if not (val >= 0 and math.isfinite(val)):
            raise GraphValidationError(name, f"must be finite and >= 0, got {val!r}")
    for eid, w in d.c2.items():
        if eid not in incident:
            raise GraphValidationError(f"c2.{eid}", f"edge is not incident with {v!r}")
        if G.endpoints(eid)[0] == G.endpoints(eid)[1]:
            raise GraphValidationError(f"c2.{eid}", "loops must be eliminated before attaching data")
        if not (w >= 0 and math.isfinite(w)):
            raise GraphValidationError(f"c2.{eid}", f"must be finite and >= 0, got {w!r}")
    for p, _ in d.c4.atoms:
        G.check_point(p)
        if p == Vertex(v):
            raise GraphValidationError("c4.atoms", "no atom at the owning vertex")
    for dens in d.c4.densities:
        if dens.edge not in G.edge_ids:
            raise GraphValidationError("c4.densities.edge", f"unknown edge {dens.edge!r}")
        if dens.breaks[0] < 0 or dens.breaks[-1] > G.length(dens.edge):
            raise GraphValidationError("c4.densities.breaks", f"cells outside edge {dens.edge!r}")
    if not d.c4.is_empty() and not support_gap(G, v, d.c4) > 0:
        raise GraphValidationError("c4", "support must keep a positive distance from the vertex")
    if not math.isfinite(support_gap(G, v, d.c4)) and not d.c4.is_empty():
        raise GraphValidationError("c4", "jump target unreachable from the vertex")
    if not d.p2 + d.c3 > 0:
        raise GraphValidationError("c2", "need sum(c2) + c3 > 0 (finite jump measures only)")
    if normalized:
        total = normalization_value(G, d)
        if abs(total - 1.0) > NORMALIZATION_TOL * 10:
            raise GraphValidationError("c1_delta", f"data not normalized: total {total!r}")


def normalize_data(G: MetricGraph, raw: FWData) -> FWData:
    """Scale ``raw`` so the normalization functional equals one."""
    if not raw.p2 + raw.c3 > 0:
        if raw.c1 == 0 and raw.c4.is_empty():
            raise GraphValidationError("c1_delta", "all components are zero")
        raise GraphValidationError("c2", "need sum(c2) + c3 > 0 (finite jump measures only)")
    total = normalization_value(G, raw)
    out = raw.scaled(1.0 / total)
    check_data(G, out, normalized=True)
    return out


def revive_data(G: MetricGraph, d: FWData, q: Iterable[tuple[GraphPoint, float]]) -> FWData:
    """Data of the process restarted from ``q`` at each killing at ``d.vertex``."""
    q = list(q)
    if any(w < 0 for _, w in q) or abs(sum(w for _, w in q) - 1.0) > 1e-12:
        raise GraphValidationError("q", "revival law must be a probability measure")
    if d.c1 == 0:
        return d
    moved = [(p, d.c1 * w) for p, w in q if p != Vertex(d.vertex) and w > 0]
    raw = replace(d, c1_delta=0.0, c1_inf=0.0, c4=d.c4.plus_atoms(moved))
    return normalize_data(G, raw)


def split_data(G: MetricGraph, d: FWData, pm: PointMap) -> FWData:
    """Carry vertex data over to the graph of ``pm`` (edges split by inserted vertices)."""
    c2 = {}
    for e, w in d.c2.items():
        if e in pm.splits:
            _, first, second, _ = pm.splits[e]
            e = first if G.side_at(d.vertex, e) == 0 else second
        c2[e] = w
    atoms = tuple((pm(p), w) for p, w in d.c4.atoms)
    dens = []
    for dn in d.c4.densities:
        if dn.edge not in pm.splits:
            dens.append(dn)
            continue
        cut, first, second, _ = pm.splits[dn.edge]
        for lo, hi, edge, shift in ((-INF, cut, first, 0.0), (cut, INF, second, cut)):
            br, vals = [], []
            for a, b, c in dn.cells():
                a, b = max(a, lo), min(b, hi)
                if a < b:
                    if not br or br[-1] != a - shift:
                        if br:
                            # gap between cells: zero density
                            br.append(a - shift)
                            vals.append(0.0)
                        else:
                            br.append(a - shift)
                    br.append(b - shift)
                    vals.append(c)
            if vals:
                dens.append(Density(edge, tuple(br), tuple(vals)))
    return replace(d, c2=c2, c4=JumpMeasure(atoms, tuple(dens)))


def boundary_residual(G: MetricGraph, f: GraphFunction, d: FWData, *, f2: float | None = None) -> float:
    """Left-hand side of the vertex condition at ``d.vertex`` evaluated on ``f``.

    ``f2`` overrides ``f''(v)`` (the solver supplies ``2 (alpha u - f)``).
    """
    v = d.vertex
    fv = f.value(G, Vertex(v))
    out = d.c1 * fv
    for eid, w in d.c2.items():
        if w:
            out -= w * derivative_along(G, f, v, eid)
    if d.c3:
        out += 0.5 * d.c3 * (f.second_derivative(G, v) if f2 is None else f2)
    if not d.c4.is_empty():
        out -= jump_integral(G, f, v, d.c4) - fv * d.c4.total_mass()
    return out


# ---------------------------------------------------------------------------
# whole-graph data and serialization


@dataclass(frozen=True)
class GraphData:
    """Vertex data for every vertex of a graph."""

    by_vertex: Mapping[str, FWData]

    def __getitem__(self, v: str) -> FWData:
        return self.by_vertex[v]

    def replace(self, d: FWData) -> "GraphData":
        out = dict(self.by_vertex)
        out[d.vertex] = d
        return GraphData(out)

    def vertices(self) -> list[str]:
        return list(self.by_vertex)


def check_graph_data(G: MetricGraph, data: GraphData) -> None:
    missing = [v for v in G.vertices if v not in data.by_vertex]
    if missing:
        raise GraphValidationError("data", f"no boundary data for vertex {missing[0]!r}")
    for v in G.vertices:
        check_data(G, data[v])


def non_skew_data(G: MetricGraph, v: str) -> FWData:
    """Equal weights on the two edges of a degree-two vertex."""
    edges = G.incident_edges(v)
    return FWData(v, c2={e: 1.0 / len(edges) for e in edges})


def _num(doc: Mapping[str, Any], key: str, where: str, default: float = 0.0) -> float:
    val = doc.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise GraphValidationError(f"{where}.{key}", "must be a number")
    return float(val)


def parse_data(G: MetricGraph, doc: Mapping[str, Any], where: str = "data") -> FWData:
    known = {"vertex", "c1_delta", "c1_inf", "c2", "c3", "c4", "normalize"}
    for key in doc:
        if key not in known:
            raise GraphValidationError(f"{where}.{key}", "unknown field")
    if "vertex" not in doc:
        raise GraphValidationError(f"{where}.vertex", "missing")
    v = str(doc["vertex"])
    c2_doc = doc.get("c2", {})
    if not isinstance(c2_doc, dict):
        raise GraphValidationError(f"{where}.c2", "must be an object")
    c2 = {str(k): _num(c2_doc, k, f"{where}.c2") for k in c2_doc}
    c4_doc = doc.get("c4", {}) or {}
    atoms = []
    for k, a in enumerate(c4_doc.get("atoms", [])):
        p = point_from_dict(G, a, f"{where}.c4.atoms[{k}]")
        atoms.append((p, _num(a, "w", f"{where}.c4.atoms[{k}]")))
    densities = []
    for k, dd in enumerate(c4_doc.get("densities", [])):
        w = f"{where}.c4.densities[{k}]"
        if dd.get("edge") not in G.edge_ids:
            raise GraphValidationError(f"{w}.edge", f"unknown edge {dd.get('edge')!r}")
        try:
            densities.append(Density(str(dd["edge"]), tuple(map(float, dd["breaks"])), tuple(map(float, dd["values"]))))
        except KeyError as exc:
            raise GraphValidationError(f"{w}.{exc.args[0]}", "missing") from None
        except GraphValidationError as exc:
            raise GraphValidationError(f"{w}.{exc.field.split('.')[-1]}", exc.message) from None
    d = FWData(
        v,
        _num(doc, "c1_delta", where),
        _num(doc, "c1_inf", where),
        c2,
        _num(doc, "c3", where),
        JumpMeasure(tuple(atoms), tuple(densities)),
    )
    if doc.get("normalize", False):
        return normalize_data(G, d)
    try:
        check_data(G, d)
    except GraphValidationError as exc:
        raise GraphValidationError(f"{where}.{exc.field}", exc.message) from None
    return d


def parse_graph_data(G: MetricGraph, doc: Any) -> GraphData:
    """Accepts one vertex object, a list of them, or ``{"data": [...]}``."""
    if isinstance(doc, dict) and "data" in doc:
        doc = doc["data"]
    if isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list):
        raise GraphValidationError("data", "expected an object or a list of objects")
    out = {}
    for k, item in enumerate(doc):
        d = parse_data(G, item, f"data[{k}]")
        if d.vertex in out:
            raise GraphValidationError(f"data[{k}].vertex", f"duplicate data for {d.vertex!r}")
        out[d.vertex] = d
    return GraphData(out)


def data_to_dict(d: FWData) -> dict[str, Any]:
    atoms = []
    for p, w in d.c4.atoms:
        a = point_to_dict(p)
        a["w"] = w
        atoms.append(a)
    return {
        "vertex": d.vertex,
        "c1_delta": d.c1_delta,
        "c1_inf": d.c1_inf,
        "c2": dict(d.c2),
        "c3": d.c3,
        "c4": {
            "atoms": atoms,
            "densities": [
                {"edge": dd.edge, "breaks": list(dd.breaks), "values": list(dd.values)} for dd in d.c4.densities
            ],
        },
    }


def graph_data_to_list(data: GraphData) -> list[dict[str, Any]]:
    return [data_to_dict(d) for d in data.by_vertex.values()]


def parse_function(G: MetricGraph, doc: Mapping[str, Any]) -> GraphFunction:
    """``{"default": c, "edges": {"e1": [[c, k, beta], ...]}}`` to a GraphFunction.

    Each term ``[c, k, beta]`` stands for ``c x^k exp(-beta x)`` in the edge coordinate.
    """
    if not isinstance(doc, dict):
        raise GraphValidationError("f", "must be an object")
    for key in doc:
        if key not in ("default", "edges"):
            raise GraphValidationError(f"f.{key}", "unknown field")
    default = _num(doc, "default", "f")
    edges = {eid: ExpPoly.constant(default) for eid in G.edge_ids}
    for eid, terms in (doc.get("edges") or {}).items():
        if eid not in edges:
            raise GraphValidationError(f"f.edges.{eid}", "unknown edge")
        parsed = []
        for k, t in enumerate(terms):
            if not (isinstance(t, list) and len(t) == 3):
                raise GraphValidationError(f"f.edges.{eid}[{k}]", "a term is [c, k, beta]")
            c, power, beta = t
            if not (isinstance(power, int) and power >= 0):
                raise GraphValidationError(f"f.edges.{eid}[{k}]", "power must be a nonnegative integer")
            parsed.append((float(c), power, float(beta)))
        edges[eid] = ExpPoly.from_terms(parsed)
    return GraphFunction(edges)
