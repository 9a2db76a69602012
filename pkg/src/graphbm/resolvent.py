"""Resolvent of a Brownian motion on a metric graph with Feller-Wentzell vertex data.

On every edge ``u = U_alpha f`` is its Dirichlet part plus the vertex values
carried in by the kernels ``exp(-gamma x)`` (external edges) or the two sinh
ratios (internal edges).  Plugging this into the vertex conditions leaves a
dense linear system in the vertex values only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bm1d import (
    HalflineDirichlet,
    IntervalDirichlet,
    coth_csch,
    halfline_dirichlet,
    interval_dirichlet,
    sinh_ratio_integral,
    sinh_ratio_minus,
    sinh_ratio_minus_expoly,
    sinh_ratio_plus,
    sinh_ratio_plus_expoly,
)
from .calculus import (
    FWData,
    GraphData,
    GraphFunction,
    boundary_residual,
    check_graph_data,
)
from .domain import Domain
from .expoly import ExpPoly
from .metric_graph import GraphPoint, Interior, MetricGraph, Vertex

COND_LIMIT = 1e12


class SingularSystemError(RuntimeError):
    def __init__(self, cond: float):
        super().__init__(f"vertex system is singular or ill-conditioned (condition estimate {cond:.3e})")
        self.cond = cond


class Affine:
    """``const + sum coef[v] * u(v)`` over vertex values."""

    __slots__ = ("const", "coef")

    def __init__(self, const: float = 0.0, coef: Mapping[str, float] | None = None):
        self.const = float(const)
        self.coef: dict[str, float] = dict(coef or {})

    def add(self, other: "Affine", scale: float = 1.0) -> None:
        self.const += scale * other.const
        for v, c in other.coef.items():
            self.coef[v] = self.coef.get(v, 0.0) + scale * c

    def value(self, u: Mapping[str, float]) -> float:
        return self.const + sum(c * u[v] for v, c in self.coef.items())


@dataclass(frozen=True)
class EdgeRep:
    """``u`` on one edge: Dirichlet part plus the vertex kernels."""

    edge: str
    v0: str
    v1: str | None
    length: float
    gamma: float
    dirichlet: HalflineDirichlet | IntervalDirichlet

    def at(self, x: float) -> Affine:
        if self.v1 is None:
            return Affine(self.dirichlet(x), {self.v0: math.exp(-self.gamma * x)})
        a = Affine(self.dirichlet(x))
        a.add(Affine(0.0, {self.v0: sinh_ratio_minus(x, self.gamma, self.length)}))
        a.add(Affine(0.0, {self.v1: sinh_ratio_plus(x, self.gamma, self.length)}))
        return a

    def slope_at_end(self, side: int) -> Affine:
        """Directional derivative into the edge at end ``side``."""
        g = self.gamma
        if self.v1 is None:
            return Affine(self.dirichlet.boundary_derivative(), {self.v0: -g})
        coth, csch = coth_csch(g, self.length)
        d0, dL = self.dirichlet.boundary_derivatives()
        a = Affine()
        if side == 0:
            a.add(Affine(d0, {self.v0: -g * coth}))
            a.add(Affine(0.0, {self.v1: g * csch}))
        else:
            a.add(Affine(-dL, {self.v0: g * csch}))
            a.add(Affine(0.0, {self.v1: -g * coth}))
        return a

    def integral(self, lo: float, hi: float) -> Affine:
        g = self.gamma
        if self.v1 is None:
            part = self.dirichlet.as_expoly().integrate(lo, hi)
            return Affine(part, {self.v0: (math.exp(-g * lo) - math.exp(-g * hi)) / g})
        a = Affine(self.dirichlet.integrate(lo, hi))
        a.add(Affine(0.0, {self.v0: sinh_ratio_integral(lo, hi, g, self.length)}))
        a.add(Affine(0.0, {self.v1: sinh_ratio_integral(lo, hi, g, self.length, plus=True)}))
        return a

    def derivative(self, x: float, u: Mapping[str, float]) -> float:
        g = self.gamma
        if self.v1 is None:
            d = float(self.dirichlet.as_expoly().derivative()(x))
            return d - g * u[self.v0] * math.exp(-g * x)
        L = self.length
        den = -math.expm1(-2.0 * g * L)
        dm = -g * (math.exp(-g * x) + math.exp(-g * (2 * L - x))) / den
        dp = g * (math.exp(-g * (L - x)) + math.exp(-g * (L + x))) / den
        return self.dirichlet.derivative(x) + u[self.v0] * dm + u[self.v1] * dp

    def as_expoly(self, u: Mapping[str, float]) -> ExpPoly:
        g = self.gamma
        if self.v1 is None:
            return self.dirichlet.as_expoly() + ExpPoly.term(u[self.v0], 0, g)
        return (
            self.dirichlet.as_expoly()
            + sinh_ratio_minus_expoly(g, self.length) * u[self.v0]
            + sinh_ratio_plus_expoly(g, self.length) * u[self.v1]
        )


def edge_representations(G: MetricGraph, f: GraphFunction, alpha: float) -> dict[str, EdgeRep]:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if G.has_loops:
        raise ValueError("eliminate loops before solving")
    g = math.sqrt(2.0 * alpha)
    reps = {}
    for e in G.internal_edges:
        reps[e.id] = EdgeRep(e.id, e.v_minus, e.v_plus, e.length, g, interval_dirichlet(f.on(e.id), alpha, e.length))
    for e in G.external_edges:
        fe = f.on(e.id)
        if not fe.is_bounded_on_halfline():
            raise ValueError(f"f must be bounded on external edge {e.id!r}")
        reps[e.id] = EdgeRep(e.id, e.vertex, None, math.inf, g, halfline_dirichlet(fe, alpha))
    return reps


def _affine_at_point(G: MetricGraph, reps: Mapping[str, EdgeRep], p: GraphPoint) -> Affine:
    if isinstance(p, Vertex):
        return Affine(0.0, {p.id: 1.0})
    return reps[p.edge].at(p.x)


@dataclass(frozen=True)
class VertexSystem:
    vertices: tuple[str, ...]
    matrix: np.ndarray
    rhs: np.ndarray

    def condition(self) -> float:
        scale = np.max(np.abs(self.matrix), axis=1)
        scale[scale == 0] = 1.0
        return float(np.linalg.cond(self.matrix / scale[:, None]))


def vertex_row(G: MetricGraph, reps: Mapping[str, EdgeRep], d: FWData, f: GraphFunction, alpha: float) -> Affine:
    """The vertex condition at ``d.vertex`` as an affine form in the vertex values."""
    v = d.vertex
    row = Affine(0.0, {v: d.c1 + d.c3 * alpha})
    row.const -= d.c3 * f.value(G, Vertex(v))
    for eid, w in d.c2.items():
        if w:
            row.add(reps[eid].slope_at_end(G.side_at(v, eid)), -w)
    if not d.c4.is_empty():
        row.add(Affine(0.0, {v: d.c4.total_mass()}))
        for p, w in d.c4.atoms:
            row.add(_affine_at_point(G, reps, p), -w)
        for dens in d.c4.densities:
            for a, b, c in dens.cells():
                row.add(reps[dens.edge].integral(a, b), -c)
    return row


def assemble_system(G: MetricGraph, data: GraphData, f: GraphFunction, alpha: float) -> VertexSystem:
    check_graph_data(G, data)
    reps = edge_representations(G, f, alpha)
    return _assemble(G, data, f, alpha, reps)


def _assemble(G, data, f, alpha, reps) -> VertexSystem:
    idx = {v: k for k, v in enumerate(G.vertices)}
    n = len(G.vertices)
    M = np.zeros((n, n))
    b = np.zeros(n)
    for v in G.vertices:
        row = vertex_row(G, reps, data[v], f, alpha)
        for w, c in row.coef.items():
            M[idx[v], idx[w]] += c
        b[idx[v]] = -row.const
    return VertexSystem(tuple(G.vertices), M, b)


@dataclass(frozen=True)
class ResolventSolution:
    graph: MetricGraph
    alpha: float
    f: GraphFunction
    vertex_values: Mapping[str, float]
    edges: Mapping[str, EdgeRep]
    condition: float

    def evaluate(self, p: GraphPoint) -> float:
        if isinstance(p, Vertex):
            return self.vertex_values[p.id]
        return self.edges[p.edge].at(p.x).value(self.vertex_values)

    def evaluate_edge(self, edge: str, xs: Iterable[float]) -> np.ndarray:
        rep = self.edges[edge]
        return np.array([rep.at(float(x)).value(self.vertex_values) for x in xs])

    def derivative(self, edge: str, x: float) -> float:
        """Coordinate derivative on ``edge`` at ``x``."""
        return self.edges[edge].derivative(x, self.vertex_values)

    def derivative_at_vertex(self, v: str, edge: str) -> float:
        side = self.graph.side_at(v, edge)
        return self.edges[edge].slope_at_end(side).value(self.vertex_values)

    def as_graph_function(self) -> GraphFunction:
        return GraphFunction({e: rep.as_expoly(self.vertex_values) for e, rep in self.edges.items()})


def solve_resolvent(G: MetricGraph, data: GraphData, f: GraphFunction, alpha: float) -> ResolventSolution:
    check_graph_data(G, data)
    reps = edge_representations(G, f, alpha)
    system = _assemble(G, data, f, alpha, reps)
    cond = system.condition()
    if not cond < COND_LIMIT:
        raise SingularSystemError(cond)
    u = np.linalg.solve(system.matrix, system.rhs)
    values = {v: float(u[k]) for k, v in enumerate(system.vertices)}
    return ResolventSolution(G, float(alpha), f, values, reps, cond)


# ---------------------------------------------------------------------------
# checks


@dataclass(frozen=True)
class ResidualReport:
    residuals: Mapping[str, float]

    @property
    def max_abs(self) -> float:
        return max((abs(r) for r in self.residuals.values()), default=0.0)


def boundary_residual_check(
    sol: ResolventSolution, data: GraphData, values: Mapping[str, float] | None = None
) -> ResidualReport:
    """Vertex conditions evaluated on the solved ``u`` with ``u''(v) = 2 (alpha u(v) - f(v))``.

    ``values`` substitutes other vertex values (for perturbation studies).
    """
    G = sol.graph
    vals = dict(sol.vertex_values if values is None else values)
    u = GraphFunction({e: rep.as_expoly(vals) for e, rep in sol.edges.items()})
    out = {}
    for v in G.vertices:
        u2 = 2.0 * (sol.alpha * vals[v] - sol.f.value(G, Vertex(v)))
        out[v] = boundary_residual(G, u, data[v], f2=u2)
    return ResidualReport(out)


def evaluation_grid(G: MetricGraph, per_edge: int = 9, reach: float = 4.0) -> list[GraphPoint]:
    pts: list[GraphPoint] = [Vertex(v) for v in G.vertices]
    for e in G.edge_ids:
        L = G.length(e)
        top = reach if math.isinf(L) else L
        for k in range(1, per_edge + 1):
            pts.append(Interior(e, top * k / (per_edge + 1)))
    return pts


@dataclass(frozen=True)
class SemigroupReport:
    alphas: tuple[float, ...]
    sup_deviation: tuple[float, ...]
    rates: tuple[float, ...]


def semigroup_limit_check(
    G: MetricGraph,
    data: GraphData,
    f: GraphFunction,
    alphas: Sequence[float] = (1e2, 1e3, 1e4),
    grid: Sequence[GraphPoint] | None = None,
) -> SemigroupReport:
    """``sup |alpha U_alpha f - f|`` over a grid and the observed decay exponents in ``alpha``."""
    pts = list(grid) if grid is not None else evaluation_grid(G)
    devs = []
    for a in alphas:
        sol = solve_resolvent(G, data, f, a)
        devs.append(max(abs(a * sol.evaluate(p) - f.value(G, p)) for p in pts))
    rates = []
    for (a0, d0), (a1, d1) in zip(zip(alphas, devs), zip(alphas[1:], devs[1:])):
        rates.append(math.log(d0 / d1) / math.log(a1 / a0) if d0 > 0 and d1 > 0 else math.inf)
    return SemigroupReport(tuple(alphas), tuple(devs), tuple(rates))


def resolvent_identity_residual(
    G: MetricGraph, data: GraphData, f: GraphFunction, alpha: float, beta: float, grid: Sequence[GraphPoint] | None = None
) -> float:
    """``sup |U_a f - U_b f + (a - b) U_a U_b f|`` on a grid.

    ``U_b f`` is again exponential-polynomial on every edge, so the outer
    resolvent is applied exactly.
    """
    pts = list(grid) if grid is not None else evaluation_grid(G)
    ua = solve_resolvent(G, data, f, alpha)
    ub = solve_resolvent(G, data, f, beta)
    uab = solve_resolvent(G, data, ub.as_graph_function(), alpha)
    return max(abs(ua.evaluate(p) - ub.evaluate(p) + (alpha - beta) * uab.evaluate(p)) for p in pts)


def star_closed_form(G: MetricGraph, d: FWData, f: GraphFunction, alpha: float) -> float:
    """``U_alpha f(v)`` on a star graph written out in one fraction."""
    from .calculus import jump_integral

    v = d.vertex
    g = math.sqrt(2.0 * alpha)
    num = d.c3 * f.value(G, Vertex(v))
    for e, w in d.c2.items():
        num += w * 2.0 * f.on(e).laplace_halfline(g)
    # Dirichlet part of u at jump targets
    dir_parts = GraphFunction({e.id: halfline_dirichlet(f.on(e.id), alpha).as_expoly() for e in G.external_edges})
    num += jump_integral(G, dir_parts, v, d.c4)
    kernel = ExpPoly({0.0: [1.0], g: [-1.0]})
    den = d.c1 + g * d.p2 + alpha * d.c3 + jump_integral(G, kernel, v, d.c4)
    return num / den


# ---------------------------------------------------------------------------
# exit problems (alpha = 0)


@dataclass(frozen=True)
class ExitSolution:
    """Exit law and mean exit time of a region, from every inside vertex."""

    domain: Domain
    categories: tuple
    probabilities: Mapping[str, Mapping]
    mean_time: Mapping[str, float]


def exit_categories(G: MetricGraph, data: GraphData, domain: Domain) -> list:
    """Keys in the format of :func:`graphbm.simulator.exit_keys`."""
    keys: list = [("point", p) for p in domain.exit_points(G)]
    for v in sorted(domain.vertices):
        d = data[v]
        if d.c1 > 0:
            keys.append(("killed", v))
        for p, _ in d.c4.atoms:
            if not domain.contains(G, p) and ("point", p) not in keys:
                keys.append(("point", p))
        for dens in d.c4.densities:
            for a, b, _ in dens.cells():
                for piece in _outside_pieces(domain, dens.edge, a, b):
                    if ("cell",) + piece not in keys:
                        keys.append(("cell",) + piece)
    return keys


def _outside_pieces(domain: Domain, edge: str, a: float, b: float) -> list[tuple[str, float, float]]:
    seg = domain.segment(edge)
    if seg is None:
        return [(edge, a, b)]
    lo, hi = seg
    out = []
    if a < lo:
        out.append((edge, a, min(b, lo)))
    if b > hi:
        out.append((edge, max(a, hi), b))
    return out


def exit_problem(G: MetricGraph, data: GraphData, domain: Domain) -> ExitSolution:
    """Harmonic exit probabilities and mean exit times by a vertex linear system.

    Inside a segment the exit probability of a category is affine and the mean
    exit time is affine plus ``(x - lo)(hi - x)``; the vertex conditions glue them.
    """
    domain.validate(G)
    inside = sorted(domain.vertices)
    idx = {v: k for k, v in enumerate(inside)}
    cats = exit_categories(G, data, domain)
    cidx = {c: k for k, c in enumerate(cats)}
    n, m = len(inside), len(cats)
    M = np.zeros((n, n))
    # right-hand sides: one column per category, last column the mean time
    R = np.zeros((n, m + 1))

    def end_value(edge: str, x: float) -> tuple[int | None, int | None]:
        """(inside vertex index, category index) of a segment end."""
        p = G.point(edge, x)
        if isinstance(p, Vertex) and p.id in idx:
            return idx[p.id], None
        return None, cidx[("point", p)]

    def point_form(p: GraphPoint) -> tuple[dict[int, float], np.ndarray]:
        """Value at a landing point: coefficients on unknowns and on payoffs."""
        coef: dict[int, float] = {}
        pay = np.zeros(m + 1)
        if isinstance(p, Vertex) and p.id in idx:
            coef[idx[p.id]] = 1.0
            return coef, pay
        if not domain.contains(G, p):
            pay[cidx[("point", p)]] = 1.0
            return coef, pay
        lo, hi = domain.segment(p.edge)
        t = (p.x - lo) / (hi - lo)
        for x_end, wgt in ((lo, 1.0 - t), (hi, t)):
            vi, ci = end_value(p.edge, x_end)
            if vi is not None:
                coef[vi] = coef.get(vi, 0.0) + wgt
            else:
                pay[ci] += wgt
        pay[m] += (p.x - lo) * (hi - p.x)
        return coef, pay

    def cell_form(edge: str, a: float, b: float) -> tuple[dict[int, float], np.ndarray]:
        """Integral of the value over ``[a, b]`` (density one)."""
        coef: dict[int, float] = {}
        pay = np.zeros(m + 1)
        for piece in _outside_pieces(domain, edge, a, b):
            pay[cidx[("cell",) + piece]] += piece[2] - piece[1]
        seg = domain.segment(edge)
        if seg is not None:
            lo, hi = seg
            ia, ib = max(a, lo), min(b, hi)
            if ib > ia:
                L = hi - lo
                # integrals of (x - lo)/L, (hi - x)/L and (x - lo)(hi - x)
                w_hi = ((ib - lo) ** 2 - (ia - lo) ** 2) / (2 * L)
                w_lo = ((hi - ia) ** 2 - (hi - ib) ** 2) / (2 * L)
                for x_end, wgt in ((lo, w_lo), (hi, w_hi)):
                    vi, ci = end_value(edge, x_end)
                    if vi is not None:
                        coef[vi] = coef.get(vi, 0.0) + wgt
                    else:
                        pay[ci] += wgt
                F = lambda x: -((x - lo) ** 2) * (x - lo) / 3 + (hi - lo) * (x - lo) ** 2 / 2
                pay[m] += F(ib) - F(ia)
        return coef, pay

    for v in inside:
        d = data[v]
        r = idx[v]
        M[r, r] += d.c1 + d.c4.total_mass()
        if d.c1 > 0:
            R[r, cidx[("killed", v)]] += d.c1
        R[r, m] += d.c3
        for eid, w in d.c2.items():
            if not w:
                continue
            lo, hi = domain.segment(eid)
            L = hi - lo
            side = G.side_at(v, eid)
            far = hi if side == 0 else lo
            # slope into the edge: (u_far - u_v) / L, plus L for the time part
            M[r, r] += w / L
            vi, ci = end_value(eid, far)
            if vi is not None:
                M[r, vi] -= w / L
            else:
                R[r, ci] += w / L
            R[r, m] += w * L
        for p, w in d.c4.atoms:
            coef, pay = point_form(p)
            for k, c in coef.items():
                M[r, k] -= w * c
            R[r] += w * pay
        for dens in d.c4.densities:
            for a, b, c in dens.cells():
                coef, pay = cell_form(dens.edge, a, b)
                for k, cc in coef.items():
                    M[r, k] -= c * cc
                R[r] += c * pay
    scale = np.max(np.abs(M), axis=1)
    scale[scale == 0] = 1.0
    cond = np.linalg.cond(M / scale[:, None])
    if not cond < COND_LIMIT:
        raise SingularSystemError(cond)
    U = np.linalg.solve(M, R)
    probs = {v: {c: float(U[idx[v], k]) for k, c in enumerate(cats)} for v in inside}
    times = {v: float(U[idx[v], m]) for v in inside}
    return ExitSolution(domain, tuple(cats), probs, times)


def exit_from_point(G: MetricGraph, sol: ExitSolution, p: GraphPoint) -> tuple[dict, float]:
    """Exit law and mean time from an arbitrary point of the region."""
    if isinstance(p, Vertex):
        return dict(sol.probabilities[p.id]), sol.mean_time[p.id]
    lo, hi = sol.domain.segment(p.edge)
    t = (p.x - lo) / (hi - lo)
    probs = {c: 0.0 for c in sol.categories}
    time = (p.x - lo) * (hi - p.x)
    for x_end, wgt in ((lo, 1.0 - t), (hi, t)):
        q = G.point(p.edge, x_end)
        if isinstance(q, Vertex) and q.id in sol.domain.vertices:
            for c, val in sol.probabilities[q.id].items():
                probs[c] += wgt * val
            time += wgt * sol.mean_time[q.id]
        else:
            probs[("point", q)] += wgt
    return probs, time
