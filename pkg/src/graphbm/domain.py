"""Stop regions: the part of the graph a path may roam before it counts as exited."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .metric_graph import (
    GraphPoint,
    GraphValidationError,
    MetricGraph,
    Vertex,
    ball,
    min_incident_length,
)


@dataclass(frozen=True)
class Domain:
    """Closed region made of whole vertices and one coordinate segment per edge.

    A path is stopped when it reaches a segment end that is not an inside
    vertex, or lands by a jump anywhere outside.
    """

    vertices: frozenset[str]
    segments: tuple[tuple[str, float, float], ...]
    label: str = ""

    def segment(self, edge_id: str) -> tuple[float, float] | None:
        for e, lo, hi in self.segments:
            if e == edge_id:
                return lo, hi
        return None

    def contains(self, G: MetricGraph, p: GraphPoint) -> bool:
        """Whether a path sitting at ``p`` keeps running."""
        if isinstance(p, Vertex):
            return p.id in self.vertices
        seg = self.segment(p.edge)
        return seg is not None and seg[0] < p.x < seg[1]

    def exit_points(self, G: MetricGraph) -> list[GraphPoint]:
        out: list[GraphPoint] = []
        for e, lo, hi in self.segments:
            for end in (lo, hi):
                p = G.point(e, end)
                if not (isinstance(p, Vertex) and p.id in self.vertices) and p not in out:
                    out.append(p)
        return out

    def validate(self, G: MetricGraph) -> None:
        seen = set()
        for e, lo, hi in self.segments:
            if e in seen:
                raise GraphValidationError("domain.segments", f"edge {e!r} listed twice")
            seen.add(e)
            if not (0.0 <= lo < hi <= G.length(e)) or math.isinf(hi):
                raise GraphValidationError("domain.segments", f"bad segment on {e!r}: [{lo}, {hi}]")
        for v in self.vertices:
            if v not in G.vertices:
                raise GraphValidationError("domain.vertices", f"unknown vertex {v!r}")
            for e, side in G.incidences(v):
                seg = self.segment(e)
                if seg is None:
                    raise GraphValidationError("domain.segments", f"inside vertex {v!r} needs a segment on {e!r}")
                touch = seg[0] == 0.0 if side == 0 else seg[1] == G.length(e)
                if not touch:
                    raise GraphValidationError("domain.segments", f"segment on {e!r} must reach vertex {v!r}")


def ball_domain(G: MetricGraph, v: str, eps: float) -> Domain:
    """Closed ball of radius ``eps`` around ``v``; exit means reaching distance ``eps``."""
    segs = []
    for s in ball(G, v, eps):
        segs.append((s.edge, s.lo, s.hi))
    if len({e for e, _, _ in segs}) != len(segs):
        raise GraphValidationError("v", "loops at the vertex must be eliminated first")
    return Domain(frozenset([v]), tuple(segs), label=f"ball({v},{eps:g})")


def region_domain(G: MetricGraph, vertices: Iterable[str], reach: float = math.inf) -> Domain:
    """Inside vertices with their full incident edges; external edges cut at ``reach``."""
    inside = frozenset(vertices)
    segs = []
    for eid in G.edge_ids:
        a, b = G.endpoints(eid)
        if a not in inside and b not in inside:
            continue
        if G.is_external(eid):
            if not math.isfinite(reach):
                raise GraphValidationError("reach", "external edges need a finite reach")
            segs.append((eid, 0.0, float(reach)))
        else:
            segs.append((eid, 0.0, G.length(eid)))
    D = Domain(inside, tuple(segs), label="region")
    D.validate(G)
    return D


def whole_graph_domain(G: MetricGraph, reach: float = math.inf) -> Domain:
    return region_domain(G, G.vertices, reach)


def default_shell_radius(G: MetricGraph, domain: Domain, v: str, gap: float) -> float:
    """A tenth of the smallest room around ``v``: incident segments and the jump gap."""
    room = min(gap, min_incident_length(G, v))
    for e, side in G.incidences(v):
        lo, hi = domain.segment(e)
        room = min(room, hi - lo)
    return 0.1 * room


def classify(G: MetricGraph, domain: Domain, p: GraphPoint) -> str:
    if isinstance(p, Vertex):
        return "vertex" if p.id in domain.vertices else "exit"
    return "edge" if domain.contains(G, p) else "exit"

