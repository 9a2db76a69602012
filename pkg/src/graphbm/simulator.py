"""Exit-problem simulation of Brownian motion on a metric graph.

Inside an edge a path moves to one of the two ends of its current segment with
the exact harmonic probabilities.  At a vertex it takes one exact step out of a
small star-shaped ball (the shell kernel).  All paths advance in lockstep on
numpy arrays; every random draw is addressed by the path's own counter, so a
path's history does not depend on batching or on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .bm1d import exit_interval_batch
from .calculus import FWData, GraphData, check_data, support_gap
from .domain import Domain, default_shell_radius
from .metric_graph import GraphPoint, GraphValidationError, Interior, MetricGraph, Vertex, min_incident_length
from .rng import CounterRng

DEFAULT_STEP_BUDGET = 10_000_000
DEFAULT_CHUNK = 25_000

KIND_EXIT = 0
KIND_KILLED = 1

# draw tags within one event
_TAG_CHOICE = 1
_TAG_TARGET = 2
_TAG_CELL = 3
_TAG_SIDE = 4
_TAG_REVIVE = 5
_WALK_STREAM_BIT = 1 << 31


class StepBudgetExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# shell kernel


@dataclass(frozen=True)
class JumpTarget:
    """One piece of the normalized jump law: an atom or a uniform density cell."""

    prob: float
    point: GraphPoint | None = None
    edge: str | None = None
    a: float = 0.0
    b: float = 0.0


@dataclass(frozen=True)
class ShellKernel:
    vertex: str
    delta: float
    edges: tuple[str, ...]
    edge_probs: tuple[float, ...]
    kill_prob: float
    jump_prob: float
    jump_targets: tuple[JumpTarget, ...]
    mean_time: float

    def total(self) -> float:
        return math.fsum(self.edge_probs) + self.kill_prob + self.jump_prob

    @property
    def is_trap(self) -> bool:
        return not self.edge_probs and self.kill_prob == 0 and self.jump_prob == 0


def jump_law(d: FWData) -> tuple[float, tuple[JumpTarget, ...]]:
    """Total mass of ``c4`` and its normalized pieces."""
    pieces = [(w, JumpTarget(0.0, point=p)) for p, w in d.c4.atoms]
    for dens in d.c4.densities:
        for a, b, c in dens.cells():
            pieces.append(((b - a) * c, JumpTarget(0.0, edge=dens.edge, a=a, b=b)))
    mass = math.fsum(w for w, _ in pieces)
    if mass == 0:
        return 0.0, ()
    return mass, tuple(JumpTarget(w / mass, t.point, t.edge, t.a, t.b) for w, t in pieces)


def shell_kernel(G: MetricGraph, d: FWData, delta: float) -> ShellKernel:
    """Exit law and mean duration of the first exit from the ball of radius ``delta``."""
    v = d.vertex
    if not delta > 0:
        raise GraphValidationError("delta", "shell radius must be positive")
    if delta >= min_incident_length(G, v):
        raise GraphValidationError("delta", f"shell radius {delta} reaches past an edge at {v!r}")
    gap = support_gap(G, v, d.c4)
    if not d.c4.is_empty() and delta >= gap:
        raise GraphValidationError("delta", f"shell radius {delta} must stay below the jump gap {gap}")
    p2 = d.p2
    w4, targets = jump_law(d)
    D = p2 + delta * (d.c1 + w4)
    edges = tuple(G.incident_edges(v))
    if D == 0:
        return ShellKernel(v, delta, (), (), 0.0, 0.0, (), math.inf)
    probs = tuple(d.c2.get(e, 0.0) / D for e in edges)
    kill = delta * d.c1 / D
    jump = delta * w4 / D
    mean = delta * (p2 * delta + d.c3) / D
    k = ShellKernel(v, delta, edges, probs, kill, jump, targets, mean)
    assert abs(k.total() - 1.0) < 1e-12
    return k


# ---------------------------------------------------------------------------
# records


@dataclass
class ExitBatch:
    """Per-path outcomes in path order.

    ``kind`` is 0 for an exit point and 1 for killing.  Exit points are
    ``(edge, x)`` with ``edge = -1`` meaning the vertex ``vertex``; killed paths
    store the killing vertex in ``vertex``.
    """

    graph: MetricGraph
    paths: np.ndarray
    kind: np.ndarray
    vertex: np.ndarray
    edge: np.ndarray
    x: np.ndarray
    mean_time: np.ndarray
    sampled_time: np.ndarray | None
    revivals: np.ndarray
    steps: np.ndarray

    def __len__(self) -> int:
        return int(self.paths.size)

    @staticmethod
    def concat(parts: Sequence["ExitBatch"]) -> "ExitBatch":
        first = parts[0]
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
        sampled = None if first.sampled_time is None else cat("sampled_time")
        return ExitBatch(
            first.graph,
            cat("paths"),
            cat("kind"),
            cat("vertex"),
            cat("edge"),
            cat("x"),
            cat("mean_time"),
            sampled,
            cat("revivals"),
            cat("steps"),
        )

    def point(self, k: int) -> GraphPoint | None:
        if self.kind[k] != KIND_EXIT:
            return None
        if self.edge[k] < 0:
            return Vertex(self.graph.vertices[self.vertex[k]])
        return Interior(self.graph.edge_ids[self.edge[k]], float(self.x[k]))

    def records(self) -> list["ExitRecord"]:
        out = []
        for k in range(len(self)):
            killed = self.kind[k] == KIND_KILLED
            out.append(
                ExitRecord(
                    int(self.paths[k]),
                    None if killed else self.point(k),
                    self.graph.vertices[self.vertex[k]] if killed else None,
                    float(self.mean_time[k]),
                    None if self.sampled_time is None else float(self.sampled_time[k]),
                    int(self.revivals[k]),
                )
            )
        return out


@dataclass(frozen=True)
class ExitRecord:
    path: int
    exit_point: GraphPoint | None
    killed_at: str | None
    elapsed_mean_time: float
    elapsed_sampled_time: float | None = None
    revival_count: int = 0

    @property
    def killed(self) -> bool:
        return self.exit_point is None


# ---------------------------------------------------------------------------
# engine


@dataclass
class Simulation:
    """Everything the event loop needs, flattened into arrays."""

    graph: MetricGraph
    data: GraphData
    domain: Domain
    deltas: dict[str, float]
    kernels: dict[str, ShellKernel] = field(default_factory=dict)
    step_budget: int = DEFAULT_STEP_BUDGET
    sample_time: bool = False

    def __post_init__(self):
        G, dom = self.graph, self.domain
        dom.validate(G)
        self.vidx = {v: k for k, v in enumerate(G.vertices)}
        self.eidx = {e: k for k, e in enumerate(G.edge_ids)}
        ne, nv = len(G.edge_ids), len(G.vertices)
        self.lengths = np.array([G.length(e) for e in G.edge_ids])
        self.seg_lo = np.full(ne, np.nan)
        self.seg_hi = np.full(ne, np.nan)
        # inside vertex index at the segment ends, -1 when the end is an exit
        self.lo_vertex = np.full(ne, -1, dtype=np.int64)
        self.hi_vertex = np.full(ne, -1, dtype=np.int64)
        for e, lo, hi in dom.segments:
            k = self.eidx[e]
            self.seg_lo[k], self.seg_hi[k] = lo, hi
            a, b = G.endpoints(e)
            if lo == 0.0 and a in dom.vertices:
                self.lo_vertex[k] = self.vidx[a]
            if b is not None and hi == G.length(e) and b in dom.vertices:
                self.hi_vertex[k] = self.vidx[b]
        self.inside = np.zeros(nv, dtype=bool)
        for v in dom.vertices:
            self.inside[self.vidx[v]] = True
        for v in dom.vertices:
            if v not in self.kernels:
                self.kernels[v] = shell_kernel(G, self.data[v], self.deltas[v])
        self._tables()

    def _tables(self) -> None:
        G = self.graph
        nv = len(G.vertices)
        width = max((len(k.edges) + 2 for k in self.kernels.values()), default=2)
        jwidth = max((len(k.jump_targets) for k in self.kernels.values()), default=1) or 1
        self.cum = np.full((nv, width), 2.0)
        self.opt_kind = np.zeros((nv, width), dtype=np.int8)  # 0 edge, 1 kill, 2 jump
        self.opt_edge = np.full((nv, width), -1, dtype=np.int64)
        self.opt_x = np.zeros((nv, width))
        self.hold = np.zeros(nv)
        self.trap = np.zeros(nv, dtype=bool)
        self.jcum = np.full((nv, jwidth), 2.0)
        self.j_vertex = np.full((nv, jwidth), -1, dtype=np.int64)
        self.j_edge = np.full((nv, jwidth), -1, dtype=np.int64)
        self.j_a = np.zeros((nv, jwidth))
        self.j_b = np.zeros((nv, jwidth))
        self.j_cell = np.zeros((nv, jwidth), dtype=bool)
        for v, k in self.kernels.items():
            i = self.vidx[v]
            if k.is_trap:
                self.trap[i] = True
                continue
            probs, col = [], 0
            for e, p in zip(k.edges, k.edge_probs):
                ei = self.eidx[e]
                self.opt_kind[i, col] = 0
                self.opt_edge[i, col] = ei
                self.opt_x[i, col] = k.delta if G.side_at(v, e) == 0 else G.length(e) - k.delta
                probs.append(p)
                col += 1
            self.opt_kind[i, col], self.opt_kind[i, col + 1] = 1, 2
            probs += [k.kill_prob, k.jump_prob]
            c = np.cumsum(probs)
            c[-1] = 1.0
            self.cum[i, : len(c)] = c
            self.hold[i] = k.mean_time
            jc = np.cumsum([t.prob for t in k.jump_targets])
            if jc.size:
                jc[-1] = 1.0
                self.jcum[i, : jc.size] = jc
            for j, t in enumerate(k.jump_targets):
                if t.point is not None:
                    if isinstance(t.point, Vertex):
                        self.j_vertex[i, j] = self.vidx[t.point.id]
                    else:
                        self.j_edge[i, j] = self.eidx[t.point.edge]
                        self.j_a[i, j] = self.j_b[i, j] = t.point.x
                else:
                    self.j_cell[i, j] = True
                    self.j_edge[i, j] = self.eidx[t.edge]
                    self.j_a[i, j], self.j_b[i, j] = t.a, t.b

    # -- running ------------------------------------------------------------
    def run(
        self,
        paths: np.ndarray,
        start: GraphPoint | Sequence[GraphPoint],
        rng: CounterRng,
        step0: np.ndarray | None = None,
    ) -> ExitBatch:
        G = self.graph
        n = paths.size
        at_vertex = np.zeros(n, dtype=bool)
        vert = np.full(n, -1, dtype=np.int64)
        edge = np.full(n, -1, dtype=np.int64)
        x = np.zeros(n)
        starts = [start] * n if isinstance(start, (Vertex, Interior)) else list(start)
        for k, p in enumerate(starts):
            if isinstance(p, Vertex):
                vert[k] = self.vidx[p.id]
                at_vertex[k] = True
            else:
                edge[k] = self.eidx[p.edge]
                x[k] = p.x
        kind = np.full(n, KIND_EXIT, dtype=np.int8)
        mean_time = np.zeros(n)
        sampled = np.zeros(n) if self.sample_time else None
        steps = np.zeros(n, dtype=np.int64) if step0 is None else step0.astype(np.int64).copy()
        base_steps = steps.copy()
        done = np.zeros(n, dtype=bool)

        # settle starting points that are already outside
        self._land(np.arange(n), at_vertex, vert, edge, x, done)

        while True:
            active = np.nonzero(~done)[0]
            if active.size == 0:
                break
            if np.any(steps[active] - base_steps[active] > self.step_budget):
                raise StepBudgetExceeded(f"a path used more than {self.step_budget} events")
            vs = active[at_vertex[active]]
            es = active[~at_vertex[active]]
            if vs.size:
                self._vertex_step(vs, paths, rng, at_vertex, vert, edge, x, kind, mean_time, sampled, steps, done)
            if es.size:
                self._edge_step(es, paths, rng, at_vertex, vert, edge, x, mean_time, sampled, steps, done)
        return ExitBatch(
            G, paths.copy(), kind, vert, edge, x, mean_time, sampled, np.zeros(n, dtype=np.int64), steps
        )

    def _land(self, idx, at_vertex, vert, edge, x, done) -> None:
        """Resolve freshly placed paths: inside vertex, inside edge, or exit."""
        if idx.size == 0:
            return
        on_v = idx[at_vertex[idx]]
        out_v = on_v[~self.inside[vert[on_v]]]
        done[out_v] = True
        edge[out_v] = -1
        on_e = idx[~at_vertex[idx]]
        e = edge[on_e]
        lo, hi = self.seg_lo[e], self.seg_hi[e]
        xe = x[on_e]
        inside = (xe > lo) & (xe < hi)  # nan segments compare False
        done[on_e[~inside]] = True

    def _vertex_step(self, idx, paths, rng, at_vertex, vert, edge, x, kind, mean_time, sampled, steps, done):
        v = vert[idx]
        if np.any(self.trap[v]):
            raise StepBudgetExceeded("path reached a trap vertex; it never leaves")
        u, u2 = rng.uniform_pair(paths[idx], steps[idx], _TAG_CHOICE)
        col = (u[:, None] > self.cum[v]).sum(axis=1)
        ok = self.opt_kind[v, col]
        hold = self.hold[v]
        mean_time[idx] += hold
        if sampled is not None:
            sampled[idx] += -hold * np.log(u2)
        # into an edge
        m = ok == 0
        sel = idx[m]
        at_vertex[sel] = False
        edge[sel] = self.opt_edge[v[m], col[m]]
        x[sel] = self.opt_x[v[m], col[m]]
        # killed
        m = ok == 1
        sel = idx[m]
        kind[sel] = KIND_KILLED
        done[sel] = True
        # jump
        m = ok == 2
        if np.any(m):
            sel = idx[m]
            vv = v[m]
            uj, uc = rng.uniform_pair(paths[sel], steps[sel], _TAG_TARGET)
            j = (uj[:, None] > self.jcum[vv]).sum(axis=1)
            tv = self.j_vertex[vv, j]
            te = self.j_edge[vv, j]
            a, b = self.j_a[vv, j], self.j_b[vv, j]
            cell = self.j_cell[vv, j]
            pos = np.where(cell, a + (b - a) * uc, a)
            to_v = tv >= 0
            at_vertex[sel] = to_v
            vert[sel] = np.where(to_v, tv, vert[sel])
            edge[sel] = np.where(to_v, -1, te)
            x[sel] = np.where(to_v, 0.0, pos)
            self._land(sel, at_vertex, vert, edge, x, done)
        steps[idx] += 1

    def _edge_step(self, idx, paths, rng, at_vertex, vert, edge, x, mean_time, sampled, steps, done):
        e = edge[idx]
        lo, hi = self.seg_lo[e], self.seg_hi[e]
        y = x[idx] - lo
        L = hi - lo
        if sampled is not None:
            walk = rng.child(rng.stream ^ _WALK_STREAM_BIT)
            up, t, _ = exit_interval_batch(x[idx], lo, hi, walk, paths[idx], steps[idx] * 4096)
            sampled[idx] += t
        else:
            up = rng.uniform(paths[idx], steps[idx], _TAG_SIDE) < y / L
        mean_time[idx] += np.where(up, (L * L - y * y) / 3.0, y * (2.0 * L - y) / 3.0)
        end_v = np.where(up, self.hi_vertex[e], self.lo_vertex[e])
        end_x = np.where(up, hi, lo)
        back = end_v >= 0
        sel = idx[back]
        at_vertex[sel] = True
        vert[sel] = end_v[back]
        edge[sel] = -1
        out = idx[~back]
        x[out] = end_x[~back]
        # canonical exit points: edge ends are vertices
        ends = self.graph_endpoint_index(edge[out], x[out])
        is_v = ends >= 0
        vert[out[is_v]] = ends[is_v]
        edge[out[is_v]] = -1
        done[out] = True
        steps[idx] += 1

    def graph_endpoint_index(self, e: np.ndarray, xs: np.ndarray) -> np.ndarray:
        out = np.full(e.size, -1, dtype=np.int64)
        for k in range(e.size):
            a, b = self.graph.endpoints(self.graph.edge_ids[e[k]])
            if xs[k] == 0.0:
                out[k] = self.vidx[a]
            elif b is not None and xs[k] == self.lengths[e[k]]:
                out[k] = self.vidx[b]
        return out


def build_simulation(
    G: MetricGraph,
    data: GraphData,
    domain: Domain,
    delta: float | None = None,
    *,
    sample_time: bool = False,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> Simulation:
    """Checks the data and picks shell radii (``delta`` overrides the default)."""
    for v in domain.vertices:
        check_data(G, data[v])
    deltas = {}
    for v in domain.vertices:
        gap = support_gap(G, v, data[v].c4)
        deltas[v] = default_shell_radius(G, domain, v, gap) if delta is None else float(delta)
    return Simulation(G, data, domain, deltas, step_budget=step_budget, sample_time=sample_time)


def _run_chunk(args) -> ExitBatch:
    sim, lo, hi, start, seed, stream = args
    return sim.run(np.arange(lo, hi, dtype=np.int64), start, CounterRng(seed, stream))


def _chunks(n: int, chunk: int) -> list[tuple[int, int]]:
    return [(k, min(n, k + chunk)) for k in range(0, n, chunk)]


def simulate(
    sim: Simulation,
    start: GraphPoint,
    n_paths: int,
    seed: int,
    *,
    stream: int = 0,
    workers: int = 1,
    chunk: int = DEFAULT_CHUNK,
) -> ExitBatch:
    """Run ``n_paths`` independent paths from ``start``; path ``k`` uses counter stream ``k``."""
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    jobs = [(sim, lo, hi, start, seed, stream) for lo, hi in _chunks(n_paths, chunk)]
    if workers <= 1 or len(jobs) == 1:
        parts = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    return ExitBatch.concat(parts)


def simulate_until_exit(
    G: MetricGraph,
    data: GraphData,
    start: GraphPoint,
    domain: Domain,
    rng: CounterRng,
    *,
    path: int = 0,
    delta: float | None = None,
    sample_time: bool = False,
) -> ExitRecord:
    """Single-path convenience wrapper around the batch engine."""
    sim = build_simulation(G, data, domain, delta, sample_time=sample_time)
    return sim.run(np.array([path], dtype=np.int64), start, rng).records()[0]


def revive(
    sim: Simulation,
    batch: ExitBatch,
    q: Sequence[tuple[GraphPoint, float]],
    seed: int,
    *,
    stream: int = 0,
    max_rounds: int = 100_000,
) -> ExitBatch:
    """Restart every killed path from a draw of ``q`` until it leaves the region.

    Round ``r`` of path ``k`` uses stream ``stream + r`` of the same seed, so the
    revived batch is as reproducible as the original one.
    """
    probs = np.array([w for _, w in q], dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise GraphValidationError("q", "revival law must be a probability measure")
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    points = [p for p, _ in q]
    out = ExitBatch.concat([batch])
    rounds = 0
    while True:
        killed = np.nonzero(out.kind == KIND_KILLED)[0]
        if killed.size == 0:
            break
        rounds += 1
        if rounds > max_rounds:
            raise StepBudgetExceeded("revival did not terminate")
        rng = CounterRng(seed, stream + rounds)
        u = rng.uniform(out.paths[killed], np.zeros(killed.size, dtype=np.int64), _TAG_REVIVE)
        pick = (u[:, None] > cum[None, :]).sum(axis=1)
        starts = [points[j] for j in pick]
        res = sim.run(out.paths[killed], starts, rng, step0=np.ones(killed.size, dtype=np.int64))
        out.kind[killed] = res.kind
        out.vertex[killed] = res.vertex
        out.edge[killed] = res.edge
        out.x[killed] = res.x
        out.mean_time[killed] += res.mean_time
        if out.sampled_time is not None:
            out.sampled_time[killed] += res.sampled_time
        out.steps[killed] += res.steps
        out.revivals[killed] += 1
    return out


BATCH_HEADER = ("path_id", "outcome", "edge", "x", "elapsed_mean_time", "revival_count")


def batch_rows(batch: ExitBatch) -> Iterator[tuple]:
    """CSV rows of a batch; vertex exits and killings put the vertex id in ``edge`` and leave ``x`` empty."""
    G = batch.graph
    for k in range(len(batch)):
        t = float(batch.mean_time[k])
        r = int(batch.revivals[k])
        pid = int(batch.paths[k])
        if batch.kind[k] == KIND_KILLED:
            yield pid, "killed", G.vertices[batch.vertex[k]], None, t, r
        elif batch.edge[k] < 0:
            yield pid, "exit", G.vertices[batch.vertex[k]], None, t, r
        else:
            yield pid, "exit", G.edge_ids[batch.edge[k]], float(batch.x[k]), t, r


def exit_keys(sim: Simulation, batch: ExitBatch, cells: Iterable[tuple[str, float, float]] = ()) -> list:
    """Category key per path: ``("killed", v)``, ``("point", p)`` or ``("cell", e, a, b)``.

    A jump landing in one of ``cells`` is reported as that cell; other exits by
    their exact point.
    """
    cells = list(cells)
    keys = []
    for k in range(len(batch)):
        if batch.kind[k] == KIND_KILLED:
            keys.append(("killed", sim.graph.vertices[batch.vertex[k]]))
            continue
        p = batch.point(k)
        key = ("point", p)
        if isinstance(p, Interior):
            for e, a, b in cells:
                if p.edge == e and a < p.x < b:
                    key = ("cell", e, a, b)
                    break
        keys.append(key)
    return keys
