"""Recovering vertex data from simulated exits out of shrinking balls.

For a ball of radius ``eps`` around ``v`` let ``T`` be the mean exit time and
``P`` the exit law.  With ``nu = P / T`` and
``K = 1 + P(killed)/T + int (1 - exp(-d)) dnu`` the vertex data are the limits
of ``1/K`` (stickiness), ``P(killed)/(T K)`` (killing), ``nu(shell of l) (1 -
exp(-eps)) / K`` (edge weights) and ``nu / K`` away from ``v`` (jumps).  Each is
computed per radius with delta-method errors and extrapolated to 0 by a
low-order polynomial fit in ``eps``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .calculus import FWData, GraphData, GraphFunction, check_data, normalization_integral
from .domain import ball_domain
from .metric_graph import GraphPoint, MetricGraph, Vertex, distance
from .simulator import KIND_KILLED, ExitBatch, Simulation, build_simulation, revive, simulate

DEFAULT_EPSILONS = (0.2, 0.1, 0.05, 0.025)
REL_TOL = 0.02
Z_TOL = 3.0


@dataclass(frozen=True)
class Bin:
    """Coordinate cell ``[lo, hi)`` on ``edge``, or a vertex when ``edge`` is None."""

    edge: str | None
    lo: float
    hi: float
    vertex: str | None = None

    @property
    def label(self) -> str:
        if self.edge is None:
            return f"vertex:{self.vertex}"
        return f"{self.edge}:[{self.lo:g},{self.hi:g})"


def bin_of(p: GraphPoint, width: float) -> Bin:
    if isinstance(p, Vertex):
        return Bin(None, 0.0, 0.0, p.id)
    k = math.floor(p.x / width)
    return Bin(p.edge, k * width, (k + 1) * width)


# ---------------------------------------------------------------------------
# per-radius statistics


@dataclass
class ExitStatistics:
    vertex: str
    eps: float
    n: int
    mean_time: float
    mean_time_se: float
    edges: tuple[str, ...]
    bins: tuple[Bin, ...]
    # per-radius estimates and standard errors of the data components
    values: dict[str, float] = field(default_factory=dict)
    errors: dict[str, float] = field(default_factory=dict)
    K: float = 1.0
    K_se: float = 0.0
    nu: dict[str, float] = field(default_factory=dict)
    mu_bar: dict[str, float] = field(default_factory=dict)
    degenerate: bool = False
    batch: ExitBatch | None = None


def _features(G: MetricGraph, v: str, eps: float, batch: ExitBatch, edges, bin_width: float, r_cut: float):
    """Per-path feature matrix and the labels of its columns."""
    n = len(batch)
    killed = batch.kind == KIND_KILLED
    cols: dict[str, np.ndarray] = {"T": batch.mean_time.astype(float), "kill": killed.astype(float)}
    for e in edges:
        cols[f"edge:{e}"] = np.zeros(n)
    jump = np.zeros(n)
    far = np.zeros(n)
    bins: dict[Bin, np.ndarray] = {}
    shell_end = {}
    for e in edges:
        side = G.side_at(v, e)
        shell_end[e] = eps if side == 0 else G.length(e) - eps
    at_shell = np.zeros(n, dtype=bool)
    for e in edges:
        hit = ~killed & (batch.edge == G.edge_ids.index(e)) & (batch.x == shell_end[e])
        cols[f"edge:{e}"][hit] = 1.0
        at_shell |= hit
    for k in np.nonzero(~killed & ~at_shell)[0]:
        p = batch.point(int(k))
        d = distance(G, Vertex(v), p)
        w = -math.expm1(-d)
        if d > r_cut:
            far[k] = w
            continue
        jump[k] = w
        b = bin_of(p, bin_width)
        bins.setdefault(b, np.zeros(n))[k] = 1.0
    cols["jump"] = jump
    cols["far"] = far
    order = sorted(bins, key=lambda b: (b.edge or "", b.vertex or "", b.lo))
    for b in order:
        cols[f"bin:{b.label}"] = bins[b]
    return cols, tuple(order)


def _components(m: Mapping[str, float], eps: float, edges, bins) -> dict[str, float]:
    """Data components from the feature means ``m``."""
    T = m["T"]
    s = -math.expm1(-eps)
    edge_mass = sum(m[f"edge:{e}"] for e in edges) * s
    K = 1.0 + (m["kill"] + edge_mass + m["jump"] + m["far"]) / T
    out = {
        "K": K,
        "c3": 1.0 / K,
        "c1_delta": m["kill"] / (T * K),
        "c1_inf": m["far"] / (T * K),
        # int (1 - exp(-d)) dc4 from the actual landing distances
        "c4_weighted": m["jump"] / (T * K),
    }
    for e in edges:
        out[f"c2:{e}"] = m[f"edge:{e}"] * s / (T * K)
    for b in bins:
        out[f"c4:{b.label}"] = m[f"bin:{b.label}"] / (T * K)
    return out


def _delta_method(cols: Mapping[str, np.ndarray], fn: Callable[[dict], dict]) -> tuple[dict, dict]:
    names = list(cols)
    X = np.column_stack([cols[c] for c in names])
    n = X.shape[0]
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1) / n
    base = fn(dict(zip(names, mean)))
    keys = list(base)
    J = np.zeros((len(keys), len(names)))
    for j, c in enumerate(names):
        h = 1e-6 * max(abs(mean[j]), 1e-8)
        up = mean.copy()
        dn = mean.copy()
        up[j] += h
        dn[j] -= h
        fu = fn(dict(zip(names, up)))
        fd = fn(dict(zip(names, dn)))
        J[:, j] = [(fu[k] - fd[k]) / (2 * h) for k in keys]
    var = np.einsum("ij,jk,ik->i", J, np.atleast_2d(cov), J)
    se = {k: float(math.sqrt(max(v, 0.0))) for k, v in zip(keys, var)}
    return base, se


def statistics_from_batch(
    G: MetricGraph,
    v: str,
    eps: float,
    batch: ExitBatch,
    *,
    bin_width: float = 0.5,
    r_cut: float = math.inf,
) -> ExitStatistics:
    """Per-radius components of one simulated batch.

    Exits farther than ``r_cut`` from ``v`` count towards killing at infinity.
    The default never cuts: a finite jump may land arbitrarily far out on a
    half-line, and any finite cutoff would book it as escape.
    """
    edges = tuple(G.incident_edges(v))
    cols, bins = _features(G, v, eps, batch, edges, bin_width, r_cut)
    vals, ses = _delta_method(cols, lambda m: _components(m, eps, edges, bins))
    n = len(batch)
    T = float(cols["T"].mean())
    T_se = float(cols["T"].std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    nu = {name: float(c.mean()) / T for name, c in cols.items() if name not in ("T", "jump", "far")}
    K = vals.pop("K")
    K_se = ses.pop("K")
    mu_bar = {}
    s = -math.expm1(-eps)
    for e in edges:
        mu_bar[f"({e},shell)"] = nu[f"edge:{e}"] * s / K
    mu_bar["cemetery"] = nu["kill"] / K
    mu_bar["jumps"] = float(cols["jump"].mean()) / T / K
    mu_bar["infinity"] = float(cols["far"].mean()) / T / K
    return ExitStatistics(v, eps, n, T, T_se, edges, bins, vals, ses, K, K_se, nu, mu_bar, batch=batch)


def exit_statistics(
    G: MetricGraph,
    data: GraphData,
    v: str,
    eps: float,
    n: int,
    seed: int,
    *,
    delta: float | None = None,
    stream: int = 0,
    workers: int = 1,
    bin_width: float = 0.5,
    revival: Sequence[tuple[GraphPoint, float]] | None = None,
    r_cut: float = math.inf,
) -> ExitStatistics:
    """Simulate ``n`` exits from the ``eps``-ball around ``v`` and summarise them.

    ``revival`` restarts killed paths from that law before summarising.
    """
    d = data[v]
    check_data(G, d)
    if d.is_trap():
        edges = tuple(G.incident_edges(v))
        vals = {"c3": 1.0, "c1_delta": 0.0, "c1_inf": 0.0, "c4_weighted": 0.0, **{f"c2:{e}": 0.0 for e in edges}}
        return ExitStatistics(
            v, eps, n, math.inf, 0.0, edges, (), vals, {k: 0.0 for k in vals}, 1.0, 0.0, degenerate=True
        )
    if delta is not None and delta > eps / 10 * (1 + 1e-12):
        raise ValueError("shell radius must not exceed eps/10")
    sim = build_simulation(G, data, ball_domain(G, v, eps), eps / 10 if delta is None else delta)
    batch = simulate(sim, Vertex(v), n, seed, stream=stream, workers=workers)
    if revival is not None:
        batch = revive(sim, batch, revival, seed, stream=stream + 1)
    return statistics_from_batch(G, v, eps, batch, bin_width=bin_width, r_cut=r_cut)


# ---------------------------------------------------------------------------
# extrapolation


@dataclass(frozen=True)
class Extrapolation:
    value: float
    se: float
    slope: float
    per_eps: tuple[float, ...]
    per_eps_se: tuple[float, ...]


def extrapolate(
    eps: Sequence[float], y: Sequence[float], se: Sequence[float], order: int = 2
) -> Extrapolation:
    """Weighted least squares fit of a polynomial in ``eps``; returns its value at 0.

    ``order=1`` is the plain linear fit.  The quadratic default removes the
    curvature of the per-radius curves, which is visible at the usual radii.
    """
    e = np.asarray(eps, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.asarray(se, dtype=float)
    if e.size <= order:
        raise ValueError(f"need more than {order} radii for an order-{order} fit")
    X = np.vander(e, order + 1, increasing=True)
    pos = s[s > 0]
    if pos.size:
        # exact zeros (no events at that radius) get the best error seen
        s_w = np.where(s > 0, s, pos.min())
        w = 1.0 / s_w**2
    else:
        w = np.ones_like(e)
    XtW = X.T * w
    A = XtW @ X
    coef = np.linalg.solve(A, XtW @ y)
    # propagate the per-point errors through the linear map y -> coef
    H = np.linalg.solve(A, XtW)
    cov = (H * s**2) @ H.T
    return Extrapolation(float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0))), float(coef[1]), tuple(y), tuple(s))


def extrapolate_linear(eps: Sequence[float], y: Sequence[float], se: Sequence[float]) -> Extrapolation:
    return extrapolate(eps, y, se, order=1)


@dataclass(frozen=True)
class FWEstimate:
    vertex: str
    epsilons: tuple[float, ...]
    components: Mapping[str, Extrapolation]
    warnings: tuple[str, ...] = ()

    def value(self, name: str) -> float:
        return self.components[name].value

    def normalization(self) -> tuple[float, float]:
        """``c1 + sum c2 + c3 + int (1 - exp(-d)) dc4`` of the estimate and its error bound."""
        total, var = 0.0, 0.0
        for name, ex in self.components.items():
            if name.startswith("c4:"):
                continue
            total += ex.value
            var += ex.se**2
        return total, math.sqrt(var)


def feller_data_estimate(stats: Sequence[ExitStatistics], order: int = 2) -> FWEstimate:
    """Extrapolate every per-radius component to radius zero."""
    if len(stats) < order + 2:
        raise ValueError(f"need at least {order + 2} radii")
    stats = sorted(stats, key=lambda s: -s.eps)
    v = stats[0].vertex
    eps = tuple(s.eps for s in stats)
    if any(s.degenerate for s in stats):
        names = stats[0].values
        comps = {k: Extrapolation(stats[0].values[k], 0.0, 0.0, (), ()) for k in names}
        return FWEstimate(v, eps, comps)
    names = []
    for s in stats:
        for k in s.values:
            if k not in names:
                names.append(k)
    comps = {}
    notes = []
    for k in names:
        y = [s.values.get(k, 0.0) for s in stats]
        se = [s.errors.get(k, 0.0) for s in stats]
        comps[k] = extrapolate(eps, y, se, order)
        # the per-radius curves are monotone in eps; flag wiggles beyond the error bars
        diffs = np.diff(y)
        tol = 3.0 * np.hypot(se[:-1], se[1:])
        if np.any(diffs > tol) and np.any(diffs < -tol):
            notes.append(f"{k}: non-monotone in eps beyond error bars")
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return FWEstimate(v, eps, comps, tuple(notes))


def estimate_vertex(
    G: MetricGraph,
    data: GraphData,
    v: str,
    n: int,
    seed: int,
    *,
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
    stream: int = 0,
    workers: int = 1,
    bin_width: float = 0.5,
    revival: Sequence[tuple[GraphPoint, float]] | None = None,
    order: int = 2,
    r_cut: float = math.inf,
) -> tuple[list[ExitStatistics], FWEstimate]:
    """Exit statistics at every radius and the extrapolated data.

    Radius ``k`` uses streams from ``stream + 1000 k`` so revival rounds never
    collide with another radius.
    """
    stats = [
        exit_statistics(
            G, data, v, eps, n, seed, stream=stream + 1000 * k, workers=workers, bin_width=bin_width,
            revival=revival, r_cut=r_cut,
        )
        for k, eps in enumerate(epsilons)
    ]
    return stats, feller_data_estimate(stats, order)


# ---------------------------------------------------------------------------
# comparison with configured data


def truth_components(G: MetricGraph, d: FWData, bins: Sequence[str], bin_width: float) -> dict[str, float]:
    """Configured data in the component naming of the estimator."""
    out = {"c1_delta": d.c1_delta, "c1_inf": d.c1_inf, "c3": d.c3}
    out["c4_weighted"] = normalization_integral(G, d.vertex, d.c4)
    for e in G.incident_edges(d.vertex):
        out[f"c2:{e}"] = d.c2.get(e, 0.0)
    masses: dict[str, float] = {}
    for p, w in d.c4.atoms:
        lab = "c4:" + bin_of(p, bin_width).label
        masses[lab] = masses.get(lab, 0.0) + w
    for dens in d.c4.densities:
        for a, b, c in dens.cells():
            k0 = math.floor(a / bin_width)
            k1 = math.ceil(b / bin_width)
            for k in range(k0, k1):
                lo, hi = k * bin_width, (k + 1) * bin_width
                overlap = min(b, hi) - max(a, lo)
                if overlap > 0:
                    lab = "c4:" + Bin(dens.edge, lo, hi).label
                    masses[lab] = masses.get(lab, 0.0) + c * overlap
    for lab in bins:
        masses.setdefault(lab, 0.0)
    out.update(masses)
    return out


@dataclass(frozen=True)
class ComponentVerdict:
    name: str
    estimate: float
    se: float
    truth: float
    z: float
    rel_error: float
    passed: bool


@dataclass(frozen=True)
class CompareReport:
    vertex: str
    verdicts: tuple[ComponentVerdict, ...]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def failures(self) -> list[ComponentVerdict]:
        return [v for v in self.verdicts if not v.passed]


def compare_report(
    G: MetricGraph,
    est: FWEstimate,
    truth: FWData,
    *,
    bin_width: float = 0.5,
    z_tol: float = Z_TOL,
    rel_tol: float = REL_TOL,
) -> CompareReport:
    """PASS a component when ``|est - truth| <= max(z_tol * se, rel_tol * |truth|)``."""
    bins = [k for k in est.components if k.startswith("c4:")]
    want = truth_components(G, truth, bins, bin_width)
    out = []
    for name in sorted(set(want) | set(est.components)):
        ex = est.components.get(name)
        e, se = (ex.value, ex.se) if ex is not None else (0.0, 0.0)
        t = want.get(name, 0.0)
        err = e - t
        z = err / se if se > 0 else (0.0 if err == 0 else math.copysign(math.inf, err))
        rel = abs(err) / abs(t) if t else (0.0 if err == 0 else math.inf)
        ok = abs(err) <= max(z_tol * se, rel_tol * abs(t))
        out.append(ComponentVerdict(name, e, se, t, z, rel, ok))
    return CompareReport(est.vertex, tuple(out))


# ---------------------------------------------------------------------------
# closed-form per-radius curves (ball of radius eps composed of exact shells)


def exact_curves(G: MetricGraph, d: FWData, eps: float) -> dict[str, float]:
    """Per-radius components implied by the exact exit law of the ``eps``-ball."""
    p2 = d.p2
    s = -math.expm1(-eps) / eps
    i4 = normalization_integral(G, d.vertex, d.c4)
    N = p2 * eps + d.c3 + d.c1 + p2 * s + i4
    out = {"c3": (p2 * eps + d.c3) / N, "c1_delta": d.c1_delta / N, "c1_inf": d.c1_inf / N}
    for e in G.incident_edges(d.vertex):
        out[f"c2:{e}"] = s * d.c2.get(e, 0.0) / N
    return out


# ---------------------------------------------------------------------------
# generator check


def dynkin_ratio_from_batch(G: MetricGraph, v: str, f: GraphFunction, batch: ExitBatch) -> tuple[float, float]:
    """``(mean f(X) - f(v)) / mean T`` with ``f = 0`` at the cemetery, and its standard error."""
    fv = f.value(G, Vertex(v))
    n = len(batch)
    vals = np.zeros(n)
    alive = batch.kind != KIND_KILLED
    for j, e in enumerate(G.edge_ids):
        hit = alive & (batch.edge == j)
        if hit.any():
            vals[hit] = f.on(e)(batch.x[hit])
    for j, w in enumerate(G.vertices):
        hit = alive & (batch.edge < 0) & (batch.vertex == j)
        if hit.any():
            vals[hit] = f.value(G, Vertex(w))
    cols = {"F": vals - fv, "T": batch.mean_time.astype(float)}
    base, se = _delta_method(cols, lambda m: {"r": m["F"] / m["T"]})
    return base["r"], se["r"]

