"""Command line front end: ``graphbm <command> ...``.

Exit codes: 0 success, 1 invalid input, 2 verification failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from typing import Sequence

from .calculus import (
    GraphData,
    GraphFunction,
    check_graph_data,
    graph_data_to_list,
    parse_function,
    parse_graph_data,
    revive_data,
)
from .domain import ball_domain, whole_graph_domain
from .estimator import DEFAULT_EPSILONS, compare_report, estimate_vertex
from .metric_graph import GraphPoint, GraphValidationError, MetricGraph, Vertex, load_graph, parse_point, point_text
from .output import dumps, fmt, write_csv
from .resolvent import SingularSystemError, boundary_residual_check, solve_resolvent
from .simulator import BATCH_HEADER, batch_rows, build_simulation, revive, simulate
from .verification import CRITERIA, DEFAULT_PATHS, run_verification

SEED_ENV = "GRAPHBM_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which is reserved
        raise UsageError(message)


# ---------------------------------------------------------------------------
# argument helpers


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of integers: {text!r}") from None


def resolve_seed(flag: int | None) -> int:
    """``--seed`` wins over ``GRAPHBM_SEED``; with neither the command fails."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise GraphValidationError(SEED_ENV, f"not an integer: {env!r}") from None
    raise GraphValidationError("seed", f"a seed is required (--seed or {SEED_ENV})")


def _load_json(path: str, field: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise GraphValidationError(field, f"cannot read {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise GraphValidationError(field, f"invalid JSON in {path!r}: {exc.msg} (line {exc.lineno})") from None


def _graph(args) -> MetricGraph:
    try:
        return load_graph(args.graph)
    except OSError as exc:
        raise GraphValidationError("graph", f"cannot read {args.graph!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise GraphValidationError("graph", f"invalid JSON in {args.graph!r}: {exc.msg} (line {exc.lineno})") from None


def _data(G: MetricGraph, path: str) -> GraphData:
    data = parse_graph_data(G, _load_json(path, "data"))
    check_graph_data(G, data)
    return data


def _revival_law(G: MetricGraph, text: str) -> list[tuple[GraphPoint, float]]:
    """``"v1"`` or ``"e1:0.5=0.3,v2=0.7"``."""
    out = []
    for item in text.split(","):
        pt, _, w = item.partition("=")
        try:
            weight = float(w) if w else 1.0
        except ValueError:
            raise GraphValidationError("q", f"bad weight in {item!r}") from None
        out.append((parse_point(G, pt.strip()), weight))
    total = sum(w for _, w in out)
    if any(w < 0 for _, w in out) or abs(total - 1.0) > 1e-12:
        raise GraphValidationError("q", f"weights must be nonnegative and sum to 1 (got {fmt(total)})")
    return out


@contextlib.contextmanager
def _sink(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _summary(args, text: str) -> None:
    # keep stdout clean when the payload itself goes there
    stream = sys.stderr if getattr(args, "out", None) in (None, "-") else sys.stdout
    print(text, file=stream)


# ---------------------------------------------------------------------------
# commands


def cmd_graph_check(args) -> int:
    G = _graph(args)
    extra = ""
    if args.data:
        data = _data(G, args.data)
        extra = f", data for {len(data.by_vertex)} vertices"
        missing = [v for v in G.vertices if v not in data.by_vertex]
        if missing:
            raise GraphValidationError("data", f"no boundary data for vertex {missing[0]!r}")
    print(f"OK: {len(G.vertices)} vertices, {len(G.internal_edges)} internal, {len(G.external_edges)} external{extra}")
    return 0


def _solve_rows(G: MetricGraph, sol, per_edge: int, reach: float):
    for e in G.edge_ids:
        L = G.length(e)
        top = reach if math.isinf(L) else L
        for k in range(per_edge + 1):
            x = top * k / per_edge
            yield e, x, float(sol.evaluate_edge(e, [x])[0]), sol.derivative(e, x)


def cmd_solve(args) -> int:
    G = _graph(args)
    data = _data(G, args.data)
    f = GraphFunction.constant(G, 1.0) if args.function is None else parse_function(G, _load_json(args.function, "f"))
    if not args.alpha > 0:
        raise GraphValidationError("alpha", "must be positive")
    sol = solve_resolvent(G, data, f, args.alpha)
    res = boundary_residual_check(sol, data)
    with _sink(args.out) as out:
        write_csv(out, ("edge", "x", "u", "u_prime"), _solve_rows(G, sol, args.grid, args.reach))
        out.write("\n")
        write_csv(out, ("vertex", "u", "residual"), ((v, sol.vertex_values[v], res.residuals[v]) for v in G.vertices))
    _summary(args, f"solved alpha={fmt(args.alpha)}: {len(G.vertices)} vertex unknowns, max residual {fmt(res.max_abs)}")
    return 0


def cmd_simulate(args) -> int:
    G = _graph(args)
    data = _data(G, args.data)
    seed = resolve_seed(args.seed)
    start = parse_point(G, args.start)
    if args.epsilon is not None:
        if not isinstance(start, Vertex):
            raise GraphValidationError("start", "--epsilon needs a vertex start")
        domain = ball_domain(G, start.id, args.epsilon)
    else:
        domain = whole_graph_domain(G, args.reach)
    sim = build_simulation(G, data, domain, args.delta)
    batch = simulate(sim, start, args.paths, seed, workers=args.workers)
    if args.revive:
        batch = revive(sim, batch, _revival_law(G, args.revive), seed, stream=1)
    with _sink(args.out) as out:
        write_csv(out, BATCH_HEADER, batch_rows(batch))
    killed = int((batch.kind == 1).sum())
    _summary(
        args,
        f"simulated {len(batch)} paths from {point_text(start)}: {killed} killed, "
        f"mean exit time {fmt(float(batch.mean_time.mean()))}",
    )
    return 0


def _estimate_payload(G, truth, stats, est) -> dict:
    per_eps = []
    for s in stats:
        per_eps.append(
            {
                "eps": s.eps,
                "paths": s.n,
                "mean_exit_time": s.mean_time,
                "mean_exit_time_se": s.mean_time_se,
                "K": s.K,
                "K_se": s.K_se,
                "nu": dict(s.nu),
                "mu_bar": dict(s.mu_bar),
                "components": dict(s.values),
                "errors": dict(s.errors),
            }
        )
    comps = {
        k: {"value": ex.value, "se": ex.se, "slope": ex.slope, "per_eps": list(ex.per_eps)}
        for k, ex in est.components.items()
    }
    norm, norm_se = est.normalization()
    rep = compare_report(G, est, truth)
    return {
        "vertex": est.vertex,
        "epsilons": list(est.epsilons),
        "per_eps": per_eps,
        "estimate": {"components": comps, "normalization": norm, "normalization_se": norm_se,
                     "warnings": list(est.warnings)},
        "comparison": {
            "passed": rep.passed,
            "verdicts": [
                {"component": v.name, "estimate": v.estimate, "se": v.se, "truth": v.truth, "z": v.z,
                 "rel_error": v.rel_error, "passed": v.passed}
                for v in rep.verdicts
            ],
        },
    }


def cmd_estimate(args) -> int:
    G = _graph(args)
    data = _data(G, args.data)
    seed = resolve_seed(args.seed)
    if args.vertex not in G.vertices:
        raise GraphValidationError("vertex", f"unknown vertex {args.vertex!r}")
    eps = sorted(args.epsilons, reverse=True)
    if len(eps) < 4:
        raise GraphValidationError("epsilons", "need at least four radii for the quadratic fit")
    q = _revival_law(G, args.revive) if args.revive else None
    truth = data[args.vertex] if q is None else revive_data(G, data[args.vertex], q)
    stats, est = estimate_vertex(
        G, data, args.vertex, args.paths, seed, epsilons=eps, workers=args.workers, bin_width=args.bin_width,
        revival=q, r_cut=args.r_cut,
    )
    payload = _estimate_payload(G, truth, stats, est)
    with _sink(args.out) as out:
        out.write(dumps(payload))
    verdict = "PASS" if payload["comparison"]["passed"] else "FAIL"
    _summary(args, f"estimated data at {args.vertex} from {len(eps)} radii x {args.paths} paths: {verdict} vs configured")
    return 0


def cmd_revive(args) -> int:
    G = _graph(args)
    data = _data(G, args.data)
    if args.vertex not in G.vertices:
        raise GraphValidationError("vertex", f"unknown vertex {args.vertex!r}")
    q = _revival_law(G, args.q)
    d = revive_data(G, data[args.vertex], q)
    out_data = data.replace(d)
    with _sink(args.out) as out:
        out.write(dumps(graph_data_to_list(out_data)))
    _summary(args, f"revived {args.vertex}: killing {fmt(data[args.vertex].c1)} moved to the revival law")
    return 0


def cmd_verify(args) -> int:
    seed = resolve_seed(args.seed)
    if args.only:
        bad = [k for k in args.only if k not in CRITERIA]
        if bad:
            raise GraphValidationError("only", f"no criterion {bad[0]} (have {min(CRITERIA)}..{max(CRITERIA)})")

    def progress(res):
        print(res.line(), flush=True)

    results = run_verification(seed, workers=args.workers, paths=args.paths, only=args.only, progress=progress)
    ok = all(r.passed for r in results)
    tail = f"verify seed={seed}: {sum(r.passed for r in results)}/{len(results)} criteria passed"
    print(tail)
    if args.out:
        report = {"seed": seed, "paths": args.paths, "passed": ok, "criteria": [r.to_dict() for r in results]}
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dumps(report))
    return 0 if ok else 2


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphbm", description="Brownian motions on metric graphs with Feller-Wentzell vertex data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("graph-check", help="validate a graph file (and optionally a data file)")
    g.add_argument("--graph", required=True)
    g.add_argument("--data")
    g.set_defaults(func=cmd_graph_check)

    s = sub.add_parser("solve", help="resolvent U_alpha f on a grid, as CSV")
    s.add_argument("--graph", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--function", help="JSON file {default, edges}; f = 1 when omitted")
    s.add_argument("--grid", type=int, default=10, help="cells per edge")
    s.add_argument("--reach", type=float, default=5.0, help="grid extent on external edges")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("simulate", help="exit records of independent paths, as CSV")
    m.add_argument("--graph", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--start", required=True, help='"v1" or "e1:0.5"')
    m.add_argument("--epsilon", type=float, help="stop on leaving this ball around the start vertex")
    m.add_argument("--reach", type=float, default=10.0, help="without --epsilon: stop this far out on external edges")
    m.add_argument("--delta", type=float, help="shell radius at vertices")
    m.add_argument("--paths", type=int, default=10_000)
    m.add_argument("--seed", type=int)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--revive", help='restart killed paths from this law, e.g. "v1" or "e1:0.5=0.3,v2=0.7"')
    m.add_argument("--out")
    m.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="recover the data at a vertex from simulated exits, as JSON")
    e.add_argument("--graph", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--vertex", required=True)
    e.add_argument("--epsilons", type=_floats, default=list(DEFAULT_EPSILONS))
    e.add_argument("--paths", type=int, default=DEFAULT_PATHS)
    e.add_argument("--seed", type=int)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--bin-width", type=float, default=0.5)
    e.add_argument("--r-cut", type=float, default=math.inf, help="exits farther out count as killing at infinity")
    e.add_argument("--revive", help="estimate the process revived from this law")
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("revive", help="data of the process restarted from q after killing, as JSON")
    r.add_argument("--graph", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--vertex", required=True)
    r.add_argument("--q", required=True, help='revival law, e.g. "v1" or "e1:1.0=0.5,e2:0.3=0.5"')
    r.add_argument("--out")
    r.set_defaults(func=cmd_revive)

    v = sub.add_parser("verify", help="run the acceptance suite")
    v.add_argument("--seed", type=int)
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--paths", type=int, default=DEFAULT_PATHS)
    v.add_argument("--only", type=_ints, help="comma separated criterion numbers")
    v.add_argument("--out", help="JSON report")
    v.set_defaults(func=cmd_verify)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        for name in ("paths", "workers", "grid"):
            val = getattr(args, name, None)
            if val is not None and val < 1:
                raise GraphValidationError(name, "must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GraphValidationError as exc:
        print(f"error: {exc.field}: {exc.message}", file=sys.stderr)
        return 1
    except SingularSystemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
