"""One-dimensional Brownian building blocks.

Resolvents are for the generator ``u''/2``: ``U_alpha f`` solves
``alpha u - u''/2 = f``.  Functions are either :class:`ExpPoly` (closed forms)
or plain callables (adaptive quadrature).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc

from .expoly import ExpPoly
from .rng import CounterRng

Func = Union[ExpPoly, Callable[[float], float]]

_QUAD = dict(epsabs=1e-12, epsrel=1e-10, limit=400)


def _gamma(alpha: float) -> float:
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    return math.sqrt(2.0 * alpha)


# ---------------------------------------------------------------------------
# kernels on an interval [0, L]


def sinh_ratio_minus(x, gamma: float, L: float):
    """``sinh(gamma (L - x)) / sinh(gamma L)`` evaluated without overflow."""
    x = np.asarray(x, dtype=float)
    den = -np.expm1(-2.0 * gamma * L)
    out = (np.exp(-gamma * x) - np.exp(-gamma * (2.0 * L - x))) / den
    return out if out.ndim else float(out)


def sinh_ratio_plus(x, gamma: float, L: float):
    """``sinh(gamma x) / sinh(gamma L)``."""
    return sinh_ratio_minus(L - np.asarray(x, dtype=float), gamma, L)


def sinh_ratio_integral(a: float, b: float, gamma: float, L: float, plus: bool = False) -> float:
    """``int_a^b`` of the minus (or plus) sinh ratio."""
    if plus:
        a, b = L - b, L - a
    den = -math.expm1(-2.0 * gamma * L)
    first = math.exp(-gamma * a) - math.exp(-gamma * b)
    second = math.exp(-gamma * (2.0 * L - b)) - math.exp(-gamma * (2.0 * L - a))
    return (first - second) / (gamma * den)


def coth_csch(gamma: float, L: float) -> tuple[float, float]:
    """``(coth(gamma L), 1/sinh(gamma L))``, stable for large arguments."""
    q = math.exp(-2.0 * gamma * L)
    den = -math.expm1(-2.0 * gamma * L)
    return (1.0 + q) / den, 2.0 * math.exp(-gamma * L) / den


def sinh_ratio_minus_expoly(gamma: float, L: float) -> ExpPoly:
    den = -math.expm1(-2.0 * gamma * L)
    return ExpPoly({gamma: [1.0 / den], -gamma: [-math.exp(-2.0 * gamma * L) / den]})


def sinh_ratio_plus_expoly(gamma: float, L: float) -> ExpPoly:
    den = -math.expm1(-2.0 * gamma * L)
    c = math.exp(-gamma * L) / den
    return ExpPoly({-gamma: [c], gamma: [-c]})


# ---------------------------------------------------------------------------
# resolvents


def free_resolvent(f: Func, alpha: float, x: float, support: tuple[float, float] = (-math.inf, math.inf)) -> float:
    """``U_alpha f(x)`` for Brownian motion on the line; ``f`` vanishes off ``support``."""
    gamma = _gamma(alpha)
    lo, hi = support
    left_hi = min(x, hi)
    right_lo = max(x, lo)
    total = 0.0
    if isinstance(f, ExpPoly):
        # e^{-gamma (x - y)} f(y) on y < x and e^{-gamma (y - x)} f(y) on y > x
        if lo < left_hi:
            total += math.exp(-gamma * x) * f.times_exp(-gamma).integrate(lo, left_hi)
        if right_lo < hi:
            total += math.exp(gamma * x) * f.times_exp(gamma).integrate(right_lo, hi)
        return total / gamma
    if lo < left_hi:
        total += quad(lambda y: math.exp(-gamma * (x - y)) * f(y), lo, left_hi, **_QUAD)[0]
    if right_lo < hi:
        total += quad(lambda y: math.exp(-gamma * (y - x)) * f(y), right_lo, hi, **_QUAD)[0]
    return total / gamma


@dataclass(frozen=True)
class HalflineDirichlet:
    """``U^{[0,inf)}_alpha f`` as ``p(x) - p(0) exp(-gamma x)`` with ``p`` particular."""

    alpha: float
    gamma: float
    particular: ExpPoly

    def __call__(self, x):
        return self.particular(x) - self.particular(0.0) * np.exp(-self.gamma * np.asarray(x, dtype=float))

    def as_expoly(self) -> ExpPoly:
        return self.particular - ExpPoly.term(self.particular(0.0), 0, self.gamma)

    def boundary_derivative(self) -> float:
        return float(self.particular.derivative()(0.0)) + self.gamma * float(self.particular(0.0))


@dataclass(frozen=True)
class IntervalDirichlet:
    """``U^{[0,L]}_alpha f`` as ``p - p(0) S_minus - p(L) S_plus``."""

    alpha: float
    gamma: float
    length: float
    particular: ExpPoly

    @property
    def p0(self) -> float:
        return float(self.particular(0.0))

    @property
    def pL(self) -> float:
        return float(self.particular(self.length))

    def __call__(self, x):
        g, L = self.gamma, self.length
        return self.particular(x) - self.p0 * sinh_ratio_minus(x, g, L) - self.pL * sinh_ratio_plus(x, g, L)

    def as_expoly(self) -> ExpPoly:
        g, L = self.gamma, self.length
        return self.particular - sinh_ratio_minus_expoly(g, L) * self.p0 - sinh_ratio_plus_expoly(g, L) * self.pL

    def derivative(self, x: float) -> float:
        g, L = self.gamma, self.length
        dp = float(self.particular.derivative()(x))
        den = -math.expm1(-2.0 * g * L)
        dm = -g * (math.exp(-g * x) + math.exp(-g * (2 * L - x))) / den
        dplus = g * (math.exp(-g * (L - x)) + math.exp(-g * (L + x))) / den
        return dp - self.p0 * dm - self.pL * dplus

    def boundary_derivatives(self) -> tuple[float, float]:
        """Derivatives ``u'(0)`` and ``u'(L)`` in the coordinate direction."""
        g, L = self.gamma, self.length
        coth, csch = coth_csch(g, L)
        d = self.particular.derivative()
        d0 = float(d(0.0)) + self.p0 * g * coth - self.pL * g * csch
        dL = float(d(L)) + self.p0 * g * csch - self.pL * g * coth
        return d0, dL

    def integrate(self, a: float, b: float) -> float:
        g, L = self.gamma, self.length
        return (
            self.particular.integrate(a, b)
            - self.p0 * sinh_ratio_integral(a, b, g, L)
            - self.pL * sinh_ratio_integral(a, b, g, L, plus=True)
        )


def halfline_dirichlet(f: ExpPoly, alpha: float) -> HalflineDirichlet:
    if not f.is_bounded_on_halfline():
        raise ValueError("f must be bounded on the half-line")
    return HalflineDirichlet(alpha, _gamma(alpha), f.particular_resolvent(alpha))


def interval_dirichlet(f: ExpPoly, alpha: float, length: float) -> IntervalDirichlet:
    if not length > 0:
        raise ValueError("interval length must be positive")
    return IntervalDirichlet(alpha, _gamma(alpha), float(length), f.particular_resolvent(alpha))


def dirichlet_resolvent_halfline(f: Func, alpha: float, x: float) -> float:
    """``U^{[0,inf)}_alpha f(x)``: Brownian motion killed at 0."""
    gamma = _gamma(alpha)
    if x < 0:
        raise ValueError("x must be >= 0")
    if isinstance(f, ExpPoly):
        return float(halfline_dirichlet(f, alpha)(x))
    # Green function (e^{-g|x-y|} - e^{-g(x+y)}) / g
    total = 0.0
    if x > 0:
        total += quad(lambda y: (math.exp(-gamma * (x - y)) - math.exp(-gamma * (x + y))) * f(y), 0.0, x, **_QUAD)[0]
    total += quad(lambda y: (math.exp(-gamma * (y - x)) - math.exp(-gamma * (x + y))) * f(y), x, math.inf, **_QUAD)[0]
    return total / gamma


def halfline_boundary_derivative(f: Func, alpha: float) -> float:
    """``(U^{[0,inf)}_alpha f)'(0) = 2 int_0^inf exp(-gamma y) f(y) dy``."""
    gamma = _gamma(alpha)
    if isinstance(f, ExpPoly):
        return 2.0 * f.laplace_halfline(gamma)
    return 2.0 * quad(lambda y: math.exp(-gamma * y) * f(y), 0.0, math.inf, **_QUAD)[0]


def dirichlet_resolvent_interval(f: Func, alpha: float, x: float, a: float, b: float) -> float:
    """``U^{[a,b]}_alpha f(x)``: Brownian motion killed on leaving ``(a, b)``."""
    gamma = _gamma(alpha)
    if not a <= x <= b:
        raise ValueError("x must lie in [a, b]")
    L = b - a
    if isinstance(f, ExpPoly):
        return float(interval_dirichlet(f.shift(a), alpha, L)(x - a))
    # Green function 2 S_minus(x) S_plus(y) sinh(gamma L) / gamma ... written in product form
    y0 = x - a

    def green(y: float) -> float:
        lo, hi = min(y0, y), max(y0, y)
        return 2.0 * math.sinh(gamma * lo) * math.sinh(gamma * (L - hi)) / (gamma * math.sinh(gamma * L))

    total = 0.0
    if y0 > 0:
        total += quad(lambda y: green(y) * f(a + y), 0.0, y0, **_QUAD)[0]
    if y0 < L:
        total += quad(lambda y: green(y) * f(a + y), y0, L, **_QUAD)[0]
    return total


def interval_boundary_derivatives(f: Func, alpha: float, a: float, b: float) -> tuple[float, float]:
    """Derivatives of ``U^{[a,b]}_alpha f`` at ``a`` and ``b`` via the Green function route."""
    gamma = _gamma(alpha)
    L = b - a
    if isinstance(f, ExpPoly):
        g = f.shift(a)
        den = -math.expm1(-2.0 * gamma * L)
        # 2 int S_minus g and -2 int S_plus g
        em = g.times_exp(gamma).integrate(0.0, L)
        ep = g.times_exp(-gamma)
        left = 2.0 * (em - math.exp(-2 * gamma * L) * ep.integrate(0.0, L)) / den
        right_int = math.exp(-gamma * L) * (ep.integrate(0.0, L) - g.times_exp(gamma).integrate(0.0, L)) / den
        return left, -2.0 * right_int
    sm = lambda y: math.sinh(gamma * (L - y)) / math.sinh(gamma * L)
    sp = lambda y: math.sinh(gamma * y) / math.sinh(gamma * L)
    left = 2.0 * quad(lambda y: sm(y) * f(a + y), 0.0, L, **_QUAD)[0]
    right = -2.0 * quad(lambda y: sp(y) * f(a + y), 0.0, L, **_QUAD)[0]
    return left, right


# ---------------------------------------------------------------------------
# exit sampling


def symmetric_exit_cdf(t) -> np.ndarray:
    """``P(tau <= t)`` for the exit time of ``(-1, 1)`` from 0."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = t < 1.0
    if np.any(small):
        ts = t[small]
        s = np.zeros_like(ts)
        scale = 1.0 / np.sqrt(2.0 * ts)
        for k in range(64):
            term = erfc((2 * k + 1) * scale)
            s += term if k % 2 == 0 else -term
            if np.all(term < 1e-14):
                break
        out[small] = 2.0 * s
    if np.any(~small):
        tl = t[~small]
        s = np.zeros_like(tl)
        for n in range(64):
            m = 2 * n + 1
            term = np.exp(-m * m * math.pi ** 2 * tl / 8.0) / m
            s += term if n % 2 == 0 else -term
            if np.all(term < 1e-14):
                break
        out[~small] = 1.0 - 4.0 / math.pi * s
    return np.clip(out, 0.0, 1.0)


def symmetric_exit_quantile(u: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Inverse of :func:`symmetric_exit_cdf` by bisection in ``log t``."""
    u = np.asarray(u, dtype=float)
    lo = np.full(u.shape, math.log(1e-3))
    hi = np.full(u.shape, math.log(60.0))
    while True:
        mid = 0.5 * (lo + hi)
        below = symmetric_exit_cdf(np.exp(mid)) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo, initial=0.0) < tol:
            break
    return np.exp(0.5 * (lo + hi))


def sample_symmetric_exit_time(eps, u) -> np.ndarray:
    """Exit time of ``(-eps, eps)`` from the centre, from uniforms ``u``."""
    return np.asarray(eps, dtype=float) ** 2 * symmetric_exit_quantile(u)


@dataclass(frozen=True)
class ExitDraw:
    upper: bool
    time: float

    @property
    def side(self) -> str:
        return "upper" if self.upper else "lower"


def exit_interval_batch(
    x: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    rng: CounterRng,
    path: np.ndarray,
    step0: np.ndarray | int = 0,
    wall_tol: float = 1e-9,
    tag: int = 7,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Walk on intervals from ``x`` until ``a`` or ``b``.

    Each round exits the largest interval centred at the current position; one of
    its ends is a wall, so every round stops with probability one half.

    Returns:
        ``(upper, time, steps_used)`` arrays.
    """
    y = np.asarray(x, dtype=float).copy()
    a = np.broadcast_to(np.asarray(a, dtype=float), y.shape)
    b = np.broadcast_to(np.asarray(b, dtype=float), y.shape)
    path = np.asarray(path, dtype=np.int64)
    step = np.broadcast_to(np.asarray(step0, dtype=np.int64), y.shape).copy()
    n = y.size
    upper = np.zeros(n, dtype=bool)
    time = np.zeros(n)
    active = np.arange(n)
    length = b - a
    while active.size:
        ya, aa, bb, L = y[active], a[active], b[active], length[active]
        u_time, u_dir = rng.uniform_pair(path[active], step[active], tag)
        step[active] += 1
        near_low = (ya - aa) <= (bb - ya)
        r = np.where(near_low, ya - aa, bb - ya)
        tiny = r <= wall_tol * L
        # snap: side with the exact harmonic probability, conditional mean time
        if np.any(tiny):
            idx = active[tiny]
            d = (ya - aa)[tiny]
            Lt = L[tiny]
            go_up = u_dir[tiny] < d / Lt
            upper[idx] = go_up
            time[idx] += np.where(go_up, (Lt * Lt - d * d) / 3.0, d * (2.0 * Lt - d) / 3.0)
        keep = ~tiny
        act = active[keep]
        r = r[keep]
        time[act] += sample_symmetric_exit_time(r, u_time[keep])
        up_move = u_dir[keep] < 0.5
        hits = np.where(near_low[keep], ~up_move, up_move)
        hit_idx = act[hits]
        upper[hit_idx] = ~near_low[keep][hits]
        move = act[~hits]
        y[move] = y[move] + np.where(up_move[~hits], r[~hits], -r[~hits])
        active = move
    return upper, time, step


def exit_interval(x: float, a: float, b: float, rng: CounterRng, path: int = 0, step: int = 0) -> ExitDraw:
    if not a < x < b:
        raise ValueError("need a < x < b")
    up, t, _ = exit_interval_batch(np.array([x]), np.array([a]), np.array([b]), rng, np.array([path]), step)
    return ExitDraw(bool(up[0]), float(t[0]))


def conditional_exit_means(y: np.ndarray, L: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean exit time of ``(0, L)`` from ``y`` given exit at 0 and given exit at ``L``."""
    return y * (2.0 * L - y) / 3.0, (L * L - y * y) / 3.0
