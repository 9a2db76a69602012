"""Exponential-polynomial functions of one variable.

An :class:`ExpPoly` is a finite sum ``sum_beta P_beta(x) * exp(-beta * x)`` with
polynomial ``P_beta``.  The family is closed under differentiation, definite
integration and under the one-dimensional Brownian resolvents, which is what
makes the graph resolvent computable in closed form.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping

import numpy as np

# Relative threshold below which beta^2/2 - alpha counts as resonant.
_RESONANCE_TOL = 1e-12


def _trim(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    nz = np.nonzero(coeffs)[0]
    if nz.size == 0:
        return np.zeros(0)
    return coeffs[: nz[-1] + 1].copy()


class ExpPoly:
    """Sum of ``P_beta(x) exp(-beta x)`` terms.

    Args:
        groups: mapping ``beta -> ascending polynomial coefficients``.
    """

    __slots__ = ("groups",)

    def __init__(self, groups: Mapping[float, Iterable[float]] | None = None):
        merged: dict[float, np.ndarray] = {}
        for beta, coeffs in (groups or {}).items():
            beta = float(beta)
            if beta == 0.0:
                beta = 0.0  # fold -0.0
            c = np.asarray(list(coeffs) if not isinstance(coeffs, np.ndarray) else coeffs, dtype=float)
            if beta in merged:
                a = merged[beta]
                n = max(a.size, c.size)
                merged[beta] = np.pad(a, (0, n - a.size)) + np.pad(c, (0, n - c.size))
            else:
                merged[beta] = c
        self.groups = {b: _trim(c) for b, c in merged.items() if _trim(c).size}

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, c: float) -> "ExpPoly":
        return cls({0.0: [c]})

    @classmethod
    def term(cls, c: float, k: int = 0, beta: float = 0.0) -> "ExpPoly":
        """``c * x**k * exp(-beta x)``."""
        coeffs = np.zeros(k + 1)
        coeffs[k] = c
        return cls({beta: coeffs})

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[float, int, float]]) -> "ExpPoly":
        out = cls()
        for c, k, beta in terms:
            out = out + cls.term(c, int(k), beta)
        return out

    def to_terms(self) -> list[tuple[float, int, float]]:
        return [
            (float(c), k, beta)
            for beta, coeffs in sorted(self.groups.items())
            for k, c in enumerate(coeffs)
            if c != 0.0
        ]

    # -- algebra ------------------------------------------------------------
    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        if isinstance(other, (int, float)):
            other = ExpPoly.constant(other)
        groups: dict[float, np.ndarray] = {}
        for src in (self.groups, other.groups):
            for b, c in src.items():
                if b in groups:
                    a = groups[b]
                    n = max(a.size, c.size)
                    groups[b] = np.pad(a, (0, n - a.size)) + np.pad(c, (0, n - c.size))
                else:
                    groups[b] = c.copy()
        return ExpPoly(groups)

    __radd__ = __add__

    def __neg__(self) -> "ExpPoly":
        return ExpPoly({b: -c for b, c in self.groups.items()})

    def __sub__(self, other: "ExpPoly") -> "ExpPoly":
        return self + (-other)

    def __mul__(self, s: float) -> "ExpPoly":
        return ExpPoly({b: c * float(s) for b, c in self.groups.items()})

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"ExpPoly({self.to_terms()!r})"

    def is_zero(self) -> bool:
        return not self.groups

    def reflect(self, length: float) -> "ExpPoly":
        """Return ``x -> self(length - x)``."""
        out = ExpPoly()
        for beta, coeffs in self.groups.items():
            # P(L - x) e^{-beta L} e^{beta x}
            poly = np.polynomial.Polynomial(coeffs)
            sub = poly(np.polynomial.Polynomial([length, -1.0]))
            out = out + ExpPoly({-beta: sub.coef * math.exp(-beta * length)})
        return out

    def shift(self, a: float) -> "ExpPoly":
        """Return ``x -> self(x + a)``."""
        out = ExpPoly()
        for beta, coeffs in self.groups.items():
            poly = np.polynomial.Polynomial(coeffs)
            sub = poly(np.polynomial.Polynomial([a, 1.0]))
            out = out + ExpPoly({beta: sub.coef * math.exp(-beta * a)})
        return out

    # -- analysis -----------------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for beta, coeffs in self.groups.items():
            total = total + np.polynomial.polynomial.polyval(x, coeffs) * np.exp(-beta * x)
        return total if total.ndim else float(total)

    def derivative(self, order: int = 1) -> "ExpPoly":
        out = self
        for _ in range(order):
            groups = {}
            for beta, coeffs in out.groups.items():
                d = np.polynomial.polynomial.polyder(coeffs) if coeffs.size > 1 else np.zeros(1)
                n = max(d.size, coeffs.size)
                groups[beta] = np.pad(d, (0, n - d.size)) - beta * np.pad(coeffs, (0, n - coeffs.size))
            out = ExpPoly(groups)
        return out

    def max_rate(self) -> float:
        """Smallest decay rate present (``+inf`` for the zero function)."""
        return min(self.groups, default=math.inf)

    def is_bounded_on_halfline(self) -> bool:
        for beta, coeffs in self.groups.items():
            if beta < 0 or (beta == 0 and coeffs.size > 1):
                return False
        return True

    def antiderivative_parts(self) -> dict[float, np.ndarray]:
        """Polynomials ``Q_beta`` with ``d/dx [Q_beta e^{-beta x}] = P_beta e^{-beta x}``."""
        parts = {}
        for beta, p in self.groups.items():
            if beta == 0.0:
                parts[beta] = np.polynomial.polynomial.polyint(p)
                continue
            n = p.size - 1
            q = np.zeros(n + 2)
            # -beta q_j + (j+1) q_{j+1} = p_j
            for j in range(n, -1, -1):
                q[j] = ((j + 1) * q[j + 1] - p[j]) / beta
            parts[beta] = q[: n + 1]
        return parts

    def integrate(self, a: float, b: float) -> float:
        """Exact integral over ``[a, b]``; infinite ends are allowed for terms decaying there."""
        if a == b:
            return 0.0
        total = 0.0
        for beta, q in self.antiderivative_parts().items():
            if math.isinf(b):
                if beta <= 0:
                    raise ValueError("integral over a half-line diverges")
                upper = 0.0
            else:
                upper = float(np.polynomial.polynomial.polyval(b, q)) * math.exp(-beta * b)
            if math.isinf(a):
                if beta >= 0:
                    raise ValueError("integral over a half-line diverges")
                lower = 0.0
            else:
                lower = float(np.polynomial.polynomial.polyval(a, q)) * math.exp(-beta * a)
            total += upper - lower
        return total

    def laplace_halfline(self, gamma: float) -> float:
        """``int_0^inf exp(-gamma x) self(x) dx``."""
        shifted = ExpPoly({b + gamma: c for b, c in self.groups.items()})
        return shifted.integrate(0.0, math.inf)

    def times_exp(self, rate: float) -> "ExpPoly":
        """Multiply by ``exp(-rate x)``."""
        return ExpPoly({b + rate: c for b, c in self.groups.items()})

    def particular_resolvent(self, alpha: float) -> "ExpPoly":
        """A particular solution ``p`` of ``p''/2 - alpha p = -self``.

        Each group keeps its exponential rate; at resonance (``beta^2 = 2 alpha``)
        the polynomial degree grows by one.
        """
        out = {}
        for beta, f in self.groups.items():
            n = f.size - 1
            c = 0.5 * beta * beta - alpha
            if abs(c) > _RESONANCE_TOL * max(alpha, 0.5 * beta * beta):
                p = np.zeros(n + 3)
                for j in range(n, -1, -1):
                    p[j] = (-f[j] + beta * (j + 1) * p[j + 1] - 0.5 * (j + 2) * (j + 1) * p[j + 2]) / c
                out[beta] = p[: n + 1]
            else:
                # -beta (j+1) p_{j+1} + (j+2)(j+1)/2 p_{j+2} = -f_j
                p = np.zeros(n + 3)
                for j in range(n, -1, -1):
                    p[j + 1] = (f[j] + 0.5 * (j + 2) * (j + 1) * p[j + 2]) / (beta * (j + 1))
                out[beta] = p[: n + 2]
        return ExpPoly(out)
