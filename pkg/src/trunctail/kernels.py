"""Kernels on [0, 1) for weighting log-excesses of top order statistics.

A kernel ``K`` must be nonincreasing and right-continuous (C1), vanish off
[0, 1) and be nonnegative on it (C2), integrate to one (C3), and have
bounded first and second derivatives (C4).  The estimators use
``g(s) = d/ds [s K(s)] = K(s) + s K'(s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "Kernel",
    "indicator_kernel",
    "biweight_kernel",
    "triweight_kernel",
    "get_kernel",
    "KERNELS",
    "ConformanceResult",
    "check_kernel",
    "tail_kernel_integral",
]


def _on_support(s):
    return (s >= 0.0) & (s < 1.0)


def _poly_on_support(coeffs, s):
    s = np.asarray(s, dtype=float)
    val = np.polynomial.polynomial.polyval(s, coeffs)
    return np.where(_on_support(s), val, 0.0)


@dataclass(frozen=True)
class Kernel:
    """A kernel together with its derivative and weight function ``g``.

    ``k``, ``k_prime`` and ``g`` are vectorised callables.  When the kernel
    is a polynomial on [0, 1), ``g_coeffs`` holds the ascending power
    coefficients of ``g`` there; estimators use them for an O(n) path.
    """

    name: str
    k: Callable
    k_prime: Callable
    g: Callable
    g_coeffs: tuple | None = None

    def k_at(self, s):
        return self._call(self.k, s)

    def k_prime_at(self, s):
        return self._call(self.k_prime, s)

    def g_at(self, s):
        return self._call(self.g, s)

    @staticmethod
    def _call(fn, s):
        out = fn(np.asarray(s, dtype=float))
        return float(out) if np.ndim(s) == 0 else out

    def __repr__(self):
        return f"Kernel({self.name!r})"

    @classmethod
    def from_polynomial(cls, name: str, k_coeffs) -> "Kernel":
        """Kernel equal to the polynomial ``sum c_j s**j`` on [0, 1)."""
        c = np.asarray(k_coeffs, dtype=float)
        dc = np.polynomial.polynomial.polyder(c)
        # g(s) = K(s) + s K'(s): coefficient j gets multiplied by (j + 1)
        gc = c * np.arange(1, c.size + 1)
        return cls(
            name,
            lambda s: _poly_on_support(c, s),
            lambda s: _poly_on_support(dc, s),
            lambda s: _poly_on_support(gc, s),
            tuple(float(v) for v in gc),
        )


def indicator_kernel() -> Kernel:
    """``K = 1`` on [0, 1); the kernel estimator then reduces to the BMN one."""
    return Kernel.from_polynomial("indicator", [1.0])


def biweight_kernel() -> Kernel:
    """``(15/8) (1 - s^2)^2`` on [0, 1)."""
    return Kernel.from_polynomial("biweight", [15 / 8, 0.0, -30 / 8, 0.0, 15 / 8])


def triweight_kernel() -> Kernel:
    """``(35/16) (1 - s^2)^3`` on [0, 1)."""
    c = 35 / 16
    return Kernel.from_polynomial("triweight", [c, 0.0, -3 * c, 0.0, 3 * c, 0.0, -c])


KERNELS = {
    "indicator": indicator_kernel,
    "biweight": biweight_kernel,
    "triweight": triweight_kernel,
}


def get_kernel(name) -> Kernel:
    if isinstance(name, Kernel):
        return name
    try:
        return KERNELS[name]()
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; choose from {', '.join(KERNELS)}"
        ) from None


@dataclass(frozen=True)
class ConformanceResult:
    condition: str
    passed: bool
    detail: str


def check_kernel(kernel: Kernel, grid: int = 4001) -> list[ConformanceResult]:
    """Run the kernel conditions and consistency checks on ``kernel``.

    Conditions are labelled ``C1``..``C4`` plus ``g`` (pointwise
    ``g = K + sK'``), ``g-integral`` and ``derivative`` (finite differences).
    """
    s = np.linspace(0.0, 1.0, grid, endpoint=False)
    k = kernel.k_at(s)
    results = []

    mono = bool(np.all(np.diff(k) <= 1e-12))
    results.append(ConformanceResult("C1", mono, "nonincreasing on a grid of [0,1)"))

    outside = np.array([-1.0, -1e-9, 1.0, 1.0 + 1e-9, 2.0])
    c2 = bool(np.all(k >= 0) and np.all(kernel.k_at(outside) == 0))
    results.append(ConformanceResult("C2", c2, "zero off [0,1), nonnegative on it"))

    mass, _ = integrate.quad(kernel.k_at, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    results.append(
        ConformanceResult("C3", abs(mass - 1.0) < 1e-10, f"integral of K = {mass:.12g}")
    )

    h = 1e-6
    inner = s[(s > 2 * h) & (s < 1 - 2 * h)]
    kp = kernel.k_prime_at(inner)
    kpp = (kernel.k_prime_at(inner + h) - kernel.k_prime_at(inner - h)) / (2 * h)
    bounds = [float(np.max(np.abs(v))) for v in (k, kp, kpp)]
    c4 = all(math.isfinite(b) and b < 1e6 for b in bounds)
    results.append(
        ConformanceResult("C4", c4, "sup|K|, sup|K'|, sup|K''| = " + ", ".join(f"{b:.4g}" for b in bounds))
    )

    g_gap = float(np.max(np.abs(kernel.g_at(inner) - (kernel.k_at(inner) + inner * kp))))
    results.append(ConformanceResult("g", g_gap < 1e-12, f"max |g - (K + sK')| = {g_gap:.3g}"))

    g_mass, _ = integrate.quad(kernel.g_at, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    edge = 1.0 - 1e-12
    target = edge * kernel.k_at(edge)
    results.append(
        ConformanceResult(
            "g-integral",
            abs(g_mass - target) < 1e-8,
            f"integral of g = {g_mass:.10g}, lim sK(s) = {target:.10g}",
        )
    )

    fd_k = (kernel.k_at(inner + h) - kernel.k_at(inner - h)) / (2 * h)
    psi = lambda t: t * kernel.k_at(t)
    fd_g = (psi(inner + h) - psi(inner - h)) / (2 * h)
    fd_gap = max(float(np.max(np.abs(fd_k - kp))), float(np.max(np.abs(fd_g - kernel.g_at(inner)))))
    results.append(
        ConformanceResult("derivative", fd_gap < 1e-5, f"finite-difference gap {fd_gap:.3g}")
    )
    return results


def tail_kernel_integral(sf: Callable[[float], float], kernel: Kernel, u: float) -> float:
    """``int_u^inf x^-1 r(x) K(r(x)) dx`` with ``r(x) = sf(x) / sf(u)``.

    For a survival function with tail index ``gamma`` this tends to
    ``gamma`` as ``u`` grows.  Integrated in ``t = log x``.
    """
    su = sf(u)
    lu = math.log(u)

    def f(t):
        if t > 700.0:
            return 0.0
        r = sf(math.exp(t)) / su
        return r * kernel.k_at(r)

    val, _ = integrate.quad(f, lu, math.inf, limit=500, epsabs=1e-12, epsrel=1e-10)
    return val
