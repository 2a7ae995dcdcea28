"""Distribution diagnostics: exact KS distances, ECDF atoms, Beta CDF.

The Kolmogorov-Smirnov distances here are the exact sup-norm values
over the jump points of the empirical CDF, not grid approximations,
so test thresholds can be fixed numbers rather than p-values.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .urn_core import ParameterError


def ks_distance(sample: Sequence[float], cdf: Callable[[float], float]) -> float:
    """Exact sup |ECDF - F| for a continuous reference CDF.

    The supremum over each step interval is attained at a jump point,
    comparing F against the ECDF value just before and just after it.
    """
    xs = np.sort(np.asarray(sample, dtype=np.float64))
    n = len(xs)
    if n == 0:
        raise ParameterError("KS distance needs a nonempty sample")
    fvals = np.array([cdf(float(x)) for x in xs])
    if np.any(fvals < -1e-12) or np.any(fvals > 1.0 + 1e-12):
        raise ParameterError("reference CDF returned a value outside [0, 1]")
    steps = np.arange(1, n + 1) / n
    d_plus = float(np.max(steps - fvals))
    d_minus = float(np.max(fvals - (steps - 1.0 / n)))
    return max(d_plus, d_minus, 0.0)


def ks_two_sample(x: Sequence[float], y: Sequence[float]) -> float:
    """Exact sup distance between two empirical CDFs."""
    xs = np.sort(np.asarray(x, dtype=np.float64))
    ys = np.sort(np.asarray(y, dtype=np.float64))
    if len(xs) == 0 or len(ys) == 0:
        raise ParameterError("KS distance needs two nonempty samples")
    grid = np.concatenate([xs, ys])
    fx = np.searchsorted(xs, grid, side="right") / len(xs)
    fy = np.searchsorted(ys, grid, side="right") / len(ys)
    return float(np.max(np.abs(fx - fy)))


def ks_two_sample_threshold(alpha: float, n: int, m: int) -> float:
    """Asymptotic two-sample rejection threshold at significance alpha."""
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    c = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    return c * math.sqrt((n + m) / (n * m))


def max_ecdf_jump(sample: Sequence[float]) -> float:
    """Largest atom of the empirical distribution (max tie fraction)."""
    xs = np.asarray(sample, dtype=np.float64)
    if len(xs) == 0:
        raise ParameterError("need a nonempty sample")
    _, counts = np.unique(xs, return_counts=True)
    return float(np.max(counts)) / len(xs)


def boundary_fraction(sample: Sequence[float], tol: float = 1e-6) -> float:
    """Fraction of the sample within ``tol`` of 0 or 1."""
    xs = np.asarray(sample, dtype=np.float64)
    if len(xs) == 0:
        raise ParameterError("need a nonempty sample")
    near = (xs <= tol) | (xs >= 1.0 - tol)
    return float(np.count_nonzero(near)) / len(xs)


def _betacf(x: float, a: float, b: float) -> float:
    # Continued fraction for the regularized incomplete beta (modified
    # Lentz iteration); converges quickly when x < (a + 1)/(a + b + 2).
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError(f"incomplete beta failed to converge for x={x}, a={a}, b={b}")


def beta_cdf(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0.0 or b <= 0.0:
        raise ParameterError(f"shape parameters must be positive, got a={a!r}, b={b!r}")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(x, a, b) / a
    return 1.0 - front * _betacf(1.0 - x, b, a) / b
