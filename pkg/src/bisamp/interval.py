"""Analytic 1-D testbed: scalar observation y = x + noise with x confined
to an interval [a, b].

Three solution densities are available in closed form (up to 1-D
quadrature): the truncated Gaussian posterior, its Moreau-Yosida smoothed
surrogate, and the perturb-then-clamp density, which is a mixture of a
restricted Gaussian and two boundary atoms. The module doubles as the
exact oracle for boundary-mass behavior of the image-space sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

__all__ = [
    "IntervalModel",
    "RtoIntervalDensity",
    "truncated_posterior_pdf",
    "smoothed_posterior_pdf",
    "rto_interval_density",
    "adaptive_simpson",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_erf = np.vectorize(math.erf, otypes=[np.float64])


def _phi(t):
    return np.exp(-0.5 * np.square(t)) / _SQRT2PI


def _Phi(t):
    return 0.5 * (1.0 + _erf(np.asarray(t, dtype=np.float64) / _SQRT2))


@dataclass(frozen=True)
class IntervalModel:
    a: float
    b: float
    y: float
    sigma: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def truncated_posterior_pdf(m: IntervalModel, x):
    """Density of the Gaussian N(y, sigma^2) truncated to [a, b]."""
    x = np.asarray(x, dtype=np.float64)
    z = _Phi((m.b - m.y) / m.sigma) - _Phi((m.a - m.y) / m.sigma)
    inside = (x >= m.a) & (x <= m.b)
    vals = _phi((x - m.y) / m.sigma) / (m.sigma * z)
    out = np.where(inside, vals, 0.0)
    return float(out) if out.ndim == 0 else out


def smoothed_posterior_pdf(m: IntervalModel, alpha: float, x):
    """Surrogate density proportional to
    exp(-(x-y)^2/(2 sigma^2) - dist(x,[a,b])^2/(2 alpha)),
    normalized by quadrature over [a - 8 sigma, b + 8 sigma]."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")

    def unnorm(t):
        t = np.asarray(t, dtype=np.float64)
        dist = np.maximum(m.a - t, 0.0) + np.maximum(t - m.b, 0.0)
        return np.exp(-0.5 * ((t - m.y) / m.sigma) ** 2 - 0.5 * dist ** 2 / alpha)

    z = adaptive_simpson(lambda t: float(unnorm(t)),
                         m.a - 8.0 * m.sigma, m.b + 8.0 * m.sigma)
    out = unnorm(x) / z
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class RtoIntervalDensity:
    """Mixture decomposition: point masses at both endpoints plus a
    continuous part (unnormalized N(y, sigma^2) restricted to (a, b))."""

    atom_a: float
    atom_b: float
    continuous_pdf: Callable[[np.ndarray], np.ndarray]


def rto_interval_density(m: IntervalModel) -> RtoIntervalDensity:
    """Density of clamp(y + z, a, b) with z ~ N(0, sigma^2).

    atom_a + atom_b + integral of the continuous part equals one.
    """
    atom_a = float(_Phi((m.a - m.y) / m.sigma))
    atom_b = float(1.0 - _Phi((m.b - m.y) / m.sigma))

    def continuous(x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x > m.a) & (x < m.b)
        vals = _phi((x - m.y) / m.sigma) / m.sigma
        out = np.where(inside, vals, 0.0)
        return float(out) if out.ndim == 0 else out

    return RtoIntervalDensity(atom_a=atom_a, atom_b=atom_b, continuous_pdf=continuous)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with the standard error/15 refinement rule."""
    if not b > a:
        raise ValueError("need b > a")

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm = f(lm)
        frm = f(rm)
        left = simpson(lo, mid, flo, flm, fmid)
        right = simpson(mid, hi, fmid, frm, fhi)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (recurse(lo, mid, flo, flm, fmid, left, eps / 2.0, depth + 1)
                + recurse(mid, hi, fmid, frm, fhi, right, eps / 2.0, depth + 1))

    mid = 0.5 * (a + b)
    fa, fm, fb = f(a), f(mid), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)
