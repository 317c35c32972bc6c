"""Prior building blocks: discrete gradient, anisotropic TV, constraints,
and Moreau-Yosida envelopes.

The gradient uses periodic forward differences, matching the blur
operator's boundary assumption, and stacks horizontal then vertical
components into a 2d-vector. Its squared operator norm is at most 8.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Image

__all__ = [
    "CONSTRAINTS",
    "GRAD_NORM_SQ_BOUND",
    "PriorSpec",
    "GradientOperator",
    "grad_apply",
    "grad_adjoint",
    "tv_norm",
    "project_constraint",
    "moreau_envelope_grad",
    "moreau_envelope_value",
]

CONSTRAINTS = ("box", "nonneg", "none")

# ||grad||^2 <= 8 for 2-D periodic forward differences
GRAD_NORM_SQ_BOUND = 8.0


def grad_apply(x: np.ndarray, height: int, width: int) -> np.ndarray:
    """Periodic forward differences; returns [horizontal; vertical] (2d,)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size != height * width:
        raise ValueError(f"vector length {x.size} does not match {height}x{width}")
    m = x.reshape(height, width)
    out = np.empty(2 * height * width)
    dh = out[: height * width].reshape(height, width)
    dv = out[height * width :].reshape(height, width)
    dh[:, :-1] = m[:, 1:] - m[:, :-1]
    dh[:, -1] = m[:, 0] - m[:, -1]
    dv[:-1, :] = m[1:, :] - m[:-1, :]
    dv[-1, :] = m[0, :] - m[-1, :]
    return out


def grad_adjoint(p: np.ndarray, height: int, width: int) -> np.ndarray:
    """Adjoint of grad_apply (negative periodic divergence)."""
    p = np.asarray(p, dtype=np.float64)
    d = height * width
    if p.size != 2 * d:
        raise ValueError(f"stacked vector length {p.size}, expected {2 * d}")
    ph = p[:d].reshape(height, width)
    pv = p[d:].reshape(height, width)
    out = np.empty((height, width))
    out[:, 1:] = ph[:, :-1] - ph[:, 1:]
    out[:, 0] = ph[:, -1] - ph[:, 0]
    out[1:, :] += pv[:-1, :] - pv[1:, :]
    out[0, :] += pv[-1, :] - pv[0, :]
    return out.ravel()


def tv_norm(x: np.ndarray, height: int, width: int) -> float:
    """Anisotropic total variation: l1 norm of all gradient components."""
    return float(np.sum(np.abs(grad_apply(x, height, width))))


@dataclass(frozen=True)
class GradientOperator:
    """Periodic forward-difference gradient on height x width images."""

    height: int
    width: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        return grad_apply(x, self.height, self.width)

    def adjoint(self, p: np.ndarray) -> np.ndarray:
        return grad_adjoint(p, self.height, self.width)

    @property
    def norm_sq_bound(self) -> float:
        return GRAD_NORM_SQ_BOUND


@dataclass(frozen=True)
class PriorSpec:
    """TV-plus-constraint prior: gamma * TV(x) + i_C(x) + alpha/2 ||x||^2.

    The quadratic alpha-term keeps the sampling problem well posed when
    the forward operator is rank deficient; it is treated as part of the
    prior and never perturbed.
    """

    gamma: float
    constraint: str = "box"
    alpha: float = 0.0

    def __post_init__(self):
        # gamma == 0 is the pure-Gaussian degenerate case used by solver
        # oracles; sampling configurations use gamma > 0.
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"constraint must be one of {CONSTRAINTS}, got {self.constraint!r}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")

    def value(self, x: np.ndarray, height: int, width: int, feas_tol: float = 0.0) -> float:
        """Prior energy at x; +inf outside the constraint set (up to feas_tol)."""
        x = np.asarray(x, dtype=np.float64)
        if self.constraint != "none":
            violation = np.max(np.abs(x - project_constraint(x, self.constraint)), initial=0.0)
            if violation > feas_tol:
                return np.inf
        out = self.gamma * tv_norm(x, height, width)
        if self.alpha > 0:
            out += 0.5 * self.alpha * float(x @ x)
        return out


def project_constraint(x: np.ndarray, constraint: str) -> np.ndarray:
    if constraint == "box":
        return np.clip(x, 0.0, 1.0)
    if constraint == "nonneg":
        return np.maximum(x, 0.0)
    if constraint == "none":
        return np.asarray(x, dtype=np.float64).copy()
    raise ValueError(f"unknown constraint {constraint!r}")


def moreau_envelope_grad(x: Image, prior: PriorSpec, term: str, alpha: float,
                         inner_iters: int = 50) -> Image:
    """Gradient (x - prox_term(x)) / alpha of the Moreau-Yosida envelope.

    `term` selects which part of the prior is smoothed: "tv" for the
    gamma-weighted TV seminorm (prox estimated with the primal-dual inner
    solver, `inner_iters` iterations) or "indicator" for the constraint
    set (exact projection).
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    p = _prox_point(x, prior, term, alpha, inner_iters)
    return x.with_data((x.data - p) / alpha)


def moreau_envelope_value(x: Image, prior: PriorSpec, term: str, alpha: float,
                          inner_iters: int = 50) -> float:
    """Envelope value min_u term(u) + ||u - x||^2 / (2 alpha)."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    p = _prox_point(x, prior, term, alpha, inner_iters)
    quad = float(np.sum((p - x.data) ** 2)) / (2.0 * alpha)
    if term == "indicator":
        return quad
    return prior.gamma * tv_norm(p, x.height, x.width) + quad


def _prox_point(x: Image, prior: PriorSpec, term: str, alpha: float,
                inner_iters: int) -> np.ndarray:
    if term == "indicator":
        return project_constraint(x.data, prior.constraint)
    if term == "tv":
        if prior.gamma == 0:
            return x.data.copy()
        from .solvers import PdSettings, tv_prox  # deferred: solvers imports this module

        out = tv_prox(x, prior.gamma * alpha, PdSettings(n_iters=inner_iters))
        return out.data
    raise ValueError(f"term must be 'tv' or 'indicator', got {term!r}")
