"""Convex solvers: ADMM for the penalized least-squares objective and a
Chambolle-Pock primal-dual loop for the TV proximal subproblem.

The ADMM splitting introduces z1 = grad(x) (soft-threshold block) and
z2 = x (projection block). The x-update solves

    (lam A^T A + alpha I + rho grad^T grad + rho I) x = rhs,

in closed form via the FFT when A is Fourier-diagonalizable, otherwise
by preconditioned conjugate gradients (circulant preconditioner built
from the mean of the Gram diagonal when available). Stopping follows the
combined absolute/relative residual rule with eps_abs = eps_rel = tol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np

from .core import Image
from .operators import LinearOperator
from .regularizers import (
    GRAD_NORM_SQ_BOUND,
    PriorSpec,
    grad_adjoint,
    grad_apply,
    project_constraint,
    tv_norm,
)

__all__ = [
    "SolverError",
    "AdmmSettings",
    "PdSettings",
    "MapObjective",
    "SolveStats",
    "TvProxInfo",
    "admm_solve",
    "tv_prox",
]


class SolverError(Exception):
    """Inner-solve breakdown or numerical divergence (NaN in iterates)."""


@dataclass(frozen=True)
class AdmmSettings:
    rho: float = 1.0
    tol_primal: float = 1e-4
    tol_dual: float = 1e-4
    max_iter: int = 2000
    primal_only: bool = False
    x_update: str = "auto"  # auto | fourier | cg
    cg_tol: float = 1e-8
    cg_max_iter: int = 500
    residual_balancing: bool = False  # double/halve rho at 10x residual imbalance

    def __post_init__(self):
        if not (self.rho > 0 and self.tol_primal > 0 and self.tol_dual > 0 and self.cg_tol > 0):
            raise ValueError("rho, tolerances and cg_tol must be positive")
        if self.max_iter < 1 or self.cg_max_iter < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.x_update not in ("auto", "fourier", "cg"):
            raise ValueError(f"unknown x_update mode {self.x_update!r}")


@dataclass(frozen=True)
class PdSettings:
    """Primal-dual inner-solver budget; tau*sigma*||grad||^2 must be <= 1."""

    n_iters: int = 50
    step_primal: float = 1.0 / math.sqrt(8.0)
    step_dual: float = 1.0 / math.sqrt(8.0)

    def __post_init__(self):
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if not (self.step_primal > 0 and self.step_dual > 0):
            raise ValueError("step sizes must be positive")
        if self.step_primal * self.step_dual * GRAD_NORM_SQ_BOUND > 1.0 + 1e-12:
            raise ValueError("step sizes violate tau*sigma*||grad||^2 <= 1")


@dataclass(frozen=True)
class MapObjective:
    """lam/2 ||A x - y_hat||^2 + gamma TV(x) + i_C(x) + alpha/2 ||x||^2."""

    operator: LinearOperator
    data: np.ndarray
    noise_precision: float
    prior: PriorSpec

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64).ravel())
        if data.size != self.operator.output_dim:
            raise ValueError(
                f"data length {data.size} does not match operator output "
                f"{self.operator.output_dim}"
            )
        if not self.noise_precision > 0:
            raise ValueError("noise_precision must be positive")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.operator.height

    @property
    def width(self) -> int:
        return self.operator.width

    def value(self, x: np.ndarray, feas_tol: float = 1e-9) -> float:
        x = np.asarray(x, dtype=np.float64).ravel()
        r = self.operator.apply(x) - self.data
        out = 0.5 * self.noise_precision * float(r @ r)
        return out + self.prior.value(x, self.height, self.width, feas_tol=feas_tol)


@dataclass
class SolveStats:
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    converged: bool
    x_update_mode: str
    cg_iterations: int = 0

    CSV_HEADER = "iterations,primal_residual,dual_residual,objective,converged,x_update_mode,cg_iterations"

    def csv_row(self) -> str:
        return (f"{self.iterations},{self.primal_residual:.6e},{self.dual_residual:.6e},"
                f"{self.objective:.10e},{int(self.converged)},{self.x_update_mode},"
                f"{self.cg_iterations}")


@dataclass
class TvProxInfo:
    primal_value: float
    dual_value: float

    @property
    def gap(self) -> float:
        return self.primal_value - self.dual_value


def _soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@lru_cache(maxsize=16)
def _grad_eig_sq(height: int, width: int) -> np.ndarray:
    """|Dh|^2 + |Dv|^2 over the 2-D Fourier grid (forward differences)."""
    eh = np.zeros((height, width))
    eh[0, 0] = -1.0
    eh[0, width - 1] += 1.0
    ev = np.zeros((height, width))
    ev[0, 0] += -1.0
    ev[height - 1, 0] += 1.0
    out = np.abs(np.fft.fft2(eh)) ** 2 + np.abs(np.fft.fft2(ev)) ** 2
    out.setflags(write=False)
    return out


def tv_prox(x: Image, weight: float, settings: PdSettings,
            return_info: bool = False):
    """Proximal point of weight * TV at x: argmin_u weight*TV(u) + ||u-x||^2/2.

    Runs exactly `settings.n_iters` primal-dual iterations with the dual
    variable clipped into [-weight, weight] each step. With
    `return_info=True` also returns a primal-dual gap estimate.
    """
    if not weight > 0:
        raise ValueError(f"weight must be positive, got {weight}")
    h, w = x.height, x.width
    x0 = x.data
    tau = settings.step_primal
    sigma = settings.step_dual
    u = x0.copy()
    u_bar = u.copy()
    p = np.zeros(2 * h * w)
    for _ in range(settings.n_iters):
        p = np.clip(p + sigma * grad_apply(u_bar, h, w), -weight, weight)
        u_old = u
        u = (u - tau * grad_adjoint(p, h, w) + tau * x0) / (1.0 + tau)
        u_bar = 2.0 * u - u_old
    out = Image(h, w, u)
    if not return_info:
        return out
    primal = weight * tv_norm(u, h, w) + 0.5 * float(np.sum((u - x0) ** 2))
    div_p = grad_adjoint(p, h, w)
    dual = float(grad_apply(x0, h, w) @ p) - 0.5 * float(div_p @ div_p)
    return out, TvProxInfo(primal_value=primal, dual_value=dual)


def _pcg(matvec: Callable[[np.ndarray], np.ndarray], b: np.ndarray, x0: np.ndarray,
         precond: Optional[Callable[[np.ndarray], np.ndarray]],
         tol: float, max_iter: int) -> Tuple[np.ndarray, int]:
    x = x0.copy()
    r = b - matvec(x)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        b_norm = 1.0
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = float(r @ z)
    for i in range(max_iter):
        if np.linalg.norm(r) <= tol * b_norm:
            return x, i
        mp = matvec(p)
        p_mp = float(p @ mp)
        if p_mp <= 0.0:
            raise SolverError("conjugate gradient breakdown: non-positive curvature")
        a = rz / p_mp
        x = x + a * p
        r = r - a * mp
        z = precond(r) if precond is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol * b_norm:
        return x, max_iter
    raise SolverError(
        f"conjugate gradient did not reach tol={tol} within {max_iter} iterations "
        f"(residual {np.linalg.norm(r) / b_norm:.3e})"
    )


def admm_solve(obj: MapObjective, settings: AdmmSettings, x0: Image) -> Tuple[Image, SolveStats]:
    """Minimize the MAP objective with ADMM; deterministic given inputs.

    The objective is normalized by the noise precision before splitting
    (same minimizer), so the default rho = 1 stays well scaled across
    noise levels; residuals and tolerances refer to the normalized
    problem while the reported objective uses the original units.

    Returns the constraint-block iterate (feasible by construction) and
    solve statistics. Hitting max_iter sets converged=False but is not an
    error; NaNs in the iterates raise SolverError.
    """
    op = obj.operator
    h, w = op.height, op.width
    d = h * w
    if (x0.height, x0.width) != (h, w):
        raise ValueError(f"x0 dimensions {x0.shape} do not match operator {h}x{w}")
    # normalized weights: minimize 1/2 ||Ax-y||^2 + (gamma/lam) TV + i_C
    #                              + (alpha/lam)/2 ||x||^2
    lam = 1.0
    gamma_n = obj.prior.gamma / obj.noise_precision
    alpha_n = obj.prior.alpha / obj.noise_precision
    prior = obj.prior
    rho = settings.rho

    mode = settings.x_update
    if mode == "auto":
        mode = "fourier" if op.has_fourier_diagonalization else "cg"
    if mode == "fourier" and not op.has_fourier_diagonalization:
        raise ValueError("fourier x-update requires a Fourier-diagonalizable operator")

    aty = op.adjoint(obj.data)
    grad_sq = _grad_eig_sq(h, w)

    gbar = float(np.mean(op.gram_diagonal)) if op.has_diagonal_gram else 0.0

    def make_solver(rho_now: float):
        if mode == "fourier":
            denom = lam * np.abs(op.eigenvalues) ** 2 + alpha_n + rho_now * grad_sq + rho_now

            def solve_x(rhs: np.ndarray, _x_prev: np.ndarray) -> Tuple[np.ndarray, int]:
                r = np.fft.fft2(rhs.reshape(h, w))
                return np.fft.ifft2(r / denom).real.ravel(), 0

            return solve_x

        def matvec(v: np.ndarray) -> np.ndarray:
            out = lam * op.gram_apply(v) + (alpha_n + rho_now) * v
            out += rho_now * grad_adjoint(grad_apply(v, h, w), h, w)
            return out

        precond = None
        if op.has_diagonal_gram:
            p_denom = lam * gbar + alpha_n + rho_now * grad_sq + rho_now

            def precond(r: np.ndarray) -> np.ndarray:
                rr = np.fft.fft2(r.reshape(h, w))
                return np.fft.ifft2(rr / p_denom).real.ravel()

        def solve_x(rhs: np.ndarray, x_prev: np.ndarray) -> Tuple[np.ndarray, int]:
            return _pcg(matvec, rhs, x_prev, precond, settings.cg_tol, settings.cg_max_iter)

        return solve_x

    solve_x = make_solver(rho)

    x = x0.data.copy()
    z1 = grad_apply(x, h, w)
    z2 = project_constraint(x, prior.constraint)
    u1 = np.zeros(2 * d)
    u2 = np.zeros(d)

    sqrt_dim_pri = math.sqrt(3 * d)
    sqrt_dim_dual = math.sqrt(d)
    thresh = gamma_n / rho

    iterations = 0
    cg_total = 0
    primal_res = np.inf
    dual_res = np.inf
    converged = False

    for iterations in range(1, settings.max_iter + 1):
        rhs = lam * aty + rho * grad_adjoint(z1 - u1, h, w) + rho * (z2 - u2)
        x, cg_n = solve_x(rhs, x)
        cg_total += cg_n

        gx = grad_apply(x, h, w)
        z1_old, z2_old = z1, z2
        z1 = _soft_threshold(gx + u1, thresh)
        z2 = project_constraint(x + u2, prior.constraint)
        u1 = u1 + gx - z1
        u2 = u2 + x - z2

        r1 = gx - z1
        r2 = x - z2
        primal_res = math.sqrt(float(r1 @ r1) + float(r2 @ r2))
        s = rho * (grad_adjoint(z1 - z1_old, h, w) + (z2 - z2_old))
        dual_res = float(np.linalg.norm(s))

        if not (np.isfinite(primal_res) and np.isfinite(dual_res)):
            raise SolverError(f"NaN/Inf in ADMM iterates at iteration {iterations}")

        kx_norm = math.sqrt(float(gx @ gx) + float(x @ x))
        z_norm = math.sqrt(float(z1 @ z1) + float(z2 @ z2))
        eps_pri = sqrt_dim_pri * settings.tol_primal + settings.tol_primal * max(kx_norm, z_norm)
        if primal_res <= eps_pri:
            if settings.primal_only:
                converged = True
                break
            dual_vec = rho * (grad_adjoint(u1, h, w) + u2)
            eps_dual = (sqrt_dim_dual * settings.tol_dual
                        + settings.tol_dual * float(np.linalg.norm(dual_vec)))
            if dual_res <= eps_dual:
                converged = True
                break

        if settings.residual_balancing:
            if primal_res > 10.0 * dual_res:
                rho *= 2.0
                u1 *= 0.5
                u2 *= 0.5
                thresh = gamma_n / rho
                solve_x = make_solver(rho)
            elif dual_res > 10.0 * primal_res:
                rho *= 0.5
                u1 *= 2.0
                u2 *= 2.0
                thresh = gamma_n / rho
                solve_x = make_solver(rho)

    result = z2.copy()
    stats = SolveStats(
        iterations=iterations,
        primal_residual=primal_res,
        dual_residual=dual_res,
        objective=obj.value(result, feas_tol=1e-9),
        converged=converged,
        x_update_mode=mode,
        cg_iterations=cg_total,
    )
    return Image(h, w, result), stats
