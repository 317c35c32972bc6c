"""Samplers: RTO (perturb data, then optimize), MYULA (proximal unadjusted
Langevin), and a hierarchical Gibbs wrapper around RTO that learns the
noise precision and the TV weight.

RTO produces independent samples: sample i perturbs the data with stream
(seed, i) and re-solves the MAP problem, so chains are reproducible and
identical for any worker count. MYULA and Gibbs are sequential chains.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .core import ChainMeta, Image, Observation, RngStream, SampleChain, gaussian_vector
from .operators import LinearOperator, operator_norm_sq
from .regularizers import PriorSpec, project_constraint, tv_norm
from .solvers import AdmmSettings, MapObjective, PdSettings, SolverError, admm_solve, tv_prox

__all__ = [
    "SamplerError",
    "RtoSettings",
    "MyulaSettings",
    "GibbsSettings",
    "rto_sample",
    "myula_sample",
    "gibbs_sample",
    "map_estimate",
    "myula_defaults",
    "myula_step_mean",
    "gamma_conditional_params",
]


class SamplerError(Exception):
    """A sampler aborted (per-sample solver failure persisted after retry)."""


@dataclass(frozen=True)
class RtoSettings:
    n_samples: int
    admm: AdmmSettings = field(default_factory=AdmmSettings)
    worker_count: int = 1
    seed: int = 0
    noise_scale: float = 1.0  # test hook: 0 disables the data perturbation
    init: str = "map"  # starting point for each perturbed solve: map | adjoint | zero
    x0: Optional[Image] = None  # explicit starting point; overrides init

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if self.init not in ("map", "adjoint", "zero"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class MyulaSettings:
    total_iters: int
    delta: float
    alpha1: float
    alpha2: float
    burn_in: int = 0
    thinning: int = 1
    n_pd: int = 50
    seed: int = 0
    init: Optional[Image] = None
    noise_scale: float = 1.0  # test hook: 0 turns the chain into gradient descent

    def __post_init__(self):
        if self.total_iters < 1:
            raise ValueError("total_iters must be >= 1")
        if not (0 <= self.burn_in < self.total_iters):
            raise ValueError("burn_in must satisfy 0 <= burn_in < total_iters")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if not (self.delta > 0 and self.alpha1 > 0 and self.alpha2 > 0):
            raise ValueError("delta, alpha1, alpha2 must be positive")
        if self.n_pd < 1:
            raise ValueError("n_pd must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")


@dataclass(frozen=True)
class GibbsSettings:
    n_samples: int
    admm: AdmmSettings = field(default_factory=AdmmSettings)
    a_lambda: float = 1.0
    b_lambda: float = 1e-4
    a_gamma: float = 1.0
    b_gamma: float = 1e-4
    seed: int = 0
    init: Optional[Image] = None
    # Shape increment of the TV-weight conditional. None selects d - 1:
    # the TV seminorm vanishes on the constant ray inside the
    # nonnegativity cone, so the prior normalization scales like
    # gamma^-(d-1) (validated numerically in the test suite).
    gamma_shape_increment: Optional[int] = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not (self.a_lambda > 0 and self.b_lambda > 0 and self.a_gamma > 0 and self.b_gamma > 0):
            raise ValueError("hyperprior shapes and rates must be positive")


def myula_defaults(op_norm_sq: float, sigma: float) -> Tuple[float, float]:
    """Reference envelope parameter and step size.

    alpha1 = alpha2 = sigma^2 / ||A^T A|| and
    delta = 1 / (2/alpha1 + 2/alpha2 + 2 ||A^T A|| / sigma^2).
    """
    lip = op_norm_sq / (sigma * sigma)
    alpha = 1.0 / lip
    delta = 1.0 / (2.0 / alpha + 2.0 / alpha + 2.0 * lip)
    return alpha, delta


def _perturbation(stream: RngStream, m: int, std: float) -> np.ndarray:
    if std > 0:
        return gaussian_vector(stream, m, std)
    return np.zeros(m)


def _default_x0(obs: Observation, op: LinearOperator, how: str) -> Image:
    if how == "zero":
        return Image(op.height, op.width, np.zeros(op.input_dim))
    if obs.size == op.input_dim:
        return Image(op.height, op.width, obs.values)
    return Image(op.height, op.width, op.adjoint(obs.values))


def _rto_one(op, obs, prior, admm, seed, n_samples, noise_scale, x0, index):
    """One RTO draw; retries once with a fresh perturbation on solver failure."""
    lam = obs.noise_precision
    for attempt, stream_index in enumerate((index, n_samples + index)):
        stream = RngStream(seed, stream_index)
        z = _perturbation(stream, obs.size, obs.noise_std * noise_scale)
        obj = MapObjective(op, obs.values + z, lam, prior)
        try:
            img, stats = admm_solve(obj, admm, x0)
            return img.data, stats.objective, stats.iterations
        except SolverError as e:
            if attempt == 1:
                raise SamplerError(f"RTO sample {index} failed twice: {e}") from e
    raise AssertionError("unreachable")


def _rto_batch(payload):
    op, obs, prior, admm, seed, n_samples, noise_scale, x0, indices = payload
    out = []
    for i in indices:
        data, objective, iters = _rto_one(op, obs, prior, admm, seed, n_samples,
                                          noise_scale, x0, i)
        out.append((i, data, objective, iters))
    return out


def rto_sample(obs: Observation, op: LinearOperator, prior: PriorSpec,
               settings: RtoSettings) -> SampleChain:
    """Independent draws: perturb the data, re-solve the MAP problem.

    Sample i uses stream (seed, i), so the chain is identical for any
    worker count. Requires prior.alpha > 0 when the operator maps to a
    strictly smaller data space (rank-deficient Gram matrix).
    """
    if obs.size < op.input_dim and prior.alpha == 0:
        raise ValueError("operator is rank deficient (m < d); prior.alpha must be positive")
    t0 = time.perf_counter()
    h, w = op.height, op.width
    if settings.x0 is not None:
        x0 = settings.x0
    elif settings.init == "map":
        x0 = map_estimate(obs, op, prior, settings.admm)
    else:
        x0 = _default_x0(obs, op, settings.init)

    n = settings.n_samples
    payload_base = (op, obs, prior, settings.admm, settings.seed, n, settings.noise_scale, x0)
    samples = np.empty((n, h * w))
    objectives = np.empty(n)
    iters = np.empty(n)

    if settings.worker_count == 1:
        results = _rto_batch(payload_base + (list(range(n)),))
    else:
        chunk = max(1, math.ceil(n / (4 * settings.worker_count)))
        batches = [payload_base + (list(range(s, min(s + chunk, n))),)
                   for s in range(0, n, chunk)]
        results = []
        with ProcessPoolExecutor(max_workers=settings.worker_count) as pool:
            for batch in pool.map(_rto_batch, batches):
                results.extend(batch)

    for i, data, objective, it in results:
        samples[i] = data
        objectives[i] = objective
        iters[i] = it

    meta = ChainMeta(seed=settings.seed, sampler="rto", burn_in=0, thinning=1,
                     wall_seconds=time.perf_counter() - t0)
    return SampleChain(h, w, samples,
                       {"objective": objectives, "admm_iterations": iters}, meta)


def _drift(x: np.ndarray, obs: Observation, op: LinearOperator, prior: PriorSpec,
           delta: float, alpha1: float, alpha2: float, pd: PdSettings,
           h: int, w: int) -> np.ndarray:
    lam = obs.noise_precision
    g = lam * op.adjoint(op.apply(x) - obs.values)
    if prior.gamma > 0:
        p = tv_prox(Image(h, w, x), prior.gamma * alpha1, pd)
        g = g + (x - p.data) / alpha1
    if prior.constraint != "none":
        g = g + (x - project_constraint(x, prior.constraint)) / alpha2
    return x - delta * g


def myula_step_mean(x: Image, obs: Observation, op: LinearOperator, prior: PriorSpec,
                    settings: MyulaSettings) -> Image:
    """Deterministic part of one MYULA transition (the Gaussian kernel mean)."""
    pd = PdSettings(n_iters=settings.n_pd)
    out = _drift(x.data, obs, op, prior, settings.delta, settings.alpha1,
                 settings.alpha2, pd, x.height, x.width)
    return x.with_data(out)


def myula_sample(obs: Observation, op: LinearOperator, prior: PriorSpec,
                 settings: MyulaSettings) -> SampleChain:
    """Langevin chain on the envelope-smoothed posterior.

    One step:  x' = x - delta * [A^T(Ax - y)/sigma^2
                                 + (x - prox_TV(x)) / alpha1
                                 + (x - proj_C(x)) / alpha2]
                    + sqrt(2 delta) * xi.

    Stores every `thinning`-th state after `burn_in` steps.
    """
    t0 = time.perf_counter()
    h, w = op.height, op.width
    d = h * w

    lip = operator_norm_sq(op) * obs.noise_precision + 1.0 / settings.alpha1 + 1.0 / settings.alpha2
    if settings.delta > 1.0 / lip * (1.0 + 1e-12):
        warnings.warn(
            f"MYULA step size {settings.delta:.3e} exceeds the stability bound "
            f"{1.0 / lip:.3e}; the chain may diverge",
            stacklevel=2,
        )

    x0 = settings.init if settings.init is not None else _default_x0(obs, op, "adjoint")
    if (x0.height, x0.width) != (h, w):
        raise ValueError(f"init image {x0.shape} does not match operator {h}x{w}")

    pd = PdSettings(n_iters=settings.n_pd)
    stream = RngStream(settings.seed, 0)
    noise_std = math.sqrt(2.0 * settings.delta) * settings.noise_scale

    n_keep = (settings.total_iters - settings.burn_in) // settings.thinning
    samples = np.empty((n_keep, d))
    energy = np.empty(n_keep)
    lam = obs.noise_precision

    x = x0.data.copy()
    kept = 0
    for k in range(1, settings.total_iters + 1):
        x = _drift(x, obs, op, prior, settings.delta, settings.alpha1,
                   settings.alpha2, pd, h, w)
        if noise_std > 0:
            x = x + gaussian_vector(stream, d, noise_std)
        if not np.isfinite(x[0]) or not np.all(np.isfinite(x)):
            raise SolverError(f"MYULA diverged (non-finite state) at step {k}")
        if k > settings.burn_in and (k - settings.burn_in) % settings.thinning == 0:
            samples[kept] = x
            r = op.apply(x) - obs.values
            energy[kept] = 0.5 * lam * float(r @ r) + prior.gamma * tv_norm(x, h, w)
            kept += 1

    meta = ChainMeta(seed=settings.seed, sampler="myula", burn_in=settings.burn_in,
                     thinning=settings.thinning, wall_seconds=time.perf_counter() - t0)
    return SampleChain(h, w, samples[:kept], {"energy": energy[:kept]}, meta)


def gamma_conditional_params(x: np.ndarray, obs: Observation, op: LinearOperator,
                             settings: GibbsSettings) -> Tuple[float, float, float, float]:
    """(shape, rate) pairs of the lambda and gamma conditionals at state x."""
    m = obs.size
    d = op.input_dim
    resid = op.apply(x) - obs.values
    shape_lam = settings.a_lambda + 0.5 * m
    rate_lam = settings.b_lambda + 0.5 * float(resid @ resid)
    inc = settings.gamma_shape_increment
    if inc is None:
        inc = d - 1
    shape_gam = settings.a_gamma + inc
    rate_gam = settings.b_gamma + tv_norm(x, op.height, op.width)
    return shape_lam, rate_lam, shape_gam, rate_gam


def gibbs_sample(obs: Observation, op: LinearOperator, prior_template: PriorSpec,
                 settings: GibbsSettings) -> SampleChain:
    """Hierarchical Gibbs: Gamma conditionals for (lambda, gamma), then one
    RTO draw per sweep at the current hyperparameters.

    The constraint must be scale invariant (nonnegativity or none) and
    prior_template.alpha must be positive.
    """
    if prior_template.constraint not in ("nonneg", "none"):
        raise ValueError("hierarchical Gibbs requires the nonnegativity constraint or none")
    if not prior_template.alpha > 0:
        raise ValueError("hierarchical Gibbs requires prior_template.alpha > 0")
    t0 = time.perf_counter()
    h, w = op.height, op.width
    d = h * w
    m = obs.size

    x0 = settings.init if settings.init is not None else _default_x0(obs, op, "adjoint")
    x = project_constraint(x0.data, prior_template.constraint)

    n = settings.n_samples
    samples = np.empty((n, d))
    lam_trace = np.empty(n)
    gam_trace = np.empty(n)
    iters = np.empty(n)

    for k in range(n):
        stream = RngStream(settings.seed, k)
        gen = stream.generator
        shape_lam, rate_lam, shape_gam, rate_gam = gamma_conditional_params(
            x, obs, op, settings)
        lam_k = float(gen.gamma(shape_lam, 1.0 / rate_lam))
        gam_k = float(gen.gamma(shape_gam, 1.0 / rate_gam))

        prior_k = PriorSpec(gam_k, prior_template.constraint, prior_template.alpha)
        sigma_k = 1.0 / math.sqrt(lam_k)
        solved = None
        for attempt, stream_index in enumerate((k, n + k)):
            if attempt == 1:
                stream = RngStream(settings.seed, stream_index)
            z = _perturbation(stream, m, sigma_k)
            obj = MapObjective(op, obs.values + z, lam_k, prior_k)
            try:
                img, stats = admm_solve(obj, settings.admm, Image(h, w, x))
                solved = (img, stats)
                break
            except SolverError as e:
                if attempt == 1:
                    raise SamplerError(f"Gibbs sweep {k} failed twice: {e}") from e
        img, stats = solved
        x = img.data
        samples[k] = x
        lam_trace[k] = lam_k
        gam_trace[k] = gam_k
        iters[k] = stats.iterations

    meta = ChainMeta(seed=settings.seed, sampler="gibbs", burn_in=0, thinning=1,
                     wall_seconds=time.perf_counter() - t0)
    return SampleChain(h, w, samples,
                       {"lambda": lam_trace, "gamma": gam_trace, "admm_iterations": iters},
                       meta)


def map_estimate(obs: Observation, op: LinearOperator, prior: PriorSpec,
                 admm: AdmmSettings, x0: Optional[Image] = None) -> Image:
    """MAP point estimate: solve the objective on the unperturbed data."""
    if x0 is None:
        x0 = _default_x0(obs, op, "adjoint")
    obj = MapObjective(op, obs.values, obs.noise_precision, prior)
    img, _ = admm_solve(obj, admm, x0)
    return img
