"""Chain summaries and quality metrics: PSNR, SSIM, per-pixel statistics,
and autocorrelation functions along likelihood-informed directions.

ACFs are computed on scalar projections of the chain: Fourier modes of
the forward operator's diagonalization basis for deblurring (slowest
modes, i.e. smallest nonzero |eigenvalue|, plus DC) or plain pixels for
inpainting. Curves carry the pointwise 99% white-noise band 2.576/sqrt(N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Image, SampleChain
from .operators import LinearOperator

__all__ = [
    "AcfCurve",
    "SummaryImages",
    "psnr",
    "ssim",
    "summarize",
    "acf",
    "acf_values",
    "fourier_directions",
    "pixel_directions",
]


def psnr(x: Image, ref: Image) -> float:
    """Peak signal-to-noise ratio in dB for dynamic range 1; inf when equal."""
    if x.shape != ref.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {ref.shape}")
    mse = float(np.mean((x.data - ref.data) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


_SSIM_RADIUS = 5
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _ssim_kernel() -> np.ndarray:
    t = np.arange(-_SSIM_RADIUS, _SSIM_RADIUS + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / _SSIM_SIGMA) ** 2)
    return k / k.sum()


def _filter_valid(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable correlation with a 1-D kernel, 'valid' on both axes."""
    out = sliding_window_view(a, k.size, axis=0) @ k
    return sliding_window_view(out, k.size, axis=1) @ k


def ssim(x: Image, ref: Image) -> float:
    """Mean structural similarity: 11x11 Gaussian window (std 1.5),
    K1=0.01, K2=0.03, dynamic range 1."""
    if x.shape != ref.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {ref.shape}")
    win = 2 * _SSIM_RADIUS + 1
    if x.height < win or x.width < win:
        raise ValueError(f"image {x.shape} smaller than the {win}x{win} SSIM window")
    a = x.as_matrix()
    b = ref.as_matrix()
    k = _ssim_kernel()
    ua = _filter_valid(a, k)
    ub = _filter_valid(b, k)
    vaa = _filter_valid(a * a, k) - ua * ua
    vbb = _filter_valid(b * b, k) - ub * ub
    vab = _filter_valid(a * b, k) - ua * ub
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    s = ((2 * ua * ub + c1) * (2 * vab + c2)) / ((ua * ua + ub * ub + c1) * (vaa + vbb + c2))
    return float(s.mean())


@dataclass
class SummaryImages:
    mmse: Image
    std: Image
    rel_err: np.ndarray  # per-sample ||x_i - mmse|| / ||mmse||


def summarize(chain: SampleChain) -> SummaryImages:
    """Posterior mean (MMSE), per-pixel standard deviation (N-1 denominator)
    and per-sample relative errors against the mean."""
    n = len(chain)
    if n == 0:
        raise ValueError("cannot summarize an empty chain")
    mean = chain.samples.mean(axis=0)
    if n == 1:
        std = np.zeros_like(mean)
    else:
        std = chain.samples.std(axis=0, ddof=1)
    denom = float(np.linalg.norm(mean))
    if denom == 0.0:
        denom = 1.0  # degenerate all-zero mean; report absolute norms
    rel = np.linalg.norm(chain.samples - mean, axis=1) / denom
    return SummaryImages(
        mmse=Image(chain.height, chain.width, mean),
        std=Image(chain.height, chain.width, std),
        rel_err=rel,
    )


@dataclass
class AcfCurve:
    direction_label: str
    lags: np.ndarray
    values: np.ndarray
    confidence_band: float  # pointwise 99% white-noise half-width 2.576/sqrt(N)


def acf_values(z: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased-normalized sample autocorrelation of a scalar sequence."""
    z = np.asarray(z, dtype=np.float64)
    n = z.size
    zc = z - z.mean()
    c0 = float(zc @ zc) / n
    if c0 <= 0.0:
        raise ValueError("sequence has zero variance")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = (float(zc[:-k] @ zc[k:]) / n) / c0
    return out


def fourier_directions(op: LinearOperator, count: int = 8) -> List[tuple]:
    """Mode indices (row, col) ordered slowest first (smallest nonzero
    |eigenvalue| of A), de-duplicated under conjugate symmetry, DC last."""
    if not op.has_fourier_diagonalization:
        raise ValueError("operator has no Fourier diagonalization")
    if count < 1:
        raise ValueError("count must be >= 1")
    mags = np.abs(op.eigenvalues)
    h, w = mags.shape
    seen = set()
    modes = []
    for flat in np.argsort(mags, axis=None):
        r, c = divmod(int(flat), w)
        if (r, c) == (0, 0):
            continue
        conj = ((h - r) % h, (w - c) % w)
        canon = min((r, c), conj)
        if canon in seen:
            continue
        seen.add(canon)
        modes.append(canon)
        if len(modes) == count - 1:
            break
    modes.append((0, 0))
    return modes


def pixel_directions(d: int, count: int = 8) -> List[int]:
    """Evenly spaced pixel indices."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return sorted(set(np.linspace(0, d - 1, count).astype(int).tolist()))


def _mode_vector(r: int, c: int, h: int, w: int) -> np.ndarray:
    rows = np.exp(-2j * np.pi * r * np.arange(h) / h)
    cols = np.exp(-2j * np.pi * c * np.arange(w) / w)
    return np.outer(rows, cols).ravel()


def acf(chain: SampleChain, basis: str = "pixel",
        directions: Union[int, Sequence] = 8,
        operator: Optional[LinearOperator] = None,
        max_lag: Optional[int] = None) -> List[AcfCurve]:
    """ACF curves of the chain projected onto basis directions.

    basis "fourier" projects onto DFT modes (real and imaginary parts as
    separate curves; mode selection needs `operator` when `directions` is
    a count). basis "pixel" tracks individual pixels. Requires chain
    length >= 10 * max_lag.
    """
    n = len(chain)
    if max_lag is None:
        max_lag = max(1, min(100, n // 10))
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if n < 10 * max_lag:
        raise ValueError(f"chain of length {n} too short for max_lag={max_lag} "
                         f"(need >= {10 * max_lag})")
    band = 2.576 / math.sqrt(n)
    lags = np.arange(max_lag + 1)
    h, w = chain.height, chain.width
    curves: List[AcfCurve] = []

    if basis == "pixel":
        if isinstance(directions, int):
            idx = pixel_directions(h * w, directions)
        else:
            idx = [int(i) for i in directions]
        for i in idx:
            if not 0 <= i < h * w:
                raise ValueError(f"pixel index {i} out of range")
            curves.append(AcfCurve(f"pixel[{i}]", lags,
                                   acf_values(chain.samples[:, i], max_lag), band))
        return curves

    if basis == "fourier":
        if isinstance(directions, int):
            if operator is None:
                raise ValueError("fourier basis with a direction count needs the operator")
            modes = fourier_directions(operator, directions)
        else:
            modes = [tuple(m) for m in directions]
        for r, c in modes:
            vec = _mode_vector(r, c, h, w)
            z = chain.samples @ vec
            self_conjugate = (2 * r) % h == 0 and (2 * c) % w == 0
            curves.append(AcfCurve(f"mode[{r},{c}].re", lags,
                                   acf_values(z.real, max_lag), band))
            if not self_conjugate:
                curves.append(AcfCurve(f"mode[{r},{c}].im", lags,
                                       acf_values(z.imag, max_lag), band))
        return curves

    raise ValueError(f"unknown basis {basis!r}")
