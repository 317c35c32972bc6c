"""Linear forward operators: periodic blur, inpainting masks, and friends.

Operator methods act on flat float64 vectors (row-major images); the
module-level `apply` / `apply_adjoint` helpers accept and return `Image`
values. Blur assumes periodic boundaries and is diagonalized by the 2-D
DFT; masks have a diagonal Gram matrix.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Image, Observation, RngStream, gaussian_vector

__all__ = [
    "LinearOperator",
    "BlurOperator",
    "MaskOperator",
    "IdentityOperator",
    "DenseOperator",
    "StackedOperator",
    "PowerIterationError",
    "apply",
    "apply_adjoint",
    "operator_norm_sq",
    "degrade",
    "uniform_kernel",
    "load_kernel",
    "save_kernel",
    "mask_from_image",
]


class PowerIterationError(Exception):
    """Power iteration failed to converge; `last_estimate` holds the final value."""

    def __init__(self, message: str, last_estimate: float):
        super().__init__(message)
        self.last_estimate = last_estimate


class LinearOperator:
    """Abstract linear map from images (flat d-vectors) to data (m-vectors)."""

    height: int
    width: int
    op_id: str = ""
    has_fourier_diagonalization = False
    has_diagonal_gram = False

    @property
    def input_dim(self) -> int:
        return self.height * self.width

    @property
    def output_dim(self) -> int:
        raise NotImplementedError

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gram_apply(self, x: np.ndarray) -> np.ndarray:
        """A^T A x; subclasses override when structure allows."""
        return self.adjoint(self.apply(x))

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != self.input_dim:
            raise ValueError(f"{self.op_id or type(self).__name__}: input has length "
                             f"{x.size}, expected {self.input_dim}")
        return x

    def _check_output(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64).ravel()
        if u.size != self.output_dim:
            raise ValueError(f"{self.op_id or type(self).__name__}: data has length "
                             f"{u.size}, expected {self.output_dim}")
        return u


class BlurOperator(LinearOperator):
    """Circular convolution with an odd k x k kernel (periodic boundary).

    Eigenvalues are the 2-D DFT of the kernel embedded at the origin with
    a circular shift, so `apply` equals ifft2(eigenvalues * fft2(x)).
    """

    has_fourier_diagonalization = True

    def __init__(self, kernel: np.ndarray, height: int, width: int):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
            raise ValueError(f"kernel must be square, got shape {kernel.shape}")
        k = kernel.shape[0]
        if k % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {k}")
        if k > min(height, width):
            raise ValueError(f"kernel {k}x{k} larger than image {height}x{width}")
        self.kernel = kernel
        self.height = int(height)
        self.width = int(width)
        embedded = np.zeros((height, width))
        r = k // 2
        for i in range(k):
            for j in range(k):
                embedded[(i - r) % height, (j - r) % width] = kernel[i, j]
        self.eigenvalues = np.fft.fft2(embedded)
        self.op_id = f"blur:{k}x{k}:{height}x{width}"

    @property
    def output_dim(self) -> int:
        return self.input_dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        X = np.fft.fft2(x.reshape(self.height, self.width))
        return np.fft.ifft2(self.eigenvalues * X).real.ravel()

    def adjoint(self, u: np.ndarray) -> np.ndarray:
        u = self._check_output(u)
        U = np.fft.fft2(u.reshape(self.height, self.width))
        return np.fft.ifft2(np.conj(self.eigenvalues) * U).real.ravel()

    def gram_apply(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        X = np.fft.fft2(x.reshape(self.height, self.width))
        return np.fft.ifft2((np.abs(self.eigenvalues) ** 2) * X).real.ravel()


class MaskOperator(LinearOperator):
    """Selects the pixels listed in `keep_indices`; adjoint scatters back."""

    has_diagonal_gram = True

    def __init__(self, keep_indices: Sequence[int], height: int, width: int):
        keep = np.asarray(keep_indices, dtype=np.int64).ravel()
        if keep.size == 0:
            raise ValueError("mask keeps no pixels")
        if np.any(np.diff(keep) <= 0):
            raise ValueError("keep_indices must be strictly increasing")
        if keep[0] < 0 or keep[-1] >= height * width:
            raise ValueError("keep_indices out of range")
        self.keep_indices = keep
        self.height = int(height)
        self.width = int(width)
        self.op_id = f"mask:{keep.size}/{height * width}:{height}x{width}"

    @property
    def output_dim(self) -> int:
        return self.keep_indices.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        return x[self.keep_indices]

    def adjoint(self, u: np.ndarray) -> np.ndarray:
        u = self._check_output(u)
        out = np.zeros(self.input_dim)
        out[self.keep_indices] = u
        return out

    @property
    def gram_diagonal(self) -> np.ndarray:
        diag = np.zeros(self.input_dim)
        diag[self.keep_indices] = 1.0
        return diag

    def gram_apply(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        out = np.zeros_like(x)
        out[self.keep_indices] = x[self.keep_indices]
        return out


class IdentityOperator(LinearOperator):
    has_fourier_diagonalization = True
    has_diagonal_gram = True

    def __init__(self, height: int, width: int):
        self.height = int(height)
        self.width = int(width)
        self.eigenvalues = np.ones((height, width), dtype=complex)
        self.op_id = f"identity:{height}x{width}"

    @property
    def output_dim(self) -> int:
        return self.input_dim

    @property
    def gram_diagonal(self) -> np.ndarray:
        return np.ones(self.input_dim)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._check_input(x).copy()

    def adjoint(self, u: np.ndarray) -> np.ndarray:
        return self._check_output(u).copy()

    def gram_apply(self, x: np.ndarray) -> np.ndarray:
        return self._check_input(x).copy()


class DenseOperator(LinearOperator):
    """Explicit matrix operator, mainly for small synthetic problems."""

    def __init__(self, matrix: np.ndarray, height: int, width: int):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != height * width:
            raise ValueError(
                f"matrix shape {matrix.shape} incompatible with {height}x{width} images"
            )
        self.matrix = matrix
        self.height = int(height)
        self.width = int(width)
        self.op_id = f"dense:{matrix.shape[0]}x{matrix.shape[1]}"

    @property
    def output_dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ self._check_input(x)

    def adjoint(self, u: np.ndarray) -> np.ndarray:
        return self.matrix.T @ self._check_output(u)


class StackedOperator(LinearOperator):
    """Vertical stack [A1; A2; ...] of operators on the same image space."""

    def __init__(self, ops: Sequence[LinearOperator]):
        if not ops:
            raise ValueError("need at least one operator to stack")
        h, w = ops[0].height, ops[0].width
        for op in ops:
            if (op.height, op.width) != (h, w):
                raise ValueError("stacked operators must share image dimensions")
        self.ops = list(ops)
        self.height = h
        self.width = w
        self.op_id = "stack[" + ",".join(op.op_id for op in ops) + "]"

    @property
    def output_dim(self) -> int:
        return sum(op.output_dim for op in self.ops)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        return np.concatenate([op.apply(x) for op in self.ops])

    def adjoint(self, u: np.ndarray) -> np.ndarray:
        u = self._check_output(u)
        out = np.zeros(self.input_dim)
        i = 0
        for op in self.ops:
            out += op.adjoint(u[i : i + op.output_dim])
            i += op.output_dim
        return out


def apply(op: LinearOperator, x: Image) -> np.ndarray:
    if (x.height, x.width) != (op.height, op.width):
        raise ValueError(f"image {x.shape} does not match operator {op.height}x{op.width}")
    return op.apply(x.data)


def apply_adjoint(op: LinearOperator, u: np.ndarray) -> Image:
    return Image(op.height, op.width, op.adjoint(u))


def operator_norm_sq(op: LinearOperator, tol: float = 1e-6, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of A^T A, i.e. ||A||^2.

    Uses the Fourier eigenvalues or the diagonal Gram when available;
    otherwise seeded power iteration to relative tolerance `tol`.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if op.has_fourier_diagonalization:
        return float(np.max(np.abs(op.eigenvalues) ** 2))
    if op.has_diagonal_gram:
        return float(np.max(op.gram_diagonal))
    stream = RngStream(0xB15A, 0)
    v = gaussian_vector(stream, op.input_dim, 1.0)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = op.gram_apply(v)
        new_estimate = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if estimate > 0 and abs(new_estimate - estimate) <= tol * abs(new_estimate):
            return new_estimate
        estimate = new_estimate
    raise PowerIterationError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations",
        last_estimate=estimate,
    )


def degrade(op: LinearOperator, x: Image, sigma: float, stream: RngStream) -> Observation:
    """Forward-map x and add white Gaussian noise of standard deviation sigma."""
    clean = apply(op, x)
    noisy = clean + gaussian_vector(stream, clean.size, sigma)
    return Observation(values=noisy, noise_std=sigma, operator_id=op.op_id)


def uniform_kernel(k: int) -> np.ndarray:
    """k x k averaging kernel (entries sum to one)."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {k}")
    return np.full((k, k), 1.0 / (k * k))


def load_kernel(path) -> np.ndarray:
    """Plain-text kernel file: first line k, then k rows of k reals."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"empty kernel file {path}")
    k = int(lines[0])
    if len(lines) < 1 + k:
        raise ValueError(f"kernel file {path} declares {k} rows but has {len(lines) - 1}")
    rows = [[float(t) for t in lines[1 + i].split()] for i in range(k)]
    kernel = np.asarray(rows, dtype=np.float64)
    if kernel.shape != (k, k):
        raise ValueError(f"kernel file {path} declares {k}x{k} but rows do not match")
    return kernel


def save_kernel(kernel: np.ndarray, path) -> None:
    kernel = np.asarray(kernel, dtype=np.float64)
    k = kernel.shape[0]
    lines = [str(k)] + [" ".join(repr(v) for v in row) for row in kernel]
    Path(path).write_text("\n".join(lines) + "\n")


def mask_from_image(mask_image: Image) -> MaskOperator:
    """Pixels brighter than 0.5 are observed."""
    keep = np.nonzero(mask_image.data > 0.5)[0]
    if keep.size == 0:
        raise ValueError("mask image marks no observed pixels")
    return MaskOperator(keep, mask_image.height, mask_image.width)
