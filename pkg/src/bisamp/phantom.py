"""Deterministic synthetic test image: piecewise-constant shapes on a
smooth ramp, a good match for gradient-sparsity priors."""

from __future__ import annotations

import numpy as np

from .core import Image

__all__ = ["phantom"]


def phantom(height: int = 64, width: int = 64) -> Image:
    """Grayscale phantom with intensities in [0, 1]."""
    if height < 8 or width < 8:
        raise ValueError("phantom needs at least 8x8 pixels")
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    u = ii / (height - 1)
    v = jj / (width - 1)

    img = 0.15 + 0.25 * v  # gentle horizontal ramp background

    # bright disk, upper left
    r2 = (u - 0.32) ** 2 + (v - 0.3) ** 2
    img = np.where(r2 < 0.045, 0.85, img)

    # dark rectangle, lower right
    rect = (u > 0.55) & (u < 0.85) & (v > 0.5) & (v < 0.9)
    img = np.where(rect, 0.05, img)

    # mid-gray annulus fragment
    r2c = (u - 0.7) ** 2 + (v - 0.25) ** 2
    ring = (r2c > 0.012) & (r2c < 0.03)
    img = np.where(ring, 0.6, img)

    # thin bright horizontal bar
    bar = (u > 0.12) & (u < 0.16) & (v > 0.55) & (v < 0.95)
    img = np.where(bar, 0.95, img)

    return Image.from_matrix(np.clip(img, 0.0, 1.0))
