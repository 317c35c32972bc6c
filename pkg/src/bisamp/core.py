"""Core value types and the reproducible random-number contract.

Images are grayscale rasters stored as flat float64 vectors in row-major
order; all other modules operate on these flat vectors. Randomness is
keyed by (master_seed, stream_index) pairs so that independent workers
can draw independent, reproducible streams without coordination.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np

__all__ = [
    "Image",
    "Observation",
    "ChainMeta",
    "SampleChain",
    "RngStream",
    "gaussian_vector",
]


@dataclass(frozen=True)
class Image:
    """A height x width grayscale raster, flattened row-major.

    Intensities are nominally in [0, 1] but the type does not enforce it:
    Langevin samples routinely leave the constraint box. Entries must be
    finite.
    """

    height: int
    width: int
    data: np.ndarray

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError(f"image dimensions must be positive, got {self.height}x{self.width}")
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64).ravel())
        if data.size != self.height * self.width:
            raise ValueError(
                f"data length {data.size} does not match {self.height}x{self.width}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("image contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def as_matrix(self) -> np.ndarray:
        """View of the pixel data as a (height, width) array."""
        return self.data.reshape(self.height, self.width)

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Image":
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {m.shape}")
        return Image(m.shape[0], m.shape[1], m.ravel())

    def with_data(self, data: np.ndarray) -> "Image":
        return Image(self.height, self.width, data)


@dataclass(frozen=True)
class Observation:
    """Measured data vector together with its noise level.

    `operator_id` is a free-form reference to the forward operator that
    produced the observation (used for bookkeeping, not dispatch).
    """

    values: np.ndarray
    noise_std: float
    operator_id: str = ""

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).ravel())
        object.__setattr__(self, "values", values)
        if not self.noise_std > 0:
            raise ValueError(f"noise_std must be positive, got {self.noise_std}")

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def noise_precision(self) -> float:
        return 1.0 / (self.noise_std * self.noise_std)


@dataclass
class ChainMeta:
    seed: int = 0
    sampler: str = ""
    burn_in: int = 0
    thinning: int = 1
    wall_seconds: float = 0.0

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")


@dataclass
class SampleChain:
    """An ordered collection of image samples plus aligned scalar traces.

    `samples` is an (n, height*width) float64 array; each named trace is a
    length-n float64 vector aligned with the samples.
    """

    height: int
    width: int
    samples: np.ndarray
    traces: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: ChainMeta = field(default_factory=ChainMeta)

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError("chain image dimensions must be positive")
        d = self.height * self.width
        samples = np.asarray(self.samples, dtype=np.float64)
        samples = np.ascontiguousarray(samples.reshape(-1, d) if samples.size else samples.reshape(0, d))
        self.samples = samples
        traces = {}
        for name, t in self.traces.items():
            t = np.ascontiguousarray(np.asarray(t, dtype=np.float64).ravel())
            if t.size != samples.shape[0]:
                raise ValueError(
                    f"trace {name!r} has length {t.size}, expected {samples.shape[0]}"
                )
            traces[name] = t
        self.traces = traces

    def __len__(self) -> int:
        return self.samples.shape[0]

    def image(self, i: int) -> Image:
        return Image(self.height, self.width, self.samples[i])

    def images(self):
        for i in range(len(self)):
            yield self.image(i)

    def with_meta(self, **kw) -> "SampleChain":
        return SampleChain(self.height, self.width, self.samples, dict(self.traces),
                           replace(self.meta, **kw))


class RngStream:
    """Stateful stream of reproducible draws.

    Two fresh streams constructed with equal (master_seed, stream_index)
    produce identical sequences; distinct indices give statistically
    independent streams (counter-based Philox keyed via SeedSequence).
    A stream is owned by exactly one worker; everything else in this
    module is an immutable value object.
    """

    def __init__(self, master_seed: int, stream_index: int = 0):
        if stream_index < 0:
            raise ValueError("stream_index must be nonnegative")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_index,))
        self._gen = np.random.Generator(np.random.Philox(seq))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index})"


def gaussian_vector(stream: RngStream, n: int, std: float) -> np.ndarray:
    """Draw n i.i.d. samples from N(0, std^2), advancing the stream."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    return stream.generator.normal(0.0, std, size=n)
