"""Persistence: binary sample-chain files and PGM images.

Chain file layout (all integers little-endian):

    magic "BISC" | version u16 | height u32 | width u32 | sample_count u64
    | trace_count u16 | per trace: name_len u16 + UTF-8 name
    | samples as contiguous little-endian f64 (sample_count * height * width)
    | traces as contiguous little-endian f64 (trace_count * sample_count)
    | meta_len u32 + UTF-8 JSON

Images are 8- or 16-bit binary PGM (P5); intensities map linearly onto
[0, 1] (16-bit rasters are big-endian, as PGM requires).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .core import ChainMeta, Image, SampleChain

__all__ = [
    "ChainFormatError",
    "ChainTruncatedError",
    "save_chain",
    "load_chain",
    "write_pgm",
    "read_pgm",
]

MAGIC = b"BISC"
VERSION = 1

PathLike = Union[str, Path]


class ChainFormatError(Exception):
    """The file does not follow the chain format (bad magic, version, field)."""


class ChainTruncatedError(ChainFormatError):
    """The file ended before the declared payload was complete."""


def save_chain(chain: SampleChain, path: PathLike) -> None:
    n = len(chain)
    names = list(chain.traces.keys())
    parts = [
        MAGIC,
        struct.pack("<HIIQH", VERSION, chain.height, chain.width, n, len(names)),
    ]
    for name in names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(chain.samples, dtype="<f8").tobytes())
    for name in names:
        parts.append(np.ascontiguousarray(chain.traces[name], dtype="<f8").tobytes())
    meta = {
        "seed": chain.meta.seed,
        "sampler": chain.meta.sampler,
        "burn_in": chain.meta.burn_in,
        "thinning": chain.meta.thinning,
        "wall_seconds": chain.meta.wall_seconds,
    }
    raw_meta = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(raw_meta)))
    parts.append(raw_meta)
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ChainTruncatedError(
                f"chain file truncated: needed {n} bytes at offset {self.pos}, "
                f"have {len(self.blob) - self.pos}"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_chain(path: PathLike) -> SampleChain:
    r = _Reader(Path(path).read_bytes())
    magic = r.take(4)
    if magic != MAGIC:
        raise ChainFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, height, width, n, n_traces = r.unpack("<HIIQH")
    if version != VERSION:
        raise ChainFormatError(f"unsupported chain version {version}")
    if height == 0 or width == 0:
        raise ChainFormatError("zero image dimension in chain header")
    names = []
    for _ in range(n_traces):
        (ln,) = r.unpack("<H")
        try:
            names.append(r.take(ln).decode("utf-8"))
        except UnicodeDecodeError as e:
            raise ChainFormatError(f"trace name is not valid UTF-8: {e}") from e
    d = height * width
    samples = np.frombuffer(r.take(8 * n * d), dtype="<f8").reshape(n, d).copy()
    traces = {}
    for name in names:
        traces[name] = np.frombuffer(r.take(8 * n), dtype="<f8").copy()
    (meta_len,) = r.unpack("<I")
    try:
        meta_dict = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ChainFormatError(f"bad meta block: {e}") from e
    meta = ChainMeta(
        seed=int(meta_dict.get("seed", 0)),
        sampler=str(meta_dict.get("sampler", "")),
        burn_in=int(meta_dict.get("burn_in", 0)),
        thinning=int(meta_dict.get("thinning", 1)),
        wall_seconds=float(meta_dict.get("wall_seconds", 0.0)),
    )
    return SampleChain(height, width, samples, traces, meta)


def write_pgm(image: Image, path: PathLike, bitdepth: int = 8) -> None:
    """Write as binary PGM, clipping intensities into [0, 1]."""
    if bitdepth not in (8, 16):
        raise ValueError(f"bitdepth must be 8 or 16, got {bitdepth}")
    maxval = (1 << bitdepth) - 1
    q = np.clip(image.as_matrix(), 0.0, 1.0)
    q = np.rint(q * maxval)
    header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode("ascii")
    if bitdepth == 8:
        raster = q.astype(np.uint8).tobytes()
    else:
        raster = q.astype(">u2").tobytes()
    Path(path).write_bytes(header + raster)


def _pgm_tokens(blob: bytes):
    """Yield whitespace-separated header tokens, skipping '#' comments."""
    pos = 0
    while True:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ChainFormatError("unexpected end of PGM header")
        yield blob[start:pos], pos


def read_pgm(path: PathLike) -> Image:
    blob = Path(path).read_bytes()
    tokens = _pgm_tokens(blob)
    magic, _ = next(tokens)
    if magic != b"P5":
        raise ChainFormatError(f"not a binary PGM (magic {magic!r})")
    try:
        width = int(next(tokens)[0])
        height = int(next(tokens)[0])
        maxval, end = next(tokens)
        maxval = int(maxval)
    except (StopIteration, ValueError) as e:
        raise ChainFormatError(f"malformed PGM header: {e}") from e
    if maxval <= 0 or maxval > 65535:
        raise ChainFormatError(f"unsupported PGM maxval {maxval}")
    raster = blob[end + 1 :]  # exactly one whitespace byte after maxval
    count = width * height
    if maxval < 256:
        if len(raster) < count:
            raise ChainTruncatedError("PGM raster shorter than declared size")
        pix = np.frombuffer(raster[:count], dtype=np.uint8)
    else:
        if len(raster) < 2 * count:
            raise ChainTruncatedError("PGM raster shorter than declared size")
        pix = np.frombuffer(raster[: 2 * count], dtype=">u2")
    data = pix.astype(np.float64) / float(maxval)
    return Image(height, width, data)
