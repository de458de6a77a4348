"""File formats: binary PGM/PPM images, PIRD distribution files, heatmaps.

PIRD v1 layout (all integers little-endian):

    magic   4 bytes  "PIRD"
    version u32      1
    d       u32      grid dimensionality (2 or 3)
    dims    d * u32  voxel counts per axis
    K       u32      label count
    disp    K*d i32  displacement vectors, row per label
    probs   N*K f32  per-voxel probability vectors, voxels in row-major
                     order with the K entries contiguous per voxel

The byte length must match the header arithmetic exactly. Per-voxel sums are
checked on read: deviations beyond 1e-5 warn, beyond 1e-3 reject. Floats are
stored as float32, so statistics recomputed from a file can differ from
in-process values by up to ~1e-6 relative.

All writers go through a temp file and an atomic rename, so readers never
see torn output.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    DimMismatchError,
    InvalidDistributionError,
    MalformedHeaderError,
    TruncatedPayloadError,
    UnsupportedMaxvalError,
    UnsupportedVersionError,
)
from .grid import CategoricalField, DisplacementSet, ScalarImage

_WHITESPACE = b" \t\r\n\x0b\x0c"
PIRD_MAGIC = b"PIRD"
PIRD_VERSION = 1

# 4-stop heat palette: black -> red -> yellow -> white.
HEAT_STOPS = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)
HEAT_COLORS = ((0, 0, 0), (255, 0, 0), (255, 255, 0), (255, 255, 255))

BY_MAX_ENTROPY = "max-entropy"
BY_FIELD_MAX = "field-max"


def _atomic_write(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".rwreg-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        # mkstemp creates 0600 files; honor the umask like a plain open would
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _round_half_away(values: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(values) + 0.5), values)


def _header_tokens(data: bytes, count: int, path: str) -> tuple[list[bytes], int]:
    """First ``count`` whitespace/comment-separated tokens and the payload offset."""
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        while i < len(data):
            byte = data[i : i + 1]
            if byte in _WHITESPACE:
                i += 1
            elif byte == b"#":
                end = data.find(b"\n", i)
                if end < 0:
                    raise MalformedHeaderError(f"{path}: unterminated comment in header")
                i = end + 1
            else:
                break
        if i >= len(data):
            raise MalformedHeaderError(f"{path}: header ended early")
        start = i
        while i < len(data) and data[i : i + 1] not in _WHITESPACE + b"#":
            i += 1
        tokens.append(data[start:i])
    if i >= len(data) or data[i : i + 1] not in _WHITESPACE:
        raise MalformedHeaderError(f"{path}: missing whitespace after header")
    return tokens, i + 1


def read_pgm(path: str) -> ScalarImage:
    """Read a binary (P5) PGM with maxval 255 or 65535.

    16-bit samples are big-endian. Header comments are allowed. ASCII (P2)
    files are rejected.
    """
    with open(path, "rb") as handle:
        data = handle.read()
    tokens, offset = _header_tokens(data, 4, path)
    if tokens[0] != b"P5":
        raise MalformedHeaderError(
            f"{path}: expected binary PGM magic P5, got {tokens[0].decode('ascii', 'replace')!r}"
        )
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise MalformedHeaderError(f"{path}: non-numeric header fields") from None
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"{path}: non-positive dimensions {width}x{height}")
    if maxval == 255:
        dtype = np.dtype("u1")
    elif maxval == 65535:
        dtype = np.dtype(">u2")
    else:
        raise UnsupportedMaxvalError(f"{path}: maxval {maxval} (only 255 and 65535)")
    need = width * height * dtype.itemsize
    payload = data[offset:]
    if len(payload) != need:
        raise TruncatedPayloadError(
            f"{path}: payload is {len(payload)} bytes, header promises {need}"
        )
    values = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return ScalarImage(values.astype(np.float64))


def write_pgm(img: ScalarImage, path: str, maxval: int = 255) -> None:
    """Write a 2-D image as binary PGM, rounding half away from zero."""
    if img.d != 2:
        raise DimMismatchError("PGM holds 2-D images only")
    if maxval == 255:
        dtype = np.dtype("u1")
    elif maxval == 65535:
        dtype = np.dtype(">u2")
    else:
        raise UnsupportedMaxvalError(f"maxval {maxval} (only 255 and 65535)")
    quantized = np.clip(_round_half_away(img.values), 0, maxval).astype(dtype)
    height, width = img.dims
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    _atomic_write(path, header + quantized.tobytes())


def write_dist_field(field: CategoricalField, dset: DisplacementSet, path: str) -> None:
    """Serialize a categorical field and its displacement set as PIRD v1."""
    if field.K != dset.K or field.d != dset.d:
        raise DimMismatchError(
            f"field (K={field.K}, d={field.d}) does not match set (K={dset.K}, d={dset.d})"
        )
    parts = [
        struct.pack("<4sII", PIRD_MAGIC, PIRD_VERSION, field.d),
        np.asarray(field.dims, dtype="<u4").tobytes(),
        struct.pack("<I", field.K),
        dset.vectors.astype("<i4").tobytes(),
        field.probs.astype("<f4").tobytes(),
    ]
    _atomic_write(path, b"".join(parts))


def read_dist_field(path: str) -> tuple[CategoricalField, DisplacementSet]:
    """Read a PIRD v1 file back into a field and its displacement set.

    The float payload is preserved exactly (write -> read -> write is
    bit-identical); validation accepts per-voxel sums up to 1e-3 off.
    """
    with open(path, "rb") as handle:
        data = handle.read()
    if len(data) < 12:
        raise TruncatedPayloadError(f"{path}: too short for a PIRD header")
    magic, version, d = struct.unpack_from("<4sII", data, 0)
    if magic != PIRD_MAGIC:
        raise BadMagicError(f"{path}: magic {magic!r} is not {PIRD_MAGIC!r}")
    if version != PIRD_VERSION:
        raise UnsupportedVersionError(f"{path}: version {version} (reader knows 1)")
    if d not in (2, 3):
        raise MalformedHeaderError(f"{path}: dimensionality {d} (must be 2 or 3)")
    offset = 12
    if len(data) < offset + 4 * d + 4:
        raise TruncatedPayloadError(f"{path}: header ends before dims")
    dims = tuple(int(n) for n in np.frombuffer(data, dtype="<u4", count=d, offset=offset))
    offset += 4 * d
    (k,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if any(n <= 0 for n in dims) or k < 1:
        raise MalformedHeaderError(f"{path}: dims {dims} / K {k} are not positive")
    nvox = int(np.prod(dims))
    expected = offset + 4 * k * d + 4 * nvox * k
    if len(data) != expected:
        raise TruncatedPayloadError(
            f"{path}: file is {len(data)} bytes, header arithmetic gives {expected}"
        )
    vectors = np.frombuffer(data, dtype="<i4", count=k * d, offset=offset).reshape(k, d)
    offset += 4 * k * d
    probs = np.frombuffer(data, dtype="<f4", count=nvox * k, offset=offset)
    probs = probs.astype(np.float64).reshape(tuple(dims) + (k,))
    sums = probs.sum(axis=-1)
    worst = float(np.abs(sums - 1.0).max())
    if worst > 1e-3:
        raise InvalidDistributionError(
            f"{path}: per-voxel sums deviate from 1 by up to {worst:.3g}"
        )
    if worst > 1e-5:
        warnings.warn(
            f"{path}: per-voxel sums deviate from 1 by up to {worst:.3g}",
            stacklevel=2,
        )
    try:
        dset = DisplacementSet(vectors.astype(np.int64))
        field = CategoricalField(probs, mass_tol=1e-3)
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from None
    return field, dset


@dataclass(frozen=True)
class HeatmapStyle:
    """How to map a scalar grid onto the fixed black-red-yellow-white palette.

    ``max-entropy`` divides by log2(label_count) so entropy maps from runs
    with different K are comparable; ``field-max`` divides by the field's own
    maximum. A zero denominator (empty field, K = 1) renders all black.
    """

    normalization: str = BY_FIELD_MAX
    label_count: int | None = None

    def __post_init__(self):
        if self.normalization not in (BY_MAX_ENTROPY, BY_FIELD_MAX):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.normalization == BY_MAX_ENTROPY and (
            self.label_count is None or self.label_count < 1
        ):
            raise ValueError("max-entropy normalization needs label_count >= 1")


def _heat_rgb(t: np.ndarray) -> np.ndarray:
    rgb = np.empty(t.shape + (3,), dtype=np.uint8)
    for channel in range(3):
        values = np.interp(t, HEAT_STOPS, [c[channel] for c in HEAT_COLORS])
        rgb[..., channel] = _round_half_away(values).astype(np.uint8)
    return rgb


def _normalized(field: np.ndarray, style: HeatmapStyle) -> np.ndarray:
    if style.normalization == BY_MAX_ENTROPY:
        denom = math.log2(style.label_count)
    else:
        denom = float(field.max()) if field.size else 0.0
    if denom <= 0.0:
        return np.zeros_like(field, dtype=np.float64)
    return np.clip(field / denom, 0.0, 1.0)


def _write_ppm(rgb: np.ndarray, path: str) -> None:
    height, width = rgb.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    _atomic_write(path, header + rgb.tobytes())


def write_heatmap(field: np.ndarray, style: HeatmapStyle, path: str) -> list[str]:
    """Render a scalar grid as one (2-D) or several (3-D, per-slice) P6 PPMs.

    Returns the paths written. 3-D grids get ``_000``-style slice suffixes
    before the extension, slicing along the first axis.
    """
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim == 2:
        _write_ppm(_heat_rgb(_normalized(arr, style)), path)
        return [path]
    if arr.ndim == 3:
        t = _normalized(arr, style)
        stem, ext = os.path.splitext(path)
        written = []
        for i in range(arr.shape[0]):
            slice_path = f"{stem}_{i:03d}{ext or '.ppm'}"
            _write_ppm(_heat_rgb(t[i]), slice_path)
            written.append(slice_path)
        return written
    raise DimMismatchError(f"heatmap fields must be 2-D or 3-D, got {arr.ndim}-D")
