"""Images, displacement label spaces, deformation fields, and interpolation.

Grids are 2-D or 3-D, stored row-major (C order) with unit isotropic voxel
spacing. Displacements are integer offsets measured in voxels and follow the
same axis order as array indices.

All types are immutable after construction and safe to share across
concurrent readers; constructors take ownership of the arrays they are
given and mark them read-only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimMismatchError,
    NotADistributionError,
    OutOfBoundsError,
)

CLAMP = "clamp"
ERROR = "error"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ScalarImage:
    """A d-dimensional scalar grid (d = 2 or 3), values stored as float64."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim not in (2, 3):
            raise DimMismatchError(f"images must be 2-D or 3-D, got {vals.ndim}-D")
        if vals.size == 0:
            raise ValueError("image has no voxels")
        if not np.isfinite(vals).all():
            raise ValueError("image values must be finite")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def intensity_range(self) -> tuple[float, float]:
        return float(self.values.min()), float(self.values.max())


@dataclass(frozen=True, eq=False)
class DisplacementSet:
    """An ordered set of K distinct integer displacement vectors.

    The index k identifies the same vector for the lifetime of the set;
    downstream tie-breaking relies on this order being stable.
    """

    vectors: np.ndarray  # (K, d) integers

    def __post_init__(self):
        vecs = np.asarray(self.vectors)
        if not np.issubdtype(vecs.dtype, np.integer):
            raise ValueError("displacements must be integer vectors")
        vecs = vecs.astype(np.int64)
        if vecs.ndim != 2 or vecs.shape[0] < 1:
            raise ValueError("expected a (K, d) array with K >= 1")
        if vecs.shape[1] not in (2, 3):
            raise DimMismatchError(f"displacements must be 2-D or 3-D, got d={vecs.shape[1]}")
        if len({tuple(v) for v in vecs}) != vecs.shape[0]:
            raise ValueError("displacement vectors must be distinct")
        object.__setattr__(self, "vectors", _freeze(vecs))

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True, eq=False)
class DeformationField:
    """A real-valued displacement vector per voxel, in units of voxels."""

    vectors: np.ndarray  # dims + (d,)

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim not in (3, 4) or vecs.shape[-1] != vecs.ndim - 1:
            raise DimMismatchError(
                f"expected dims + (d,) with d = 2 or 3, got shape {vecs.shape}"
            )
        if not np.isfinite(vecs).all():
            raise ValueError("deformation components must be finite")
        object.__setattr__(self, "vectors", _freeze(vecs))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.vectors.shape[:-1]

    @property
    def d(self) -> int:
        return self.vectors.shape[-1]


@dataclass(frozen=True, eq=False)
class CategoricalField:
    """Per-voxel probability vectors over K displacement labels.

    ``probs`` has shape dims + (K,), so flattening yields row-major voxels
    with the K entries contiguous per voxel. Each voxel's vector must be
    non-negative and sum to 1 within ``mass_tol``.
    """

    probs: np.ndarray
    mass_tol: float = field(default=1e-6, compare=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim not in (3, 4):
            raise DimMismatchError(f"expected dims + (K,) probabilities, got shape {probs.shape}")
        if probs.shape[-1] < 1:
            raise ValueError("need at least one label")
        if probs.min() < -1e-12 or probs.max() > 1.0 + 1e-12:
            raise NotADistributionError("probabilities must lie in [0, 1]")
        sums = probs.sum(axis=-1)
        worst = float(np.abs(sums - 1.0).max())
        if worst > self.mass_tol:
            raise NotADistributionError(
                f"per-voxel sums deviate from 1 by up to {worst:.3g} (tol {self.mass_tol:.3g})"
            )
        object.__setattr__(self, "probs", _freeze(probs))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.probs.shape[:-1]

    @property
    def K(self) -> int:
        return self.probs.shape[-1]

    @property
    def d(self) -> int:
        return self.probs.ndim - 1

    def voxel(self, index: tuple[int, ...]) -> np.ndarray:
        """Probability vector at one voxel."""
        return self.probs[index]


def make_displacement_set(d: int, r: int) -> DisplacementSet:
    """All integer vectors with infinity-norm <= r, in lexicographic order.

    K = (2r + 1) ** d; the zero vector is always present (r = 0 gives the
    identity-only label space).
    """
    if d not in (2, 3):
        raise DimMismatchError(f"d must be 2 or 3, got {d}")
    if r < 0:
        raise ValueError("radius must be non-negative")
    rng = range(-r, r + 1)
    vecs = np.array(list(itertools.product(rng, repeat=d)), dtype=np.int64)
    return DisplacementSet(vecs)


def _clamp_positions(pos: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    out = np.empty_like(pos)
    for axis, n in enumerate(dims):
        np.clip(pos[..., axis], 0.0, n - 1.0, out=out[..., axis])
    return out


def _multilinear(values: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of ``values`` at clamped positions.

    ``pos`` has shape (..., d) with every coordinate already inside
    [0, dim - 1]. Computed as nested lerps ``a + t * (b - a)``, which is
    exact at lattice points and on constant images (no corner-weight
    rounding dust).
    """
    d = values.ndim
    dims = values.shape
    base = np.empty(pos.shape[:-1] + (d,), dtype=np.int64)
    frac = np.empty_like(pos)
    for axis, n in enumerate(dims):
        # keep base in [0, n-2] so base + 1 stays valid; frac then covers [0, 1]
        b = np.clip(np.floor(pos[..., axis]), 0, max(n - 2, 0)).astype(np.int64)
        base[..., axis] = b
        frac[..., axis] = pos[..., axis] - b
    corners = {}
    for corner in itertools.product((0, 1), repeat=d):
        idx = tuple(
            np.minimum(base[..., axis] + c, dims[axis] - 1)
            for axis, c in enumerate(corner)
        )
        corners[corner] = values[idx]
    for axis in reversed(range(d)):
        t = frac[..., axis]
        at_end = t == 1.0  # clipped base puts lattice points on the far edge at t = 1
        corners = {
            head: np.where(
                at_end,
                corners[head + (1,)],
                corners[head + (0,)]
                + t * (corners[head + (1,)] - corners[head + (0,)]),
            )
            for head in itertools.product((0, 1), repeat=axis)
        }
    return corners[()]


def sample_interpolated(img: ScalarImage, pos, policy: str = CLAMP) -> float:
    """Multilinear (bilinear/trilinear) sample of ``img`` at a real position.

    Parameters
    ----------
    pos : sequence of d reals
        Position in voxel coordinates.
    policy : "clamp" or "error"
        Under "clamp", coordinates are clamped to [0, dim - 1] per axis
        before interpolation. Under "error", positions outside the grid
        raise :class:`OutOfBoundsError`.
    """
    p = np.asarray(pos, dtype=np.float64)
    if p.shape != (img.d,):
        raise DimMismatchError(f"position must have length {img.d}, got shape {p.shape}")
    if policy == ERROR:
        for axis, n in enumerate(img.dims):
            if not (0.0 <= p[axis] <= n - 1.0):
                raise OutOfBoundsError(
                    f"coordinate {p[axis]} on axis {axis} outside [0, {n - 1}]"
                )
    elif policy != CLAMP:
        raise ValueError(f"unknown policy {policy!r}")
    clamped = _clamp_positions(p[np.newaxis, :], img.dims)
    return float(_multilinear(img.values, clamped)[0])


def warp_image(img: ScalarImage, deformation: DeformationField) -> ScalarImage:
    """Backward-warp ``img``: out(v) = img(v + deformation(v)), edge-clamped."""
    if deformation.dims != img.dims:
        raise DimMismatchError(
            f"deformation dims {deformation.dims} do not match image dims {img.dims}"
        )
    coords = np.indices(img.dims, dtype=np.float64)
    pos = np.stack([coords[a] + deformation.vectors[..., a] for a in range(img.d)], axis=-1)
    out = _multilinear(img.values, _clamp_positions(pos, img.dims))
    return ScalarImage(out)


def candidate_labels(
    img: ScalarImage, v: tuple[int, ...], dset: DisplacementSet
) -> tuple[np.ndarray, np.ndarray]:
    """Labels the K displacements map voxel ``v`` to in ``img``.

    Returns ``(labels, in_bounds)``, both of length K. Entry k is the value
    of ``img`` at ``v + d_k`` (direct lookup; integer offsets need no
    interpolation). When ``v + d_k`` leaves the grid, ``in_bounds[k]`` is
    False and the label is the edge-clamped value.
    """
    vi = np.asarray(v, dtype=np.int64)
    if vi.shape != (img.d,):
        raise DimMismatchError(f"voxel index must have length {img.d}")
    for axis, n in enumerate(img.dims):
        if not (0 <= vi[axis] < n):
            raise OutOfBoundsError(f"voxel {tuple(vi)} outside grid of dims {img.dims}")
    targets = vi[np.newaxis, :] + dset.vectors
    in_bounds = np.ones(dset.K, dtype=bool)
    clamped = np.empty_like(targets)
    for axis, n in enumerate(img.dims):
        in_bounds &= (targets[:, axis] >= 0) & (targets[:, axis] < n)
        clamped[:, axis] = np.clip(targets[:, axis], 0, n - 1)
    labels = img.values[tuple(clamped[:, a] for a in range(img.d))]
    return labels, in_bounds


def candidate_label_field(
    img: ScalarImage, dset: DisplacementSet
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`candidate_labels` for every voxel at once.

    Returns ``(labels, in_bounds)`` of shape dims + (K,).
    """
    if dset.d != img.d:
        raise DimMismatchError(f"displacement d={dset.d} does not match image d={img.d}")
    labels = np.empty(img.dims + (dset.K,), dtype=np.float64)
    in_bounds = np.empty(img.dims + (dset.K,), dtype=bool)
    axes_idx = [np.arange(n, dtype=np.int64) for n in img.dims]
    for k, dk in enumerate(dset.vectors):
        shifted = [axes_idx[a] + dk[a] for a in range(img.d)]
        ok = [(s >= 0) & (s < img.dims[a]) for a, s in enumerate(shifted)]
        clamped = [np.clip(s, 0, img.dims[a] - 1) for a, s in enumerate(shifted)]
        labels[..., k] = img.values[np.ix_(*clamped)]
        mask = ok[0]
        for m in ok[1:]:
            mask = np.multiply.outer(mask, m)
        in_bounds[..., k] = mask
    return labels, in_bounds
