"""Per-voxel categorical transformation distributions via random-walker smoothing.

For each displacement label k the solver minimizes

    sum_edges w_ij (p_k(i) - p_k(j))^2  +  gamma * sum_i (p_k(i) - u_k(i))^2

over the lattice graph, i.e. it solves the SPD system (L + gamma I) p_k =
gamma u_k where L is the combinatorial graph Laplacian of the image-adaptive
edge weights and u_k the intensity-difference likelihood. Because the unaries
sum to 1 over k and (L + gamma I) 1 = gamma 1, the K solutions sum to 1 per
voxel, so the output is a valid categorical distribution by construction.

Systems are solved with Jacobi-preconditioned conjugate gradients; the K
label systems are independent and solved sequentially in index order, which
makes results bit-reproducible on identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AllCandidatesOutOfBoundsError,
    ConvergenceError,
    DimMismatchError,
    InstanceTooLargeError,
    ShapeMismatchError,
    SolutionRangeError,
)
from .grid import (
    CategoricalField,
    DisplacementSet,
    ScalarImage,
    candidate_label_field,
    make_displacement_set,
    _freeze,
)

UNARY_FLOOR = 1e-12
NEGATIVE_CLAMP = 1e-8


@dataclass(frozen=True, eq=False)
class LatticeWeights:
    """One positive weight per edge of the 4- (2-D) or 6- (3-D) neighborhood grid.

    ``axis_weights[a]`` holds the weights of edges along axis a and has the
    grid shape with that axis shortened by one, mirroring ``np.diff``.
    """

    dims: tuple[int, ...]
    axis_weights: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) != len(self.axis_weights):
            raise ShapeMismatchError("need one weight array per axis")
        frozen = []
        for a, w in enumerate(self.axis_weights):
            w = np.asarray(w, dtype=np.float64)
            expect = tuple(n - 1 if ax == a else n for ax, n in enumerate(dims))
            if w.shape != expect:
                raise ShapeMismatchError(
                    f"axis {a} weights have shape {w.shape}, expected {expect}"
                )
            if w.size and w.min() <= 0.0:
                raise ValueError("edge weights must be positive")
            frozen.append(_freeze(w))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "axis_weights", tuple(frozen))


@dataclass(frozen=True)
class SolverOptions:
    """Data-fidelity weight and conjugate-gradient controls.

    ``cg_tol`` is the absolute l2 residual tolerance; internally the solver
    converges to ``cg_tol * min(1, gamma)`` so that the *solution* error stays
    near ``cg_tol`` even for small gamma (the system's smallest eigenvalue is
    gamma). ``cg_max_iter`` defaults to 10x the voxel count. ``deterministic``
    asks for bit-reproducible solves; the sequential solver satisfies it
    unconditionally.
    """

    gamma: float = 1.0
    cg_tol: float = 1e-8
    cg_max_iter: int | None = None
    deterministic: bool = False

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.cg_tol <= 0:
            raise ValueError("cg_tol must be positive")


@dataclass(frozen=True)
class RegistrationParams:
    """Bundle of everything the end-to-end registration pipeline needs."""

    radius: int = 2
    sigma: float = 10.0
    beta: float = 0.05
    gamma: float = 1.0
    w_min: float = 1e-6
    cg_tol: float = 1e-8
    cg_max_iter: int | None = None
    deterministic: bool = False

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            gamma=self.gamma,
            cg_tol=self.cg_tol,
            cg_max_iter=self.cg_max_iter,
            deterministic=self.deterministic,
        )


def unary_likelihood(
    fixed: ScalarImage,
    moving: ScalarImage,
    dset: DisplacementSet,
    sigma: float,
) -> CategoricalField:
    """Gaussian intensity-difference likelihood per voxel and displacement.

    Raw weight for label k at voxel v is exp(-(fixed(v) - label_k)^2 /
    (2 sigma^2)) with label_k from :func:`candidate_label_field`.
    Out-of-bounds candidates get raw weight 0. All weights are floored at
    1e-12 and normalized to sum 1 per voxel, so border voxels never produce
    an all-zero row.
    """
    if fixed.dims != moving.dims:
        raise DimMismatchError(
            f"fixed dims {fixed.dims} do not match moving dims {moving.dims}"
        )
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    labels, in_bounds = candidate_label_field(moving, dset)
    if not in_bounds.any(axis=-1).all():
        raise AllCandidatesOutOfBoundsError(
            "some voxel has no in-bounds candidate; include the zero displacement"
        )
    resid = fixed.values[..., np.newaxis] - labels
    raw = np.exp(-(resid * resid) / (2.0 * sigma * sigma))
    raw[~in_bounds] = 0.0
    np.maximum(raw, UNARY_FLOOR, out=raw)
    raw /= raw.sum(axis=-1, keepdims=True)
    return CategoricalField(raw)


def edge_weights(fixed: ScalarImage, beta: float, w_min: float) -> LatticeWeights:
    """Image-adaptive lattice weights w_ij = exp(-beta (I_i - I_j)^2) + w_min."""
    if w_min <= 0:
        raise ValueError("w_min must be positive")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    ws = []
    for axis in range(fixed.d):
        diff = np.diff(fixed.values, axis=axis)
        ws.append(np.exp(-beta * diff * diff) + w_min)
    return LatticeWeights(fixed.dims, tuple(ws))


def _apply_laplacian(weights: LatticeWeights, x: np.ndarray) -> np.ndarray:
    """(L x)(i) = sum over neighbors j of w_ij (x_i - x_j)."""
    out = np.zeros_like(x)
    nd = x.ndim
    for axis, w in enumerate(weights.axis_weights):
        t = w * np.diff(x, axis=axis)  # w_ij * (x_j - x_i) on edge (i, j=i+1)
        back = tuple(slice(0, -1) if a == axis else slice(None) for a in range(nd))
        front = tuple(slice(1, None) if a == axis else slice(None) for a in range(nd))
        out[back] -= t
        out[front] += t
    return out


def _degrees(weights: LatticeWeights) -> np.ndarray:
    """Sum of incident edge weights per voxel (the Laplacian diagonal)."""
    deg = np.zeros(weights.dims, dtype=np.float64)
    nd = len(weights.dims)
    for axis, w in enumerate(weights.axis_weights):
        back = tuple(slice(0, -1) if a == axis else slice(None) for a in range(nd))
        front = tuple(slice(1, None) if a == axis else slice(None) for a in range(nd))
        deg[back] += w
        deg[front] += w
    return deg


def _pcg(apply_a, b, diag, x0, tol, max_iter):
    """Jacobi-preconditioned conjugate gradients for an SPD operator.

    Returns the iterate once the l2 residual norm drops to ``tol``; raises
    :class:`ConvergenceError` after ``max_iter`` iterations otherwise.
    """
    x = x0.copy()
    r = b - apply_a(x)
    if float(np.sqrt(np.vdot(r, r).real)) <= tol:
        return x
    z = r / diag
    p = z.copy()
    rz = float(np.vdot(r, z).real)
    for _ in range(max_iter):
        ap = apply_a(p)
        alpha = rz / float(np.vdot(p, ap).real)
        x += alpha * p
        r -= alpha * ap
        if float(np.sqrt(np.vdot(r, r).real)) <= tol:
            return x
        z = r / diag
        rz_new = float(np.vdot(r, z).real)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"conjugate gradients did not reach residual {tol:.3g} in {max_iter} iterations"
    )


def solve_raw(
    unary: CategoricalField, weights: LatticeWeights, opts: SolverOptions
) -> np.ndarray:
    """Raw per-label solutions of (L + gamma I) p_k = gamma u_k, no post-processing.

    Exposed so tests can check the pre-renormalization guarantees: per-voxel
    sums equal 1 and entries stay inside [0, 1] up to solver tolerance.
    """
    if unary.dims != weights.dims:
        raise ShapeMismatchError(
            f"unary dims {unary.dims} do not match weight dims {weights.dims}"
        )
    gamma = opts.gamma
    nvox = int(np.prod(unary.dims))
    max_iter = opts.cg_max_iter if opts.cg_max_iter is not None else 10 * nvox
    tol = opts.cg_tol * min(1.0, gamma)
    diag = _degrees(weights) + gamma

    def apply_a(x):
        return _apply_laplacian(weights, x) + gamma * x

    out = np.empty_like(unary.probs)
    for k in range(unary.K):
        u_k = unary.probs[..., k]
        out[..., k] = _pcg(apply_a, gamma * u_k, diag, u_k, tol, max_iter)
    return out


def _finalize_probs(raw: np.ndarray) -> np.ndarray:
    """Clamp tiny negatives, renormalize per voxel, and clip to [0, 1].

    Violations beyond the 1e-8 clamp threshold are numerical failures and
    raise instead of being silently repaired.
    """
    lo, hi = float(raw.min()), float(raw.max())
    if lo < -NEGATIVE_CLAMP or hi > 1.0 + NEGATIVE_CLAMP:
        raise SolutionRangeError(
            f"solution range [{lo:.3g}, {hi:.3g}] exceeds the 1e-8 clamp threshold"
        )
    probs = np.maximum(raw, 0.0)
    probs /= probs.sum(axis=-1, keepdims=True)
    np.clip(probs, 0.0, 1.0, out=probs)
    return probs


def rwir_solve(
    unary: CategoricalField, weights: LatticeWeights, opts: SolverOptions | None = None
) -> CategoricalField:
    """Random-walker smoothing of a unary field into a categorical field.

    Solves the K independent SPD systems described in the module docstring,
    then clamps negatives in [-1e-8, 0) to zero and renormalizes each voxel.
    With gamma -> infinity the output approaches the unary field; on a
    single-voxel grid it equals the unaries exactly.
    """
    opts = opts if opts is not None else SolverOptions()
    return CategoricalField(_finalize_probs(solve_raw(unary, weights, opts)))


def rwir_solve_dense_oracle(
    unary: CategoricalField, weights: LatticeWeights, gamma: float
) -> CategoricalField:
    """Reference solve via explicit dense factorization; grids <= 256 voxels.

    Same contract as :func:`rwir_solve` but builds (L + gamma I) as a dense
    matrix and solves it directly. Intended for tests.
    """
    if unary.dims != weights.dims:
        raise ShapeMismatchError(
            f"unary dims {unary.dims} do not match weight dims {weights.dims}"
        )
    nvox = int(np.prod(unary.dims))
    if nvox > 256:
        raise InstanceTooLargeError(f"{nvox} voxels exceeds the 256-voxel guard")
    flat = np.arange(nvox).reshape(unary.dims)
    a = np.zeros((nvox, nvox), dtype=np.float64)
    for axis, w in enumerate(weights.axis_weights):
        for edge_idx in np.ndindex(w.shape):
            i = int(flat[edge_idx])
            j_idx = tuple(c + 1 if ax == axis else c for ax, c in enumerate(edge_idx))
            j = int(flat[j_idx])
            wij = float(w[edge_idx])
            a[i, i] += wij
            a[j, j] += wij
            a[i, j] -= wij
            a[j, i] -= wij
    a[np.diag_indices(nvox)] += gamma
    rhs = gamma * unary.probs.reshape(nvox, unary.K)
    raw = np.linalg.solve(a, rhs).reshape(unary.probs.shape)
    return CategoricalField(_finalize_probs(raw))


def mode_field(field: CategoricalField, dset: DisplacementSet) -> np.ndarray:
    """Per-voxel index of the most probable displacement (ties -> smallest index)."""
    if dset.K != field.K:
        raise ShapeMismatchError(f"field has K={field.K} but set has K={dset.K}")
    return np.argmax(field.probs, axis=-1)


def register(
    fixed: ScalarImage, moving: ScalarImage, params: RegistrationParams | None = None
) -> tuple[CategoricalField, DisplacementSet]:
    """End-to-end pipeline: displacement set, unaries, edge weights, solve."""
    params = params if params is not None else RegistrationParams()
    dset = make_displacement_set(fixed.d, params.radius)
    unary = unary_likelihood(fixed, moving, dset, params.sigma)
    weights = edge_weights(fixed, params.beta, params.w_min)
    field = rwir_solve(unary, weights, params.solver_options())
    return field, dset
