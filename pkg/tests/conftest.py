import json
import os

import numpy as np
import pytest

import rwreg

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
FIXTURE_PGM = os.path.join(DATA_DIR, "two_region_64.pgm")
FIXTURE_SPEC = os.path.join(DATA_DIR, "one_bump_spec.json")


def random_unary(rng, dims, k) -> rwreg.CategoricalField:
    """Strictly positive per-voxel distributions with exact unit mass."""
    raw = rng.uniform(0.05, 1.0, size=tuple(dims) + (k,))
    raw /= raw.sum(axis=-1, keepdims=True)
    return rwreg.CategoricalField(raw)


def random_weights(rng, dims) -> rwreg.LatticeWeights:
    img = rwreg.ScalarImage(rng.uniform(0.0, 255.0, size=dims))
    return rwreg.edge_weights(img, beta=0.05, w_min=1e-6)


def random_instance(rng, max_side=8, max_k=9):
    dims = tuple(int(rng.integers(2, max_side + 1)) for _ in range(2))
    k = int(rng.integers(1, max_k + 1))
    return random_unary(rng, dims, k), random_weights(rng, dims)


@pytest.fixture(scope="session")
def fixture_image() -> rwreg.ScalarImage:
    return rwreg.read_pgm(FIXTURE_PGM)


@pytest.fixture(scope="session")
def fixture_spec() -> rwreg.BumpSpec:
    with open(FIXTURE_SPEC, encoding="utf-8") as handle:
        return rwreg.BumpSpec.from_dict(json.load(handle))


@pytest.fixture(scope="session")
def fixture_params() -> rwreg.RegistrationParams:
    return rwreg.RegistrationParams(deterministic=True)


@pytest.fixture(scope="session")
def synth_report(fixture_image, fixture_spec, fixture_params) -> rwreg.ExperimentReport:
    return rwreg.run_synth_experiment(
        fixture_image, fixture_spec, fixture_params, bin_width=1.0
    )


@pytest.fixture(scope="session")
def fixture_pipeline(fixture_image, fixture_spec, fixture_params):
    """(moving, field, dset, maps) for the committed fixture registration."""
    deformation = rwreg.make_bump_deformation(fixture_image.dims, fixture_spec)
    moving = rwreg.warp_image(fixture_image, deformation)
    field, dset = rwreg.register(fixture_image, moving, fixture_params)
    maps = rwreg.compute_uncertainty_maps(field, moving, dset, bin_width=1.0)
    return moving, field, dset, maps


def window_constant_mask(values: np.ndarray, r: int) -> np.ndarray:
    """Voxels whose full (2r+1)-window is inside the grid and single-valued."""
    n0, n1 = values.shape
    mask = np.zeros_like(values, dtype=bool)
    for i in range(r, n0 - r):
        for j in range(r, n1 - r):
            window = values[i - r : i + r + 1, j - r : j + r + 1]
            mask[i, j] = (window == window[0, 0]).all()
    return mask


def strong_edge_mask(values: np.ndarray, threshold: float) -> np.ndarray:
    """Voxels with an axial neighbor differing by at least ``threshold``."""
    mask = np.zeros_like(values, dtype=bool)
    d0 = np.abs(np.diff(values, axis=0)) >= threshold
    d1 = np.abs(np.diff(values, axis=1)) >= threshold
    mask[:-1, :] |= d0
    mask[1:, :] |= d0
    mask[:, :-1] |= d1
    mask[:, 1:] |= d1
    return mask
