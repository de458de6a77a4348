"""Transformation-space vs label-space uncertainty.

The transformation distribution at a voxel is a categorical law over K
displacements. The label a registered voxel receives is a deterministic
function of the sampled displacement, so pushing the distribution forward
into label (intensity) space gives a second, generally different, law.
Entropy of the first measures how sure the solver is about *where* to map a
voxel; dispersion of the second measures how sure it is about *what value*
the voxel gets. This module computes both, plus the two point estimators
(label of the most probable displacement vs the most likely label overall)
and the map of voxels where they disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    LengthMismatchError,
    NotADistributionError,
    ShapeMismatchError,
)
from .grid import CategoricalField, DisplacementSet, ScalarImage, candidate_label_field, _freeze

MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LabelDistribution:
    """Finite distribution over label values, atoms sorted by label.

    Labels are strictly increasing, every probability is positive, and the
    probabilities must sum to 1 within 1e-9; after validation they are
    snapped to machine-exact unit mass so degenerate distributions report
    exactly zero entropy and variance.
    """

    labels: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if labels.ndim != 1 or labels.shape != probs.shape or labels.size == 0:
            raise LengthMismatchError("labels and probs must be matching 1-D arrays")
        if labels.size > 1 and not (np.diff(labels) > 0).all():
            raise ValueError("labels must be strictly increasing")
        if probs.min() <= 0.0:
            raise NotADistributionError("every atom probability must be positive")
        total = float(probs.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise NotADistributionError(f"atom probabilities sum to {total:.12g}, not 1")
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "probs", _freeze(probs / total))

    def __len__(self) -> int:
        return self.labels.size


@dataclass(frozen=True, eq=False)
class UncertaintyMaps:
    """Per-voxel uncertainty grids plus the estimator-disagreement mask.

    Entropies are in bits; variance/std/IQR are in (squared) intensity
    units. ``disagreement`` marks voxels where the most likely label differs
    from the label of the most probable displacement.
    """

    transform_entropy: np.ndarray
    label_entropy: np.ndarray
    label_variance: np.ndarray
    label_std: np.ndarray
    label_iqr: np.ndarray
    disagreement: np.ndarray

    def __post_init__(self):
        dims = self.transform_entropy.shape
        for name in ("label_entropy", "label_variance", "label_std", "label_iqr", "disagreement"):
            if getattr(self, name).shape != dims:
                raise ShapeMismatchError(f"{name} does not share dims {dims}")
        for name in ("transform_entropy", "label_entropy", "label_variance",
                     "label_std", "label_iqr"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), np.float64)))
        object.__setattr__(self, "disagreement", _freeze(np.asarray(self.disagreement, bool)))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.transform_entropy.shape


def shannon_entropy(p) -> float:
    """Entropy of a probability vector in bits, with 0 log 0 = 0."""
    q = np.asarray(p, dtype=np.float64)
    if q.ndim != 1 or q.size == 0:
        raise NotADistributionError("expected a non-empty probability vector")
    if q.min() < 0.0:
        raise NotADistributionError("probabilities must be non-negative")
    if abs(float(q.sum()) - 1.0) > 1e-6:
        raise NotADistributionError(f"probabilities sum to {float(q.sum()):.9g}, not 1")
    nz = q[q > 0.0]
    return max(float(-(nz * np.log2(nz)).sum()), 0.0)


def transform_entropy_map(field: CategoricalField) -> np.ndarray:
    """Vectorized per-voxel entropy of a categorical field, in bits."""
    p = field.probs
    plogp = np.where(p > 0.0, p * np.log2(np.where(p > 0.0, p, 1.0)), 0.0)
    return np.maximum(-plogp.sum(axis=-1), 0.0)


def bin_labels(labels, bin_width: float):
    """Map labels to the centers of width-``bin_width`` bins (0 = identity)."""
    if bin_width < 0:
        raise ValueError("bin_width must be non-negative")
    arr = np.asarray(labels, dtype=np.float64)
    if bin_width == 0.0:
        return arr
    return bin_width * np.floor(arr / bin_width) + bin_width / 2.0


def pushforward(p, labels, bin_width: float = 0.0) -> LabelDistribution:
    """Accumulate displacement probabilities onto their labels.

    Labels are first binned (``bin_width`` > 0 groups near-duplicates that
    interpolation produces; 0 groups by exact equality), then probabilities
    of displacements sharing a label are added. Zero-probability atoms are
    dropped.
    """
    pv = np.asarray(p, dtype=np.float64)
    lv = np.asarray(labels, dtype=np.float64)
    if pv.shape != lv.shape or pv.ndim != 1:
        raise LengthMismatchError(
            f"probs shape {pv.shape} does not match labels shape {lv.shape}"
        )
    keys = bin_labels(lv, bin_width)
    uniq, inverse = np.unique(keys, return_inverse=True)
    mass = np.bincount(inverse, weights=pv, minlength=uniq.size)
    keep = mass > 0.0
    return LabelDistribution(uniq[keep], mass[keep])


def label_entropy(ld: LabelDistribution) -> float:
    """Entropy of the label distribution, in bits."""
    return shannon_entropy(ld.probs)


def label_moments(ld: LabelDistribution) -> tuple[float, float, float]:
    """(mean, variance, standard deviation) of the label distribution."""
    mean = float((ld.probs * ld.labels).sum())
    centered = ld.labels - mean
    var = float((ld.probs * centered * centered).sum())
    return mean, var, float(np.sqrt(var))


def label_quantile(ld: LabelDistribution, t: float) -> float:
    """Weighted lower quantile: smallest label whose CDF reaches ``t``."""
    cdf = np.cumsum(ld.probs)
    idx = int(np.searchsorted(cdf, t, side="left"))
    return float(ld.labels[min(idx, len(ld) - 1)])


def label_iqr(ld: LabelDistribution) -> float:
    """Inter-quartile range q(0.75) - q(0.25) under the lower-quantile rule."""
    return label_quantile(ld, 0.75) - label_quantile(ld, 0.25)


def mli(ld: LabelDistribution) -> float:
    """Most likely label: atom of maximum probability, ties to the smallest label."""
    return float(ld.labels[int(np.argmax(ld.probs))])


def mode_label(p, labels) -> float:
    """Label of the most probable displacement (ties to the smallest index)."""
    pv = np.asarray(p, dtype=np.float64)
    lv = np.asarray(labels, dtype=np.float64)
    if pv.shape != lv.shape or pv.ndim != 1:
        raise LengthMismatchError(
            f"probs shape {pv.shape} does not match labels shape {lv.shape}"
        )
    return float(lv[int(np.argmax(pv))])


def _voxelwise_analysis(
    field: CategoricalField,
    moving: ScalarImage,
    dset: DisplacementSet,
    bin_width: float,
):
    """Shared per-voxel sweep behind the map and image builders.

    All label-space quantities (pushforward, MLI, mode label, disagreement)
    are computed in the binned label space so the two estimators are
    compared like with like. Each voxel's probability vector is
    renormalized before pushing forward, which absorbs storage-precision
    drift (e.g. float32 files) without touching the input field.
    """
    if field.dims != moving.dims:
        raise ShapeMismatchError(
            f"field dims {field.dims} do not match moving dims {moving.dims}"
        )
    if field.K != dset.K:
        raise ShapeMismatchError(f"field has K={field.K} but set has K={dset.K}")
    labels, _ = candidate_label_field(moving, dset)
    binned = bin_labels(labels, bin_width)
    dims = field.dims
    nvox = int(np.prod(dims))
    probs_flat = field.probs.reshape(nvox, field.K)
    binned_flat = binned.reshape(nvox, field.K)

    ent = np.empty(nvox)
    var = np.empty(nvox)
    std = np.empty(nvox)
    iqr = np.empty(nvox)
    mli_img = np.empty(nvox)
    mode_img = np.empty(nvox)
    mode_raw_img = np.empty(nvox)
    raw_flat = labels.reshape(nvox, field.K)
    for i in range(nvox):
        p = probs_flat[i]
        p = p / p.sum()
        ld = pushforward(p, binned_flat[i], 0.0)
        ent[i] = label_entropy(ld)
        _, var[i], std[i] = label_moments(ld)
        iqr[i] = label_iqr(ld)
        mli_img[i] = mli(ld)
        k = int(np.argmax(p))
        mode_img[i] = binned_flat[i][k]
        mode_raw_img[i] = raw_flat[i][k]

    return {
        "transform_entropy": transform_entropy_map(field),
        "label_entropy": ent.reshape(dims),
        "label_variance": var.reshape(dims),
        "label_std": std.reshape(dims),
        "label_iqr": iqr.reshape(dims),
        "mli": mli_img.reshape(dims),
        "mode": mode_img.reshape(dims),
        "mode_raw": mode_raw_img.reshape(dims),
    }


def compute_uncertainty_maps(
    field: CategoricalField,
    moving: ScalarImage,
    dset: DisplacementSet,
    bin_width: float = 0.0,
) -> UncertaintyMaps:
    """All uncertainty grids for a solved field against its moving image.

    Per voxel: entropy of the transformation distribution; entropy,
    variance, standard deviation and IQR of the pushforward label
    distribution; and whether the most likely label disagrees with the
    label of the most probable displacement.
    """
    grids = _voxelwise_analysis(field, moving, dset, bin_width)
    return UncertaintyMaps(
        transform_entropy=grids["transform_entropy"],
        label_entropy=grids["label_entropy"],
        label_variance=grids["label_variance"],
        label_std=grids["label_std"],
        label_iqr=grids["label_iqr"],
        disagreement=grids["mli"] != grids["mode"],
    )


def label_images(
    field: CategoricalField,
    moving: ScalarImage,
    dset: DisplacementSet,
    bin_width: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """(mode-label image, most-likely-label image) for a solved field.

    The mode image holds raw candidate intensities (the conventional
    registered result); the MLI image lives in the binned label space the
    pushforward uses.
    """
    grids = _voxelwise_analysis(field, moving, dset, bin_width)
    return grids["mode_raw"], grids["mli"]
