"""Discrete probabilistic image registration with random-walker regularization
and label-space uncertainty analysis."""

from . import errors
from .grid import (
    CategoricalField,
    DeformationField,
    DisplacementSet,
    ScalarImage,
    candidate_label_field,
    candidate_labels,
    make_displacement_set,
    sample_interpolated,
    warp_image,
)
from .solver import (
    LatticeWeights,
    RegistrationParams,
    SolverOptions,
    edge_weights,
    mode_field,
    register,
    rwir_solve,
    rwir_solve_dense_oracle,
    solve_raw,
    unary_likelihood,
)
from .uncertainty import (
    LabelDistribution,
    UncertaintyMaps,
    bin_labels,
    compute_uncertainty_maps,
    label_entropy,
    label_images,
    label_iqr,
    label_moments,
    label_quantile,
    mli,
    mode_label,
    pushforward,
    shannon_entropy,
    transform_entropy_map,
)
from .experiments import (
    WORKED_EXAMPLES,
    BumpSpec,
    CheckResult,
    ExperimentReport,
    SynthSummary,
    check_entropy_dissociation,
    check_mode_vs_mli,
    check_uniform_vs_peaked,
    make_bump_deformation,
    random_bump_spec,
    run_synth_experiment,
    two_region_image,
)
from .formats import (
    HeatmapStyle,
    read_dist_field,
    read_pgm,
    write_dist_field,
    write_heatmap,
    write_pgm,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "ScalarImage",
    "DisplacementSet",
    "DeformationField",
    "CategoricalField",
    "make_displacement_set",
    "sample_interpolated",
    "warp_image",
    "candidate_labels",
    "candidate_label_field",
    "LatticeWeights",
    "SolverOptions",
    "RegistrationParams",
    "unary_likelihood",
    "edge_weights",
    "rwir_solve",
    "solve_raw",
    "rwir_solve_dense_oracle",
    "mode_field",
    "register",
    "LabelDistribution",
    "UncertaintyMaps",
    "shannon_entropy",
    "transform_entropy_map",
    "bin_labels",
    "pushforward",
    "label_entropy",
    "label_moments",
    "label_quantile",
    "label_iqr",
    "mli",
    "mode_label",
    "compute_uncertainty_maps",
    "label_images",
    "BumpSpec",
    "CheckResult",
    "SynthSummary",
    "ExperimentReport",
    "WORKED_EXAMPLES",
    "check_uniform_vs_peaked",
    "check_entropy_dissociation",
    "check_mode_vs_mli",
    "make_bump_deformation",
    "random_bump_spec",
    "two_region_image",
    "run_synth_experiment",
    "read_pgm",
    "write_pgm",
    "read_dist_field",
    "write_dist_field",
    "HeatmapStyle",
    "write_heatmap",
]
