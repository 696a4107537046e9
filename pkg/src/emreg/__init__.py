"""Probabilistic point-set registration.

Aligns a model point set onto a data set by treating the model points as
centroids of a Gaussian mixture (plus a uniform outlier term) and maximizing
the data likelihood by expectation-maximization. Rigid and affine maps have
closed-form update steps in any dimension; smooth non-rigid maps come from a
Gaussian-kernel expansion of the displacement field with an explicit
smoothness penalty. Kernel sums can be accelerated by clustered series
expansions or radius truncation, and the non-rigid solve by a low-rank
eigen-approximation of the kernel matrix.
"""

from .bench import BenchmarkGrid, BenchmarkReport, run_benchmark, score_report
from .config import Correspondence, IterationRecord, RegistrationConfig, RegistrationReport
from .datasets import make_clustered_cloud, make_fish_outline
from .errors import CorrespondenceCollapseError, EigenConvergenceError, RegistrationError
from .estep import (
    SIGMA2_FLOOR,
    MixtureParams,
    PosteriorStats,
    compute_posteriors,
    init_sigma2,
    negative_log_likelihood,
    objective_q,
    outlier_constant,
)
from .fastops import (
    GaussTransformPlan,
    LowRankKernel,
    gauss_transform,
    posterior_products_fast,
    topk_eigs,
    truncation_switch,
    woodbury_solve,
)
from .icp import icp_baseline
from .io import load_pointset, save_pointset
from .metrics import correspondence_mse, rotation_error
from .nonrigid import build_kernel, register_nonrigid, solve_coefficients, transform_points, update_sigma2
from .normalization import NormalizationParams, denormalize_transform, normalize
from .rigid import affine_mstep, apply_transform, register_affine, register_rigid, rigid_mstep, solve_rotation
from .synth import DegradationSpec, GroundTruth, MissingRegion, rbf_deformation, synth_pair
from .transforms import AffineTransform, ComposedFieldTransform, NonRigidField, RigidTransform

__version__ = "0.1.0"

__all__ = [
    "AffineTransform",
    "BenchmarkGrid",
    "BenchmarkReport",
    "ComposedFieldTransform",
    "Correspondence",
    "CorrespondenceCollapseError",
    "DegradationSpec",
    "EigenConvergenceError",
    "GaussTransformPlan",
    "GroundTruth",
    "IterationRecord",
    "LowRankKernel",
    "MissingRegion",
    "MixtureParams",
    "NonRigidField",
    "NormalizationParams",
    "PosteriorStats",
    "RegistrationConfig",
    "RegistrationError",
    "RegistrationReport",
    "RigidTransform",
    "SIGMA2_FLOOR",
    "affine_mstep",
    "apply_transform",
    "build_kernel",
    "compute_posteriors",
    "correspondence_mse",
    "denormalize_transform",
    "gauss_transform",
    "icp_baseline",
    "init_sigma2",
    "load_pointset",
    "make_clustered_cloud",
    "make_fish_outline",
    "negative_log_likelihood",
    "normalize",
    "objective_q",
    "outlier_constant",
    "posterior_products_fast",
    "rbf_deformation",
    "register_affine",
    "register_nonrigid",
    "register_rigid",
    "rigid_mstep",
    "rotation_error",
    "run_benchmark",
    "save_pointset",
    "score_report",
    "solve_coefficients",
    "solve_rotation",
    "synth_pair",
    "topk_eigs",
    "transform_points",
    "truncation_switch",
    "update_sigma2",
    "woodbury_solve",
]
