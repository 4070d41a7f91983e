"""Submap-based place retrieval and spectral 6-DoF registration.

The package covers the non-learned core of a depth-camera to LiDAR
re-localisation pipeline: occupancy submap construction from depth streams,
descriptor retrieval, spectrally weighted point registration, training tuple
mining and the synthetic evaluation harness that ties them together.
"""

from ._backend import BACKEND
from .correspond import TrainingTuple, TupleConfig, build_tuples, inlier_ratio
from .depth_submap import (CameraIntrinsics, DepthImage, Submap, SubmapPolicy,
                           accumulate, project_depth)
from .errors import (ConfigError, DegenerateGeometry, DimensionMismatch,
                     DomainError, EmptyIndex, EmptyInput, FormatError,
                     IndexOutOfRange, InsufficientCorrespondences,
                     NonPositiveSaliency)
from .evalharness import (EvaluationReport, SyntheticWorldConfig,
                          benchmark_registration, evaluate_comprehensive,
                          evaluate_top1, generate_world,
                          sweep_success_vs_offset)
from .features import (CorrespondenceSet, KeypointSet, OracleNoise,
                       OracleProvider, match_features, oracle_describe)
from .geometry import (RigidTransform, Trajectory, is_success, rre_degrees,
                       rte_meters)
from .losses import (LossConfig, descriptor_loss, point_to_point_loss,
                     prob_chamfer_loss, total_loss, triplet_loss)
from .occupancy import OccupancyParams, VoxelGrid
from .registration import (RegistrationConfig, RegistrationResult,
                           register_ransac, register_spectral)
from .retrieval import (DescriptorIndex, positives_by_radius, query_topk,
                        recall_at_n)

__all__ = [
    "BACKEND",
    "CameraIntrinsics",
    "ConfigError",
    "CorrespondenceSet",
    "DegenerateGeometry",
    "DepthImage",
    "DescriptorIndex",
    "DimensionMismatch",
    "DomainError",
    "EmptyIndex",
    "EmptyInput",
    "EvaluationReport",
    "FormatError",
    "IndexOutOfRange",
    "InsufficientCorrespondences",
    "KeypointSet",
    "LossConfig",
    "NonPositiveSaliency",
    "OccupancyParams",
    "OracleNoise",
    "OracleProvider",
    "RegistrationConfig",
    "RegistrationResult",
    "RigidTransform",
    "Submap",
    "SubmapPolicy",
    "SyntheticWorldConfig",
    "Trajectory",
    "TrainingTuple",
    "TupleConfig",
    "VoxelGrid",
    "__version__",
    "accumulate",
    "benchmark_registration",
    "build_tuples",
    "descriptor_loss",
    "evaluate_comprehensive",
    "evaluate_top1",
    "generate_world",
    "inlier_ratio",
    "is_success",
    "match_features",
    "oracle_describe",
    "point_to_point_loss",
    "positives_by_radius",
    "prob_chamfer_loss",
    "project_depth",
    "query_topk",
    "recall_at_n",
    "register_ransac",
    "register_spectral",
    "rre_degrees",
    "rte_meters",
    "total_loss",
    "triplet_loss",
]
__version__ = "0.1.0"
