"""Robust rigid-transform estimation from 3D correspondences, with a benchmark harness."""

from regbench.cloud import KeypointSet, PointCloud, load_ply, mesh_resolution, write_ply
from regbench.correspondence import CorrespondenceSet, match_features, select_ratio, synthesize_correspondences
from regbench.estimators import ESTIMATORS, EstimateResult, EstimationContext, EstimatorParams
from regbench.geometry import RigidTransform, fit_rigid, rotation_error, transform_errors, translation_error
from regbench.refine import IcpParams, icp

__version__ = "0.1.0"

__all__ = [
    "ESTIMATORS",
    "CorrespondenceSet",
    "EstimateResult",
    "EstimationContext",
    "EstimatorParams",
    "IcpParams",
    "KeypointSet",
    "PointCloud",
    "RigidTransform",
    "fit_rigid",
    "icp",
    "load_ply",
    "match_features",
    "mesh_resolution",
    "rotation_error",
    "select_ratio",
    "synthesize_correspondences",
    "transform_errors",
    "translation_error",
    "write_ply",
]
