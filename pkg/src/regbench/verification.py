"""Scoring pose hypotheses by aligning subsampled clouds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from regbench.cloud import PointCloud
from regbench.geometry import RigidTransform


@dataclass(frozen=True)
class VerificationScore:
    kind: Literal["inlier_count", "huber_sum", "d_avg"]
    value: float
    inlier_fraction: float | None = None


def residuals(model_sub: PointCloud, scene_sub: PointCloud, t: RigidTransform) -> NDArray[np.float64]:
    """Distance from every transformed model point to its nearest scene point."""
    d, _ = scene_sub.tree.query(t.apply(model_sub.points), k=1)
    return d


def count_inliers(
    model_sub: PointCloud, scene_sub: PointCloud, t: RigidTransform, tol: float
) -> VerificationScore:
    """Number of transformed model points closer than ``tol`` to the scene.

    The reported fraction is ``N / min(N1, N2)`` with ``N1``, ``N2`` the sizes
    of the two subsamples.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    n = int(np.count_nonzero(residuals(model_sub, scene_sub, t) < tol))
    return VerificationScore("inlier_count", n, n / min(len(model_sub), len(scene_sub)))


def huber_metric(errors: ArrayLike, t_e: float) -> float:
    """Sum of Huber penalties: quadratic up to ``t_e``, linear beyond."""
    if not t_e > 0:
        raise ValueError("t_e must be positive")
    e = np.abs(np.asarray(errors, dtype=np.float64))
    quad = 0.5 * e * e
    lin = 0.5 * t_e * (2.0 * e - t_e)
    return float(np.where(e <= t_e, quad, lin).sum())


def osac_metric(
    model_sub: PointCloud,
    scene_sub: PointCloud,
    t: RigidTransform,
    delta: float,
    tol: float,
) -> float:
    """Mean inlier distance when the inlier fraction strictly exceeds ``delta``, else inf."""
    value, _ = osac_score(residuals(model_sub, scene_sub, t), len(model_sub), len(scene_sub), delta, tol)
    return value


def osac_score(
    d: NDArray[np.float64], n1: int, n2: int, delta: float, tol: float
) -> tuple[float, float]:
    """``(D_avg, inlier fraction)`` from precomputed residuals."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    inl = d[d < tol]
    frac = inl.size / min(n1, n2)
    if frac > delta:
        return float(inl.mean()), frac
    return math.inf, frac
