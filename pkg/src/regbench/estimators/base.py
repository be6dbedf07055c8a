"""Context and result types shared by every estimator, plus small numerical helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from regbench.cloud import PointCloud
from regbench.correspondence import CorrespondenceSet
from regbench.errors import DegenerateInput, MissingFrames
from regbench.geometry import RigidTransform, fit_rigid

DEFAULT_ITERATIONS = 300


@dataclass(frozen=True, eq=False)
class EstimationContext:
    """Everything an estimator may look at besides its own parameters.

    ``model_sub`` and ``scene_sub`` are the random verification subsamples used
    by the hypothesis-verification methods; ``mr`` is the length unit for all
    tolerances.
    """

    correspondences: CorrespondenceSet
    mr: float
    model_sub: PointCloud | None = None
    scene_sub: PointCloud | None = None
    rng_seed: int = 0
    max_iterations: int = DEFAULT_ITERATIONS
    verify_tol: float = 2.0

    def __post_init__(self) -> None:
        if not self.mr > 0:
            raise ValueError("mr must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)

    def require_subsamples(self) -> tuple[PointCloud, PointCloud]:
        if self.model_sub is None or self.scene_sub is None:
            raise ValueError("this estimator needs verification subsamples")
        return self.model_sub, self.scene_sub

    def require_lrf(self) -> CorrespondenceSet:
        if not self.correspondences.has_lrf:
            raise MissingFrames("this estimator needs LRFs on both sides of every correspondence")
        return self.correspondences

    def require_lra(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        axes = self.correspondences.lra_pair()
        if axes is None:
            raise MissingFrames("this estimator needs LRAs on both sides of every correspondence")
        return axes


@dataclass(frozen=True, eq=False)
class EstimateResult:
    transform: RigidTransform
    inliers: NDArray[np.intp]
    iterations: int
    score: float | None = None
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        idx = np.unique(np.asarray(self.inliers, dtype=np.intp))
        idx.setflags(write=False)
        object.__setattr__(self, "inliers", idx)

    def same_as(self, other: EstimateResult) -> bool:
        """Bit-for-bit equality of every field."""
        return (
            np.array_equal(self.transform.rotation, other.transform.rotation)
            and np.array_equal(self.transform.translation, other.transform.translation)
            and np.array_equal(self.inliers, other.inliers)
            and self.iterations == other.iterations
            and (self.score == other.score or (self.score != self.score and other.score != other.score))
            and self.flags == other.flags
        )


def require_min(cs: CorrespondenceSet, n: int = 3) -> None:
    if len(cs) < n:
        raise DegenerateInput(f"need at least {n} correspondences, got {len(cs)}")


def pairwise_distances(pts: NDArray[np.float64]) -> NDArray[np.float64]:
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def triangle_area(a: ArrayLike, b: ArrayLike, c: ArrayLike) -> float:
    a = np.asarray(a)
    return 0.5 * float(np.linalg.norm(np.cross(np.asarray(b) - a, np.asarray(c) - a)))


def fit_subset(cs: CorrespondenceSet, idx: ArrayLike) -> RigidTransform:
    idx = np.asarray(idx, dtype=np.intp)
    return fit_rigid(cs.model_pts[idx], cs.scene_pts[idx])


def correspondence_residuals(cs: CorrespondenceSet, t: RigidTransform) -> NDArray[np.float64]:
    return np.linalg.norm(t.apply(cs.model_pts) - cs.scene_pts, axis=1)


def fit_ranked(cs: CorrespondenceSet, keep: NDArray[np.intp], ranking: NDArray[np.intp]) -> tuple[RigidTransform, NDArray[np.intp], tuple[str, ...]]:
    """Fit on ``keep``; if that is degenerate grow it along ``ranking`` until a fit exists.

    ``ranking`` lists correspondence indices from most to least trusted. Falls
    back to the identity (flagged) when no non-degenerate subset exists.
    """
    keep = np.asarray(keep, dtype=np.intp)
    flags: tuple[str, ...] = ()
    if keep.size >= 3:
        try:
            return fit_subset(cs, keep), keep, flags
        except DegenerateInput:
            flags = ("DegenerateFit",)
    chosen = list(dict.fromkeys(int(i) for i in keep))
    for i in ranking:
        i = int(i)
        if i in chosen:
            continue
        chosen.append(i)
        if len(chosen) >= 3:
            try:
                return fit_subset(cs, chosen), np.asarray(chosen, dtype=np.intp), flags
            except DegenerateInput:
                continue
    return RigidTransform.identity(), np.asarray(chosen, dtype=np.intp), flags + ("NoFit",)
