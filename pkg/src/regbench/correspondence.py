"""Building, selecting and synthesising model-scene correspondences."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from os import PathLike

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from regbench.cloud import KeypointSet, PointCloud
from regbench.errors import DimensionMismatch, MissingDistances, NoOverlap, ParseError
from regbench.geometry import RigidTransform


@dataclass(frozen=True)
class Correspondence:
    model_index: int
    model_point: NDArray[np.float64]
    scene_index: int
    scene_point: NDArray[np.float64]
    nn_dist: float | None = None
    nn2_dist: float | None = None
    model_lrf: NDArray[np.float64] | None = None
    scene_lrf: NDArray[np.float64] | None = None
    model_lra: NDArray[np.float64] | None = None
    scene_lra: NDArray[np.float64] | None = None


def _opt(a, shape, dtype=np.float64):
    if a is None:
        return None
    arr = np.array(a, dtype=dtype, copy=True).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Column-wise storage of an ordered list of correspondences.

    Point arrays are ``(n, 3)``; frames are ``(n, 3, 3)`` (axis rows) and axes
    ``(n, 3)``. Indices refer to points of the parent clouds.
    """

    model_idx: NDArray[np.intp]
    scene_idx: NDArray[np.intp]
    model_pts: NDArray[np.float64]
    scene_pts: NDArray[np.float64]
    nn_dist: NDArray[np.float64] | None = None
    nn2_dist: NDArray[np.float64] | None = None
    model_lrf: NDArray[np.float64] | None = None
    scene_lrf: NDArray[np.float64] | None = None
    model_lra: NDArray[np.float64] | None = None
    scene_lra: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        n = np.asarray(self.model_idx).size
        layout = (
            ("model_idx", (n,), np.intp),
            ("scene_idx", (n,), np.intp),
            ("model_pts", (n, 3), np.float64),
            ("scene_pts", (n, 3), np.float64),
            ("nn_dist", (n,), np.float64),
            ("nn2_dist", (n,), np.float64),
            ("model_lrf", (n, 3, 3), np.float64),
            ("scene_lrf", (n, 3, 3), np.float64),
            ("model_lra", (n, 3), np.float64),
            ("scene_lra", (n, 3), np.float64),
        )
        for name, shape, dtype in layout:
            object.__setattr__(self, name, _opt(getattr(self, name), shape, dtype))
        if not (np.all(np.isfinite(self.model_pts)) and np.all(np.isfinite(self.scene_pts))):
            raise ValueError("correspondence points must be finite")
        if self.nn_dist is not None and self.nn2_dist is not None:
            if np.any(self.nn_dist < 0) or np.any(self.nn_dist > self.nn2_dist):
                raise ValueError("feature distances must satisfy 0 <= nearest <= second-nearest")

    def __len__(self) -> int:
        return int(self.model_idx.size)

    def __getitem__(self, i: int) -> Correspondence:
        pick = lambda a: None if a is None else a[i]  # noqa: E731
        return Correspondence(
            int(self.model_idx[i]),
            self.model_pts[i],
            int(self.scene_idx[i]),
            self.scene_pts[i],
            None if self.nn_dist is None else float(self.nn_dist[i]),
            None if self.nn2_dist is None else float(self.nn2_dist[i]),
            pick(self.model_lrf),
            pick(self.scene_lrf),
            pick(self.model_lra),
            pick(self.scene_lra),
        )

    @property
    def has_lrf(self) -> bool:
        return self.model_lrf is not None and self.scene_lrf is not None

    @property
    def has_lra(self) -> bool:
        return self.model_lra is not None and self.scene_lra is not None

    @property
    def has_distances(self) -> bool:
        return self.nn_dist is not None and self.nn2_dist is not None

    def lra_pair(self) -> tuple[NDArray[np.float64], NDArray[np.float64]] | None:
        """Model and scene axes; falls back to the z rows of the LRFs."""
        if self.has_lra:
            return self.model_lra, self.scene_lra
        if self.has_lrf:
            return self.model_lrf[:, 2], self.scene_lrf[:, 2]
        return None

    def subset(self, indices: ArrayLike) -> CorrespondenceSet:
        idx = np.asarray(indices, dtype=np.intp)
        take = lambda a: None if a is None else a[idx]  # noqa: E731
        return CorrespondenceSet(
            self.model_idx[idx],
            self.scene_idx[idx],
            self.model_pts[idx],
            self.scene_pts[idx],
            take(self.nn_dist),
            take(self.nn2_dist),
            take(self.model_lrf),
            take(self.scene_lrf),
            take(self.model_lra),
            take(self.scene_lra),
        )

    def with_frames(
        self,
        model_lrf: ArrayLike | None = None,
        scene_lrf: ArrayLike | None = None,
        model_lra: ArrayLike | None = None,
        scene_lra: ArrayLike | None = None,
    ) -> CorrespondenceSet:
        return replace(
            self,
            model_lrf=self.model_lrf if model_lrf is None else model_lrf,
            scene_lrf=self.scene_lrf if scene_lrf is None else scene_lrf,
            model_lra=self.model_lra if model_lra is None else model_lra,
            scene_lra=self.scene_lra if scene_lra is None else scene_lra,
        )


def match_features(model_keys: KeypointSet, scene_keys: KeypointSet) -> CorrespondenceSet:
    """Nearest scene descriptor for every model keypoint.

    Both the nearest and second-nearest descriptor distances are recorded;
    with a single scene keypoint the second-nearest equals the nearest.
    """
    fm, fs = model_keys.features, scene_keys.features
    if fm is None or fs is None:
        raise DimensionMismatch("both keypoint sets need feature vectors")
    if fm.shape[1] != fs.shape[1]:
        raise DimensionMismatch(f"feature dimensions differ: {fm.shape[1]} vs {fs.shape[1]}")
    k = min(2, len(scene_keys))
    dist, idx = cKDTree(fs).query(fm, k=k)
    if k == 1:
        nn, nn2, best = dist, dist.copy(), idx
    else:
        nn, nn2, best = dist[:, 0], dist[:, 1], idx[:, 0]
    return CorrespondenceSet(
        model_keys.indices,
        scene_keys.indices[best],
        model_keys.points,
        scene_keys.points[best],
        nn,
        nn2,
        model_keys.lrf,
        None if scene_keys.lrf is None else scene_keys.lrf[best],
        model_keys.lra,
        None if scene_keys.lra is None else scene_keys.lra[best],
    )


def _ratio(nn: NDArray[np.float64], nn2: NDArray[np.float64]) -> NDArray[np.float64]:
    with np.errstate(divide="ignore", invalid="ignore"):
        r = nn / nn2
    # 0/0: two perfect matches, maximally ambiguous
    return np.where(nn2 > 0, r, 1.0)


def _select(raw: CorrespondenceSet, key: NDArray[np.float64], k: int) -> CorrespondenceSet:
    order = np.lexsort((raw.model_idx, key))
    return raw.subset(order[: min(k, len(raw))])


def select_ratio(raw: CorrespondenceSet, k: int) -> CorrespondenceSet:
    """Keep the ``k`` correspondences with the lowest nearest/second-nearest ratio."""
    if not raw.has_distances:
        raise MissingDistances("ratio selection needs nearest and second-nearest distances")
    return _select(raw, _ratio(raw.nn_dist, raw.nn2_dist), k)


def select_similarity(raw: CorrespondenceSet, k: int) -> CorrespondenceSet:
    """Keep the ``k`` correspondences with the smallest descriptor distance."""
    if raw.nn_dist is None:
        raise MissingDistances("similarity selection needs descriptor distances")
    return _select(raw, raw.nn_dist, k)


def inlier_mask(cs: CorrespondenceSet, gt: RigidTransform, tol: float) -> NDArray[np.bool_]:
    return np.linalg.norm(gt.apply(cs.model_pts) - cs.scene_pts, axis=1) < tol


def pcc(cs: CorrespondenceSet, gt: RigidTransform, tol: float) -> float:
    """Fraction of correspondences consistent with ``gt`` to within ``tol``."""
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    if len(cs) == 0:
        return 0.0
    return float(np.count_nonzero(inlier_mask(cs, gt, tol))) / len(cs)


def synthesize_correspondences(
    model: PointCloud,
    scene: PointCloud,
    gt: RigidTransform,
    n: int = 200,
    pcc: float = 0.5,
    seed: int | np.random.Generator | None = None,
    tol_mr: float = 2.0,
) -> CorrespondenceSet:
    """Synthetic correspondences with an exact share of correct pairs.

    Correct pairs take model points from the overlap region and their nearest
    scene point under ``gt``. Points whose residual is below a quarter of the
    tolerance are preferred whenever there are enough of them, so that correct
    pairs are as exact as the data allows. False pairs are independent uniform picks on both
    clouds, redrawn whenever they land within ``tol_mr`` scene resolutions of
    being correct. The output order is shuffled.
    """
    if not 0.0 <= pcc <= 1.0:
        raise ValueError("pcc must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    tol = tol_mr * scene.mesh_resolution
    n_correct = int(math.floor(n * pcc + 0.5 + 1e-9))
    n_false = n - n_correct

    m_idx = np.empty(n, dtype=np.intp)
    s_idx = np.empty(n, dtype=np.intp)
    if n_correct:
        mapped = gt.apply(model.points)
        d, nn = scene.tree.query(mapped, k=1)
        overlap = np.flatnonzero(d < tol)
        if overlap.size == 0:
            raise NoOverlap("no model point maps onto the scene under the ground truth")
        core = np.flatnonzero(d < 0.25 * tol)
        if core.size >= n_correct:
            overlap = core
        pick = rng.choice(overlap, size=n_correct, replace=overlap.size < n_correct)
        m_idx[:n_correct] = pick
        s_idx[:n_correct] = nn[pick]

    filled = n_correct
    while filled < n:
        need = n - filled
        cand_m = rng.integers(0, len(model), size=need)
        cand_s = rng.integers(0, len(scene), size=need)
        err = np.linalg.norm(gt.apply(model.points[cand_m]) - scene.points[cand_s], axis=1)
        ok = err >= tol
        take = int(np.count_nonzero(ok))
        m_idx[filled : filled + take] = cand_m[ok]
        s_idx[filled : filled + take] = cand_s[ok]
        filled += take
    assert filled == n_correct + n_false

    order = rng.permutation(n)
    m_idx, s_idx = m_idx[order], s_idx[order]
    return CorrespondenceSet(m_idx, s_idx, model.points[m_idx], scene.points[s_idx])


def save_correspondences(path: str | PathLike[str], cs: CorrespondenceSet) -> None:
    """One line per pair: ``model_idx scene_idx nn_dist nn2_dist``."""
    nn = cs.nn_dist if cs.nn_dist is not None else np.full(len(cs), np.nan)
    nn2 = cs.nn2_dist if cs.nn2_dist is not None else np.full(len(cs), np.nan)
    with open(path, "w") as fh:
        for a, b, d1, d2 in zip(cs.model_idx, cs.scene_idx, nn, nn2):
            fh.write(f"{int(a)} {int(b)} {float(d1)!r} {float(d2)!r}\n")


def load_correspondences(
    path: str | PathLike[str], model: PointCloud, scene: PointCloud
) -> CorrespondenceSet:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.split()
            if not tok:
                continue
            if len(tok) != 4:
                raise ParseError(f"{path}: line {lineno}: expected 4 values, got {len(tok)}")
            try:
                rows.append((int(tok[0]), int(tok[1]), float(tok[2]), float(tok[3])))
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no correspondences")
    a = np.array([r[0] for r in rows], dtype=np.intp)
    b = np.array([r[1] for r in rows], dtype=np.intp)
    d1 = np.array([r[2] for r in rows])
    d2 = np.array([r[3] for r in rows])
    if a.min() < 0 or a.max() >= len(model) or b.min() < 0 or b.max() >= len(scene):
        raise ParseError(f"{path}: point index outside the clouds")
    has_d = not (np.isnan(d1).all() and np.isnan(d2).all())
    return CorrespondenceSet(
        a, b, model.points[a], scene.points[b], d1 if has_d else None, d2 if has_d else None
    )
