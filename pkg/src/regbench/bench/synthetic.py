"""Synthetic scan pairs with exact ground truth, and frames for synthetic correspondences."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from regbench.cloud import KeypointSet, PointCloud
from regbench.correspondence import CorrespondenceSet, inlier_mask
from regbench.geometry import RigidTransform, axis_angle_rotation, random_rotation


@dataclass(frozen=True, eq=False)
class SyntheticPair:
    model: PointCloud
    scene: PointCloud
    gt: RigidTransform  # maps model coordinates into the scene


def fibonacci_sphere(n: int) -> NDArray[np.float64]:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _random_unit(rng: np.random.Generator) -> NDArray[np.float64]:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def make_synthetic_pair(
    seed: int | None = 0,
    n_base: int = 8000,
    cut: float = -0.3,
    view_angle_deg: float = 60.0,
    noise_mr: float = 0.0,
    radius: float = 100.0,
    axes: tuple[float, float, float] = (1.0, 0.75, 0.55),
    bump: float = 0.15,
) -> SyntheticPair:
    """Two partial views of a bumpy closed surface.

    The surface is an ellipsoid with semi-axes ``radius * axes`` whose radius
    is modulated by a few random low-frequency waves of relative height
    ``bump``. Each view keeps the points whose direction lies on one
    side of a plane (``u . a > cut``); the two view directions differ by
    ``view_angle_deg``. The scene view is then moved by a random rigid
    transform, which is the ground truth. Overlapping points are shared exactly
    unless ``noise_mr`` adds Gaussian jitter to the scene.
    """
    rng = np.random.default_rng(seed)
    u = fibonacci_sphere(n_base)
    r = np.ones(n_base)
    for _ in range(4):
        v = _random_unit(rng)
        r += bump * np.sin(rng.uniform(2.0, 5.0) * (u @ v) + rng.uniform(0, 2 * math.pi))
    pts = radius * r[:, None] * u * np.asarray(axes)

    a = _random_unit(rng)
    axis = np.cross(a, _random_unit(rng))
    b = axis_angle_rotation(axis, math.radians(view_angle_deg)) @ a
    model_pts = pts[u @ a > cut]
    scene_pts = pts[u @ b > cut]

    gt = RigidTransform(random_rotation(rng), rng.uniform(-radius, radius, size=3))
    scene_pts = gt.apply(scene_pts)
    order = rng.permutation(len(scene_pts))
    scene_pts = scene_pts[order]
    if noise_mr > 0:
        mr = PointCloud(scene_pts).mesh_resolution
        scene_pts = scene_pts + rng.normal(scale=noise_mr * mr, size=scene_pts.shape)
    return SyntheticPair(PointCloud(model_pts), PointCloud(scene_pts), gt)


def _perturb(frames: NDArray[np.float64], angle_deg: float, rng: np.random.Generator) -> NDArray[np.float64]:
    if angle_deg <= 0:
        return frames
    out = np.empty_like(frames)
    for i, f in enumerate(frames):
        out[i] = f @ axis_angle_rotation(_random_unit(rng), math.radians(angle_deg)).T
    return out


def attach_synthetic_frames(
    cs: CorrespondenceSet,
    gt: RigidTransform,
    tol: float,
    seed: int | np.random.Generator | None,
    noise_deg: float = 0.0,
) -> CorrespondenceSet:
    """Give every correspondence an LRF pair and an LRA pair.

    Correct pairs (residual under ``gt`` below ``tol``) get a random model frame
    and the scene frame that makes the pair reproduce ``gt`` exactly, optionally
    rotated by ``noise_deg`` about a random axis. False pairs get two
    independent random frames. Axes are the frames' z rows.
    """
    rng = np.random.default_rng(seed)
    n = len(cs)
    model_lrf = np.stack([random_rotation(rng).T for _ in range(n)]) if n else np.zeros((0, 3, 3))
    scene_lrf = np.stack([random_rotation(rng).T for _ in range(n)]) if n else np.zeros((0, 3, 3))
    good = inlier_mask(cs, gt, tol)
    scene_lrf[good] = model_lrf[good] @ gt.rotation.T
    scene_lrf[good] = _perturb(scene_lrf[good], noise_deg, rng)
    return cs.with_frames(model_lrf, scene_lrf, model_lrf[:, 2].copy(), scene_lrf[:, 2].copy())


def synthetic_keypoints(
    pair: SyntheticPair,
    n_keys: int = 300,
    feature_dim: int = 16,
    feature_noise: float = 0.3,
    seed: int | None = 0,
    tol_mr: float = 2.0,
) -> tuple[KeypointSet, KeypointSet]:
    """Keypoints with descriptors and exact frames for a synthetic pair.

    Model keypoints in the overlap get a scene twin (the nearest scene point
    under the ground truth) carrying the same descriptor plus Gaussian noise of
    scale ``feature_noise``; the remaining keypoints on both sides get unrelated
    descriptors. Twins carry frames that reproduce the ground truth.
    """
    rng = np.random.default_rng(seed)
    model, scene, gt = pair.model, pair.scene, pair.gt
    tol = tol_mr * scene.mesh_resolution
    d, nn = scene.tree.query(gt.apply(model.points), k=1)
    m_keys = np.sort(rng.choice(len(model), size=min(n_keys, len(model)), replace=False))
    twin = d[m_keys] < tol
    s_twins = nn[m_keys[twin]]
    s_twins, first = np.unique(s_twins, return_index=True)
    twin_rows = np.flatnonzero(twin)[first]
    free = np.setdiff1d(np.arange(len(scene)), s_twins)
    extra = rng.choice(free, size=min(max(n_keys - s_twins.size, 0), free.size), replace=False)
    s_keys = np.concatenate([s_twins, extra])

    m_feat = rng.normal(size=(m_keys.size, feature_dim))
    s_feat = rng.normal(size=(s_keys.size, feature_dim))
    s_feat[: s_twins.size] = m_feat[twin_rows] + feature_noise * rng.normal(size=(s_twins.size, feature_dim))

    m_lrf = np.stack([random_rotation(rng).T for _ in range(m_keys.size)])
    s_lrf = np.stack([random_rotation(rng).T for _ in range(s_keys.size)])
    s_lrf[: s_twins.size] = m_lrf[twin_rows] @ gt.rotation.T

    order = np.argsort(s_keys, kind="stable")
    mk = KeypointSet(model, m_keys, m_lrf, m_lrf[:, 2].copy(), m_feat)
    sk = KeypointSet(scene, s_keys[order], s_lrf[order], s_lrf[order][:, 2].copy(), s_feat[order])
    return mk, sk
