"""Rigid transforms, closed-form fitting, frame-based pose hypotheses and error metrics.

Points are plain ``(3,)`` float arrays and point sets ``(n, 3)`` arrays. A local
reference frame (LRF) is a ``(3, 3)`` array whose rows are the x, y and z axes;
a local reference axis (LRA) is a unit ``(3,)`` array.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from os import PathLike
from typing import TypeAlias

import numpy as np
from numpy.typing import ArrayLike, NDArray

from regbench.errors import DegenerateInput, InvalidMr, InvalidRotation, ParseError

logger = logging.getLogger(__name__)

Vec3: TypeAlias = NDArray[np.float64]
Mat3: TypeAlias = NDArray[np.float64]
Points: TypeAlias = NDArray[np.float64]

_ROTATION_CHECK_TOL = 1e-6
_GIMBAL_TOL = 1e-9
_LRA_PARALLEL_ANGLE = 1e-4


def _frozen(a: ArrayLike, shape: tuple[int, ...]) -> NDArray[np.float64]:
    arr = np.array(a, dtype=np.float64, copy=True).reshape(shape)
    arr.setflags(write=False)
    return arr


def is_rotation(r: ArrayLike, tol: float = 1e-9) -> bool:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    return bool(
        np.abs(r.T @ r - np.eye(3)).max() <= tol and abs(np.linalg.det(r) - 1.0) <= tol
    )


def nearest_rotation(m: ArrayLike) -> Mat3:
    """Project a 3x3 matrix onto SO(3) in the Frobenius sense."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation plus translation; maps ``p`` to ``R @ p + t``."""

    rotation: Mat3
    translation: Vec3

    def __post_init__(self) -> None:
        r = _frozen(self.rotation, (3, 3))
        t = _frozen(self.translation, (3,))
        if not is_rotation(r, _ROTATION_CHECK_TOL):
            raise InvalidRotation("rotation is not orthonormal with det +1")
        if not np.all(np.isfinite(t)):
            raise InvalidRotation("translation is not finite")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: ArrayLike, orthonormalize: bool = True) -> RigidTransform:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
        r = nearest_rotation(m[:3, :3]) if orthonormalize else m[:3, :3]
        return cls(r, m[:3, 3])

    def as_matrix(self) -> NDArray[np.float64]:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        """Transform one point ``(3,)`` or a set ``(n, 3)``."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def __repr__(self) -> str:
        return (
            f"RigidTransform(rotation={self.rotation.tolist()}, "
            f"translation={self.translation.tolist()})"
        )


def apply(t: RigidTransform, p: ArrayLike) -> NDArray[np.float64]:
    return t.apply(p)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform that applies ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    return t.inverse()


def fit_rigid(model: ArrayLike, scene: ArrayLike) -> RigidTransform:
    """Least-squares rigid transform taking ``model[i]`` onto ``scene[i]``.

    SVD solution of the orthogonal Procrustes problem with the usual
    reflection correction, so the result is always a proper rotation.

    Raises:
        DegenerateInput: fewer than three pairs, or the model points are collinear.
    """
    p = np.asarray(model, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(scene, dtype=np.float64).reshape(-1, 3)
    if p.shape != q.shape:
        raise DegenerateInput(f"pair count mismatch: {p.shape} vs {q.shape}")
    if len(p) < 3:
        raise DegenerateInput(f"need at least 3 pairs, got {len(p)}")
    cp = p.mean(axis=0)
    cq = q.mean(axis=0)
    pc = p - cp
    qc = q - cq
    sv = np.linalg.svd(pc, compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= 1e-12 * sv[0]:
        raise DegenerateInput("model points are collinear or coincident")
    u, _, vt = np.linalg.svd(qc.T @ pc)
    d = 1.0 if np.linalg.det(u @ vt) >= 0.0 else -1.0
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    return RigidTransform(r, cq - r @ cp)


def transform_from_lrf_pair(p: ArrayLike, q: ArrayLike, lrf_p: ArrayLike, lrf_q: ArrayLike) -> RigidTransform:
    """Pose hypothesis from a single correspondence carrying full frames.

    The rotation takes the model frame's axes onto the scene frame's axes;
    the translation then pins ``p`` onto ``q``.
    """
    fp = np.asarray(lrf_p, dtype=np.float64)
    fq = np.asarray(lrf_q, dtype=np.float64)
    r = fq.T @ fp
    p = np.asarray(p, dtype=np.float64)
    return RigidTransform(r, np.asarray(q, dtype=np.float64) - r @ p)


def transforms_from_lrf_pairs(
    p: Points, q: Points, lrf_p: NDArray[np.float64], lrf_q: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Batched :func:`transform_from_lrf_pair`; returns ``(R, t)`` stacks."""
    r = np.einsum("nki,nkj->nij", lrf_q, lrf_p)
    t = q - np.einsum("nij,nj->ni", r, p)
    return r, t


def _frame_from_axis_and_baseline(axis: Vec3, baseline: Vec3) -> Mat3:
    z = axis / np.linalg.norm(axis)
    bn = np.linalg.norm(baseline)
    if bn <= 1e-9:
        raise DegenerateInput("correspondence points coincide")
    cos_angle = abs(float(z @ baseline) / bn)
    if math.sqrt(max(0.0, 1.0 - cos_angle * cos_angle)) < math.sin(_LRA_PARALLEL_ANGLE):
        raise DegenerateInput("baseline is parallel to the local reference axis")
    x = baseline - (z @ baseline) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z])


def transform_from_two_lra(
    c_i: tuple[ArrayLike, ArrayLike],
    c_j: tuple[ArrayLike, ArrayLike],
    lra_pi: ArrayLike,
    lra_qi: ArrayLike,
) -> RigidTransform:
    """Pose hypothesis from two correspondences and the axis at the first one.

    Each side gets a frame with z along the LRA and x along the baseline to the
    second point (orthogonalised against z); the frames are then aligned as in
    :func:`transform_from_lrf_pair`, anchored at the first correspondence.
    """
    p_i, q_i = (np.asarray(v, dtype=np.float64) for v in c_i)
    p_j, q_j = (np.asarray(v, dtype=np.float64) for v in c_j)
    fp = _frame_from_axis_and_baseline(np.asarray(lra_pi, dtype=np.float64), p_j - p_i)
    fq = _frame_from_axis_and_baseline(np.asarray(lra_qi, dtype=np.float64), q_j - q_i)
    return transform_from_lrf_pair(p_i, q_i, fp, fq)


def rotation_error(r_e: ArrayLike, r_gt: ArrayLike) -> float:
    """Angle in degrees of the relative rotation between estimate and ground truth."""
    r_e = np.asarray(r_e, dtype=np.float64)
    r_gt = np.asarray(r_gt, dtype=np.float64)
    # R_E is orthonormal, so its inverse is its transpose.
    c = (np.trace(r_gt @ r_e.T) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def translation_error(
    t_e: ArrayLike,
    t_gt: ArrayLike,
    r_e: ArrayLike,
    r_gt: ArrayLike,
    m_c: ArrayLike,
    mr: float,
) -> float:
    """Rotation-compensated translation error in mesh-resolution units."""
    if not mr > 0:
        raise InvalidMr(f"mesh resolution must be positive, got {mr}")
    m_c = np.asarray(m_c, dtype=np.float64)
    v = (
        np.asarray(t_gt, dtype=np.float64)
        - np.asarray(t_e, dtype=np.float64)
        + np.asarray(r_gt, dtype=np.float64) @ m_c
        - np.asarray(r_e, dtype=np.float64) @ m_c
    )
    return float(np.linalg.norm(v)) / mr


def transform_errors(
    estimate: RigidTransform, gt: RigidTransform, m_c: ArrayLike, mr: float
) -> tuple[float, float]:
    """``(rotation error in degrees, translation error in mr)`` of ``estimate``."""
    return (
        rotation_error(estimate.rotation, gt.rotation),
        translation_error(
            estimate.translation, gt.translation, estimate.rotation, gt.rotation, m_c, mr
        ),
    )


def rotation_from_euler(yaw: float, pitch: float, roll: float) -> Mat3:
    """Intrinsic Z-Y-X rotation ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def euler_from_rotation(r: ArrayLike) -> tuple[float, float, float]:
    """Intrinsic Z-Y-X angles ``(yaw, pitch, roll)`` in radians.

    At gimbal lock (``|R[2, 0]|`` within 1e-9 of 1) roll is fixed to zero and
    the remaining freedom is absorbed into yaw.
    """
    r = np.asarray(r, dtype=np.float64)
    angles = euler_zyx(r[None])[0]
    return float(angles[0]), float(angles[1]), float(angles[2])


def euler_zyx(rs: NDArray[np.float64]) -> NDArray[np.float64]:
    """Vectorised :func:`euler_from_rotation` over an ``(n, 3, 3)`` stack."""
    rs = np.asarray(rs, dtype=np.float64)
    s = np.clip(-rs[:, 2, 0], -1.0, 1.0)
    pitch = np.arcsin(s)
    yaw = np.arctan2(rs[:, 1, 0], rs[:, 0, 0])
    roll = np.arctan2(rs[:, 2, 1], rs[:, 2, 2])
    locked = np.abs(rs[:, 2, 0]) > 1.0 - _GIMBAL_TOL
    if np.any(locked):
        logger.debug("gimbal lock in %d rotation(s); roll fixed to 0", int(locked.sum()))
        pitch = np.where(locked, np.copysign(np.pi / 2, s), pitch)
        # With roll = 0: R[0,1] = -sin(yaw), R[1,1] = cos(yaw).
        yaw = np.where(locked, np.arctan2(-rs[:, 0, 1], rs[:, 1, 1]), yaw)
        roll = np.where(locked, 0.0, roll)
    return np.stack([yaw, pitch, roll], axis=1)


def validate_lrf(lrf: ArrayLike, tol: float = 1e-6) -> bool:
    """Rows unit, mutually orthogonal and right-handed within ``tol``."""
    f = np.asarray(lrf, dtype=np.float64)
    if f.shape != (3, 3) or not np.all(np.isfinite(f)):
        return False
    return bool(
        np.abs(f @ f.T - np.eye(3)).max() <= tol
        and np.abs(np.cross(f[0], f[1]) - f[2]).max() <= tol
    )


def random_rotation(rng: np.random.Generator) -> Mat3:
    """Uniformly distributed rotation (via a random unit quaternion)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return quaternion_to_rotation(q)


def quaternion_to_rotation(q: ArrayLike) -> Mat3:
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def axis_angle_rotation(axis: ArrayLike, angle: float) -> Mat3:
    """Rodrigues rotation by ``angle`` radians about ``axis``."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def load_transform(path: str | PathLike[str]) -> RigidTransform:
    """Read a 4x4 row-major homogeneous matrix from a text file."""
    try:
        m = np.loadtxt(path, dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if m.shape != (4, 4):
        raise ParseError(f"{path}: expected 4 lines of 4 numbers, got shape {m.shape}")
    return RigidTransform.from_matrix(m)


def save_transform(path: str | PathLike[str], t: RigidTransform) -> None:
    np.savetxt(path, t.as_matrix(), fmt="%.17g")
