"""Local reference frames: file ingestion and a built-in covariance frame."""

from __future__ import annotations

import logging
from os import PathLike

import numpy as np
from numpy.typing import ArrayLike, NDArray

from regbench.cloud import KeypointSet, PointCloud, read_indexed_rows, write_indexed_rows
from regbench.errors import IndexOutOfRange, InsufficientNeighbors, ParseError
from regbench.geometry import nearest_rotation

logger = logging.getLogger(__name__)

REPAIR_TOL = 1e-3
STRICT_TOL = 1e-6
MIN_NEIGHBORS = 5


def _orthonormality_error(f: NDArray[np.float64]) -> float:
    return float(np.abs(f @ f.T - np.eye(3)).max())


def repair_frame(f: ArrayLike) -> tuple[NDArray[np.float64], tuple[str, ...]]:
    """Make a frame a proper rotation; returns the frame and any repair flags.

    Frames already valid within 1e-6 are returned untouched. Left-handed frames
    get their z row negated. Frames off by more than 1e-3 are projected onto the
    nearest rotation and flagged; smaller drift is projected silently.
    """
    f = np.array(f, dtype=np.float64).reshape(3, 3)
    if not np.all(np.isfinite(f)):
        raise ParseError("frame contains non-finite values")
    flags: tuple[str, ...] = ()
    if np.linalg.det(f) < 0:
        f[2] = -f[2]
        flags += ("HandednessFlipped",)
    err = _orthonormality_error(f)
    if err > REPAIR_TOL:
        flags += ("Reorthonormalized",)
    if err > STRICT_TOL or abs(np.linalg.det(f) - 1.0) > STRICT_TOL or np.abs(np.cross(f[0], f[1]) - f[2]).max() > STRICT_TOL:
        f = nearest_rotation(f)
    return f, flags


def _rows_for_keys(path, keys: KeypointSet, width: int) -> NDArray[np.float64]:
    idx, vals = read_indexed_rows(path, width)
    pos = {int(c): i for i, c in enumerate(keys.indices)}
    out = np.full((len(keys), width), np.nan)
    for cloud_index, row in zip(idx, vals):
        i = pos.get(int(cloud_index))
        if i is None:
            raise IndexOutOfRange(f"{path}: index {int(cloud_index)} is not a keypoint")
        out[i] = row
    missing = np.flatnonzero(np.isnan(out).any(axis=1))
    if missing.size:
        raise ParseError(f"{path}: no row for keypoint index {int(keys.indices[missing[0]])}")
    return out


def load_lrf_file(path: str | PathLike[str], keys: KeypointSet) -> KeypointSet:
    """Attach frames from ``index x1 x2 x3 y1 y2 y3 z1 z2 z3`` rows to ``keys``."""
    rows = _rows_for_keys(path, keys, 9)
    frames = np.empty((len(keys), 3, 3))
    flags: list[str] = []
    for i, row in enumerate(rows):
        frames[i], f = repair_frame(row)
        for name in f:
            flags.append(f"{name}:{int(keys.indices[i])}")
    if flags:
        logger.info("%s: repaired %d frame(s)", path, len(flags))
    return keys.with_frames(lrf=frames, lra=frames[:, 2].copy(), flags=tuple(flags))


def save_lrf_file(path: str | PathLike[str], keys: KeypointSet) -> None:
    if keys.lrf is None:
        raise ValueError("keypoint set carries no LRFs")
    write_indexed_rows(path, keys.indices, keys.lrf.reshape(len(keys), 9))


def load_lra_file(path: str | PathLike[str], keys: KeypointSet) -> KeypointSet:
    """Attach axes from ``index z1 z2 z3`` rows, normalising each to unit length."""
    rows = _rows_for_keys(path, keys, 3)
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0):
        raise ParseError(f"{path}: zero-length axis")
    off = np.abs(norms - 1.0) > STRICT_TOL
    rows[off] /= norms[off, None]
    return keys.with_frames(lra=rows)


def save_lra_file(path: str | PathLike[str], keys: KeypointSet) -> None:
    if keys.lra is None:
        raise ValueError("keypoint set carries no LRAs")
    write_indexed_rows(path, keys.indices, keys.lra)


def _majority_sign(axis: NDArray[np.float64], vectors: NDArray[np.float64]) -> float:
    proj = vectors @ axis
    pos = np.count_nonzero(proj >= 0)
    neg = proj.size - pos
    if pos != neg:
        return 1.0 if pos > neg else -1.0
    return 1.0 if proj.sum() >= 0 else -1.0


def compute_default_lrf(cloud: PointCloud, index: int, radius: float | None = None) -> NDArray[np.float64]:
    """Covariance frame at one point.

    ``radius`` defaults to 15 mesh resolutions. z is the least-variance
    direction and x the most-variance direction; each sign is chosen so that
    most neighbour-to-keypoint vectors project nonnegatively on it.
    """
    radius = 15.0 * cloud.mesh_resolution if radius is None else radius
    centre = cloud.points[index]
    nbr = cloud.tree.query_ball_point(centre, radius)
    if len(nbr) < MIN_NEIGHBORS:
        raise InsufficientNeighbors(f"{len(nbr)} neighbours within radius, need {MIN_NEIGHBORS}")
    pts = cloud.points[np.sort(nbr)]
    diff = pts - pts.mean(axis=0)
    _, vecs = np.linalg.eigh(diff.T @ diff / len(pts))
    toward = centre - pts
    z = vecs[:, 0] * _majority_sign(vecs[:, 0], toward)
    x = vecs[:, 2] - (vecs[:, 2] @ z) * z
    x /= np.linalg.norm(x)
    x *= _majority_sign(x, toward)
    y = np.cross(z, x)
    return np.stack([x, y, z])


def compute_default_lrfs(keys: KeypointSet, radius: float | None = None) -> KeypointSet:
    """Built-in frames for every keypoint of ``keys``."""
    frames = np.stack([compute_default_lrf(keys.cloud, int(i), radius) for i in keys.indices]) if len(keys) else np.zeros((0, 3, 3))
    return keys.with_frames(lrf=frames, lra=frames[:, 2].copy())


def lra_from_lrf(lrf: ArrayLike) -> NDArray[np.float64]:
    """The z row of a frame."""
    return np.array(np.asarray(lrf, dtype=np.float64)[2], copy=True)
