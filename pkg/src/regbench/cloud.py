"""Point clouds, keypoint sets and their file formats."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from os import PathLike
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from regbench.errors import DegenerateInput, IndexOutOfRange, ParseError, UnsupportedFormat
from regbench.geometry import RigidTransform


def _readonly(a: ArrayLike | None, ncols: int | None = 3) -> NDArray[np.float64] | None:
    if a is None:
        return None
    arr = np.array(a, dtype=np.float64, copy=True)
    if ncols is not None:
        arr = arr.reshape(-1, ncols)
    arr.setflags(write=False)
    return arr


class PointCloud:
    """Immutable set of 3D points with a lazily built kd-tree.

    The spatial index and the mesh resolution are computed on first use and
    cached; both are safe to share between readers.
    """

    def __init__(self, points: ArrayLike, normals: ArrayLike | None = None):
        pts = _readonly(points)
        if len(pts) < 1:
            raise DegenerateInput("a point cloud needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise DegenerateInput("point coordinates must be finite")
        nrm = _readonly(normals)
        if nrm is not None and nrm.shape != pts.shape:
            raise DegenerateInput("normals must match points in shape")
        self.points = pts
        self.normals = nrm

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)}, normals={self.normals is not None})"

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    @cached_property
    def mesh_resolution(self) -> float:
        return mesh_resolution(self)

    @cached_property
    def centroid(self) -> NDArray[np.float64]:
        return self.points.mean(axis=0)

    def transformed(self, t: RigidTransform) -> PointCloud:
        normals = None if self.normals is None else self.normals @ t.rotation.T
        return PointCloud(t.apply(self.points), normals)

    def subset(self, indices: ArrayLike) -> PointCloud:
        idx = np.asarray(indices, dtype=np.intp)
        normals = None if self.normals is None else self.normals[idx]
        return PointCloud(self.points[idx], normals)


def mesh_resolution(cloud: PointCloud) -> float:
    """Mean distance from each point to its nearest neighbour at nonzero distance."""
    if len(cloud) < 2:
        raise DegenerateInput("mesh resolution needs at least two points")
    dist, _ = cloud.tree.query(cloud.points, k=2)
    nn = dist[:, 1].copy()
    dup = nn == 0.0
    if np.any(dup):
        # duplicated coordinates: search among distinct locations instead
        uniq = np.unique(cloud.points, axis=0)
        if len(uniq) < 2:
            raise DegenerateInput("all points coincide")
        d, _ = cKDTree(uniq).query(cloud.points[dup], k=2)
        nn[dup] = d[:, 1]
    return float(nn.mean())


def nearest_neighbor(cloud: PointCloud, query: ArrayLike) -> tuple[int, float]:
    """Exact nearest neighbour of ``query``; equidistant ties go to the lowest index."""
    q = np.asarray(query, dtype=np.float64).reshape(3)
    d0, _ = cloud.tree.query(q, k=1)
    cand = cloud.tree.query_ball_point(q, r=d0 * (1.0 + 1e-9) + 1e-300)
    cand = np.asarray(sorted(cand), dtype=np.intp)
    if cand.size == 0:
        cand = np.arange(len(cloud))
    dist = np.linalg.norm(cloud.points[cand] - q, axis=1)
    best = np.flatnonzero(dist == dist.min())[0]
    return int(cand[best]), float(dist[best])


def subsample(cloud: PointCloud, n: int, seed: int | np.random.Generator | None) -> PointCloud:
    """Uniform random sample of ``min(n, len(cloud))`` points without replacement."""
    return cloud.subset(subsample_indices(len(cloud), n, seed))


def subsample_indices(size: int, n: int, seed: int | np.random.Generator | None) -> NDArray[np.intp]:
    if n < 1:
        raise ValueError("subsample size must be at least 1")
    rng = np.random.default_rng(seed)
    return rng.choice(size, size=min(n, size), replace=False)


def overlap_ratio(p_s: PointCloud, p_t: PointCloud, gt: RigidTransform, tol: float) -> float:
    """Fraction of the smaller cloud lying within ``tol`` of the other after alignment.

    ``gt`` maps ``p_s`` into the frame of ``p_t``.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    src = gt.apply(p_s.points)
    if len(p_s) <= len(p_t):
        d, _ = p_t.tree.query(src, k=1)
    else:
        d, _ = cKDTree(src).query(p_t.points, k=1)
    return float(np.count_nonzero(d < tol)) / min(len(p_s), len(p_t))


def frames_valid(lrf: NDArray[np.float64], tol: float = 1e-6) -> bool:
    """Vectorised orthonormality and handedness check over an ``(m, 3, 3)`` stack."""
    if lrf.size == 0:
        return True
    gram = np.einsum("nij,nkj->nik", lrf, lrf)
    hand = np.cross(lrf[:, 0], lrf[:, 1]) - lrf[:, 2]
    return bool(
        np.all(np.isfinite(lrf))
        and np.abs(gram - np.eye(3)).max() <= tol
        and np.abs(hand).max() <= tol
    )


@dataclass(frozen=True, eq=False)
class KeypointSet:
    """Keypoints selected on a cloud, with optional frames and descriptors.

    ``lrf`` is ``(m, 3, 3)`` with axis rows, ``lra`` is ``(m, 3)`` and
    ``features`` is ``(m, d)``; each is aligned with ``indices``.
    """

    cloud: PointCloud
    indices: NDArray[np.intp]
    lrf: NDArray[np.float64] | None = None
    lra: NDArray[np.float64] | None = None
    features: NDArray[np.float64] | None = None
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        idx = np.array(self.indices, dtype=np.intp, copy=True).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= len(self.cloud)):
            raise IndexError("keypoint index outside the cloud")
        if np.unique(idx).size != idx.size:
            raise ValueError("keypoint indices must be unique")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        m = idx.size
        if self.lrf is not None:
            lrf = _readonly(self.lrf, None).reshape(m, 3, 3)
            if not frames_valid(lrf):
                raise ValueError("LRFs must be orthonormal and right-handed within 1e-6")
            object.__setattr__(self, "lrf", lrf)
        if self.lra is not None:
            lra = _readonly(self.lra).reshape(m, 3)
            if np.abs(np.linalg.norm(lra, axis=1) - 1.0).max(initial=0.0) > 1e-6:
                raise ValueError("LRAs must be unit vectors within 1e-6")
            object.__setattr__(self, "lra", lra)
        if self.features is not None:
            feats = _readonly(self.features, None)
            feats = feats.reshape(m, -1)
            object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return int(self.indices.size)

    @property
    def points(self) -> NDArray[np.float64]:
        return self.cloud.points[self.indices]

    def position_of(self, cloud_index: int) -> int | None:
        """Row of ``cloud_index`` within this set, or None."""
        hits = np.flatnonzero(self.indices == cloud_index)
        return int(hits[0]) if hits.size else None

    def with_frames(
        self,
        lrf: ArrayLike | None = None,
        lra: ArrayLike | None = None,
        flags: tuple[str, ...] = (),
    ) -> KeypointSet:
        return KeypointSet(
            self.cloud,
            self.indices,
            lrf if lrf is not None else self.lrf,
            lra if lra is not None else self.lra,
            self.features,
            self.flags + tuple(flags),
        )


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass
class _PlyElement:
    name: str
    count: int
    props: list[tuple[str, str, str | None]]  # (name, dtype, list-count dtype or None)


def _parse_ply_header(fh, path) -> tuple[str, list[_PlyElement]]:
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise ParseError(f"{path}: line 1: missing 'ply' magic")
    fmt = None
    elements: list[_PlyElement] = []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise ParseError(f"{path}: line {lineno}: header ended without end_header")
        tokens = raw.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        key = tokens[0]
        if key == "end_header":
            break
        if key == "format":
            if len(tokens) < 2:
                raise ParseError(f"{path}: line {lineno}: malformed format line")
            fmt = tokens[1]
        elif key == "element":
            try:
                elements.append(_PlyElement(tokens[1], int(tokens[2]), []))
            except (IndexError, ValueError) as exc:
                raise ParseError(f"{path}: line {lineno}: malformed element line") from exc
        elif key == "property":
            if not elements:
                raise ParseError(f"{path}: line {lineno}: property before element")
            try:
                if tokens[1] == "list":
                    elements[-1].props.append((tokens[4], _PLY_TYPES[tokens[3]], _PLY_TYPES[tokens[2]]))
                else:
                    elements[-1].props.append((tokens[2], _PLY_TYPES[tokens[1]], None))
            except (IndexError, KeyError) as exc:
                raise ParseError(f"{path}: line {lineno}: bad property line {raw!r}") from exc
        else:
            raise ParseError(f"{path}: line {lineno}: unknown header keyword {key!r}")
    if fmt is None:
        raise ParseError(f"{path}: header has no format line")
    if fmt == "binary_big_endian":
        raise UnsupportedFormat(f"{path}: big-endian PLY is not supported")
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"{path}: unknown PLY format {fmt!r}")
    return fmt, elements


def _vertex_columns(el: _PlyElement, path) -> tuple[list[int], list[int] | None]:
    names = [p[0] for p in el.props]
    try:
        xyz = [names.index(c) for c in ("x", "y", "z")]
    except ValueError as exc:
        raise ParseError(f"{path}: vertex element lacks x/y/z") from exc
    nrm = None
    if all(c in names for c in ("nx", "ny", "nz")):
        nrm = [names.index(c) for c in ("nx", "ny", "nz")]
    return xyz, nrm


def load_ply(path: str | PathLike[str]) -> PointCloud:
    """Read vertices (and normals when present) from an ASCII or little-endian PLY."""
    path = Path(path)
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh, path)
        body = fh.read()
    header_len = path.stat().st_size - len(body)
    if not any(e.name == "vertex" for e in elements):
        raise ParseError(f"{path}: no vertex element")
    if fmt == "ascii":
        return _load_ply_ascii(body, elements, path)
    return _load_ply_binary(body, elements, path, header_len)


def _load_ply_ascii(body: bytes, elements: list[_PlyElement], path) -> PointCloud:
    lines = body.decode("ascii", errors="replace").splitlines()
    # header lines are not counted here; report data line numbers
    pos = 0
    for el in elements:
        if el.name != "vertex":
            pos += el.count
            continue
        xyz, nrm = _vertex_columns(el, path)
        if any(p[2] is not None for p in el.props):
            raise ParseError(f"{path}: list properties on vertices are not supported")
        rows = lines[pos : pos + el.count]
        if len(rows) < el.count:
            raise ParseError(f"{path}: data line {pos + len(rows) + 1}: expected {el.count} vertices, file ends early")
        data = np.empty((el.count, len(el.props)))
        for i, row in enumerate(rows):
            vals = row.split()
            if len(vals) < len(el.props):
                raise ParseError(f"{path}: data line {pos + i + 1}: expected {len(el.props)} values")
            try:
                data[i] = [float(v) for v in vals[: len(el.props)]]
            except ValueError as exc:
                raise ParseError(f"{path}: data line {pos + i + 1}: {exc}") from exc
        return PointCloud(data[:, xyz], data[:, nrm] if nrm else None)
    raise ParseError(f"{path}: no vertex element")  # pragma: no cover


def _load_ply_binary(body: bytes, elements: list[_PlyElement], path, header_len: int) -> PointCloud:
    offset = 0
    for el in elements:
        has_list = any(p[2] is not None for p in el.props)
        if el.name == "vertex":
            if has_list:
                raise ParseError(f"{path}: list properties on vertices are not supported")
            dtype = np.dtype([(p[0], "<" + p[1]) for p in el.props])
            need = dtype.itemsize * el.count
            if offset + need > len(body):
                raise ParseError(
                    f"{path}: byte offset {header_len + len(body)}: truncated vertex data "
                    f"(need {need} bytes from offset {header_len + offset})"
                )
            arr = np.frombuffer(body, dtype=dtype, count=el.count, offset=offset)
            xyz = np.stack([arr[c].astype(np.float64) for c in ("x", "y", "z")], axis=1)
            nrm = None
            if all(c in arr.dtype.names for c in ("nx", "ny", "nz")):
                nrm = np.stack([arr[c].astype(np.float64) for c in ("nx", "ny", "nz")], axis=1)
            return PointCloud(xyz, nrm)
        if not has_list:
            offset += np.dtype([(p[0], "<" + p[1]) for p in el.props]).itemsize * el.count
            continue
        for _ in range(el.count):
            for _, dt, count_dt in el.props:
                size = np.dtype(dt).itemsize
                if count_dt is None:
                    offset += size
                    continue
                csize = np.dtype(count_dt).itemsize
                if offset + csize > len(body):
                    raise ParseError(f"{path}: byte offset {header_len + offset}: truncated list")
                n = int(np.frombuffer(body, dtype="<" + count_dt, count=1, offset=offset)[0])
                offset += csize + n * size
        if offset > len(body):
            raise ParseError(f"{path}: byte offset {header_len + offset}: truncated element {el.name!r}")
    raise ParseError(f"{path}: no vertex element")  # pragma: no cover


def write_ply(path: str | PathLike[str], cloud: PointCloud, binary: bool = False) -> None:
    cols = [cloud.points]
    names = ["x", "y", "z"]
    if cloud.normals is not None:
        cols.append(cloud.normals)
        names += ["nx", "ny", "nz"]
    data = np.hstack(cols)
    fmt = "binary_little_endian" if binary else "ascii"
    header = [b"ply", f"format {fmt} 1.0".encode(), f"element vertex {len(cloud)}".encode()]
    header += [f"property double {n}".encode() for n in names]
    header.append(b"end_header")
    with open(path, "wb") as fh:
        fh.write(b"\n".join(header) + b"\n")
        if binary:
            fh.write(data.astype("<f8").tobytes())
        else:
            for row in data:
                fh.write((" ".join(repr(float(v)) for v in row) + "\n").encode())


# ---------------------------------------------------------------------------
# Keypoint / feature / frame text files
# ---------------------------------------------------------------------------

_WS = re.compile(r"\s+")


def _data_lines(path) -> list[tuple[int, list[str]]]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                out.append((lineno, _WS.split(line)))
    return out


def load_features(path: str | PathLike[str], cloud: PointCloud) -> KeypointSet:
    """Keypoints and descriptors: header ``n d`` then ``index f1 .. fd`` per line."""
    rows = _data_lines(path)
    if not rows:
        raise ParseError(f"{path}: empty feature file")
    lineno, head = rows[0]
    try:
        n, d = int(head[0]), int(head[1])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: line {lineno}: expected header 'n d'") from exc
    if len(rows) - 1 != n:
        raise ParseError(f"{path}: header announces {n} keypoints, found {len(rows) - 1}")
    idx = np.empty(n, dtype=np.intp)
    feats = np.empty((n, d))
    for i, (lineno, tok) in enumerate(rows[1:]):
        if len(tok) != d + 1:
            raise ParseError(f"{path}: line {lineno}: expected {d + 1} values, got {len(tok)}")
        try:
            idx[i] = int(tok[0])
            feats[i] = [float(v) for v in tok[1:]]
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    if idx.min() < 0 or idx.max() >= len(cloud):
        raise IndexOutOfRange(f"{path}: keypoint index outside cloud of {len(cloud)} points")
    return KeypointSet(cloud, idx, features=feats)


def save_features(path: str | PathLike[str], keys: KeypointSet) -> None:
    if keys.features is None:
        raise ValueError("keypoint set carries no features")
    with open(path, "w") as fh:
        fh.write(f"{len(keys)} {keys.features.shape[1]}\n")
        for i, f in zip(keys.indices, keys.features):
            fh.write(f"{int(i)} " + " ".join(repr(float(v)) for v in f) + "\n")


def read_indexed_rows(path: str | PathLike[str], width: int) -> tuple[NDArray[np.intp], NDArray[np.float64]]:
    """Rows of ``index v1 .. v_width``; used for LRF (9 values) and LRA (3 values) files."""
    rows = _data_lines(path)
    idx = np.empty(len(rows), dtype=np.intp)
    vals = np.empty((len(rows), width))
    for i, (lineno, tok) in enumerate(rows):
        if len(tok) != width + 1:
            raise ParseError(f"{path}: line {lineno}: expected {width + 1} values, got {len(tok)}")
        try:
            idx[i] = int(tok[0])
            vals[i] = [float(v) for v in tok[1:]]
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    return idx, vals


def write_indexed_rows(path: str | PathLike[str], indices: ArrayLike, values: ArrayLike) -> None:
    values = np.asarray(values, dtype=np.float64).reshape(len(indices), -1)
    with open(path, "w") as fh:
        for i, row in zip(indices, values):
            fh.write(f"{int(i)} " + " ".join(repr(float(v)) for v in row) + "\n")
