"""Point-to-point ICP for polishing a coarse estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from regbench.cloud import PointCloud
from regbench.errors import DegenerateInput
from regbench.geometry import RigidTransform, fit_rigid


@dataclass(frozen=True)
class IcpParams:
    """Lengths are in multiples of ``mr``."""

    max_iterations: int = 50
    epsilon: float = 1e-6
    reject: float = 5.0

    def __post_init__(self) -> None:
        if self.max_iterations < 1 or not self.epsilon > 0 or not self.reject > 0:
            raise ValueError("ICP parameters must be positive")


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    rms: float
    iterations: int
    history: tuple[float, ...] = field(default=())
    flags: tuple[str, ...] = field(default=())


def _pairs(model: NDArray[np.float64], scene: PointCloud, t: RigidTransform, reject: float):
    """Nearest-neighbour pairing plus the truncated RMS of the current pose.

    The RMS caps every squared distance at ``reject**2`` and averages over all
    model points, so a rejected point costs exactly the rejection distance.
    """
    d, idx = scene.tree.query(t.apply(model), k=1)
    ok = d < reject
    rms = math.sqrt(float(np.mean(np.minimum(d * d, reject * reject))))
    return ok, idx, rms


def icp(
    model: PointCloud,
    scene: PointCloud,
    t0: RigidTransform,
    params: IcpParams | None = None,
    mr: float | None = None,
) -> IcpResult:
    """Refine ``t0`` so the model sits on the scene.

    ``mr`` defaults to the scene's mesh resolution. The reported RMS never
    increases from one iteration to the next.
    """
    params = params or IcpParams()
    if len(model) == 0 or len(scene) == 0:
        raise DegenerateInput("ICP needs two nonempty clouds")
    mr = scene.mesh_resolution if mr is None else mr
    reject = params.reject * mr
    eps = params.epsilon * mr
    pts = model.points
    t = t0
    ok, idx, rms = _pairs(pts, scene, t, reject)
    history = [rms]
    if not ok.any():
        return IcpResult(t0, rms, 0, tuple(history), ("NoPairs",))
    iterations = 0
    flags: tuple[str, ...] = ()
    while iterations < params.max_iterations:
        if np.count_nonzero(ok) < 3:
            flags = ("TooFewPairs",)
            break
        iterations += 1
        try:
            t_new = fit_rigid(pts[ok], scene.points[idx[ok]])
        except DegenerateInput:
            flags = ("DegenerateFit",)
            break
        ok_new, idx_new, rms_new = _pairs(pts, scene, t_new, reject)
        if rms_new > rms:
            # rounding only; keep the better pose
            break
        improvement = rms - rms_new
        t, ok, idx, rms = t_new, ok_new, idx_new, rms_new
        history.append(rms)
        if improvement < eps:
            break
    return IcpResult(t, rms, iterations, tuple(history), flags)
