"""Game-theoretic matching: payoff matrices, replicator dynamics, GTM and V-GTM."""

from __future__ import annotations

from typing import Iterator

import numpy as np
from numpy.typing import ArrayLike, NDArray

from regbench.correspondence import CorrespondenceSet
from regbench.estimators.base import (
    EstimateResult,
    EstimationContext,
    fit_ranked,
    pairwise_distances,
    require_min,
)
from regbench.estimators.params import EstimatorParams, ReplicatorParams


def _mirror_upper(m: NDArray[np.float64]) -> NDArray[np.float64]:
    upper = np.triu(m, k=1)
    return upper + upper.T


def _distance_ratio(dp: NDArray[np.float64], dq: NDArray[np.float64]) -> NDArray[np.float64]:
    lo = np.minimum(dp, dq)
    hi = np.maximum(dp, dq)
    out = np.zeros_like(hi)
    np.divide(lo, hi, out=out, where=hi > 0)
    return out


def build_payoff_gtm(cs: CorrespondenceSet, lam: float = 1.0) -> NDArray[np.float64]:
    """Ratio of the shorter to the longer of the two pairwise distances, to the power ``lam``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    dp = pairwise_distances(cs.model_pts)
    dq = pairwise_distances(cs.scene_pts)
    return _mirror_upper(_distance_ratio(dp, dq) ** lam)


def build_payoff_vgtm(cs: CorrespondenceSet, gamma: float, mr: float, cutoff: float = 0.1) -> NDArray[np.float64]:
    """Distance ratio damped by ``exp(-|d_p - d_q| / (gamma * mr))``.

    Entries between correspondences that share a point on either side, and
    entries below ``cutoff``, are zeroed.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    dp = pairwise_distances(cs.model_pts)
    dq = pairwise_distances(cs.scene_pts)
    pi = _distance_ratio(dp, dq) * np.exp(-np.abs(dp - dq) / (gamma * mr))
    pi[(dp == 0) | (dq == 0) | (pi < cutoff)] = 0.0
    return _mirror_upper(pi)


def iterate_replicator(
    pi: ArrayLike, x0: ArrayLike | None = None, max_steps: int = 1000, tol: float = 1e-8
) -> Iterator[NDArray[np.float64]]:
    """Yield the population after every replicator step.

    Stops once no component moves by ``tol`` or more, after ``max_steps``, or
    when the average payoff vanishes (the population is then left unchanged).
    """
    pi = np.asarray(pi, dtype=np.float64)
    n = pi.shape[0]
    x = np.full(n, 1.0 / n) if x0 is None else np.array(x0, dtype=np.float64)
    if np.any(x < 0) or abs(x.sum() - 1.0) > 1e-9:
        raise ValueError("x0 must lie on the simplex")
    for _ in range(max_steps):
        px = pi @ x
        avg = float(x @ px)
        if avg <= 0.0:
            return
        nxt = x * px / avg
        nxt /= nxt.sum()
        delta = float(np.max(np.abs(nxt - x)))
        x = nxt
        yield x
        if delta < tol:
            return


def replicator_dynamics(
    pi: ArrayLike, x0: ArrayLike | None = None, max_steps: int = 1000, tol: float = 1e-8
) -> NDArray[np.float64]:
    """Final population of :func:`iterate_replicator`."""
    pi = np.asarray(pi, dtype=np.float64)
    x = np.full(pi.shape[0], 1.0 / pi.shape[0]) if x0 is None else np.array(x0, dtype=np.float64)
    for x in iterate_replicator(pi, x, max_steps, tol):
        pass
    return x


def _evolve(pi: NDArray[np.float64], rp: ReplicatorParams) -> tuple[NDArray[np.float64], int]:
    x = np.full(pi.shape[0], 1.0 / pi.shape[0])
    steps = 0
    for x in iterate_replicator(pi, x, rp.max_steps, rp.tol):
        steps += 1
    return x, steps


def _finish(
    cs: CorrespondenceSet, x: NDArray[np.float64], keep: NDArray[np.intp], steps: int
) -> EstimateResult:
    ranking = np.argsort(-x, kind="stable")
    flags: tuple[str, ...] = ()
    if keep.size < 3:
        flags = ("TooFewInliers",)
        keep = np.sort(ranking[:3])
    t, used, fit_flags = fit_ranked(cs, keep, ranking)
    return EstimateResult(t, used, steps, float(x[used].sum()), flags + fit_flags)


def estimate_gtm(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    params = params or EstimatorParams()
    cs = ctx.correspondences
    require_min(cs)
    x, steps = _evolve(build_payoff_gtm(cs, params.gtm.lam), params.replicator)
    keep = np.flatnonzero(x >= params.gtm.t * x.max())
    return _finish(cs, x, keep, steps)


def one_to_one(cs: CorrespondenceSet, candidates: NDArray[np.intp], x: NDArray[np.float64]) -> NDArray[np.intp]:
    """Drop candidates that reuse a model or scene point already taken by a higher-x candidate."""
    order = candidates[np.argsort(-x[candidates], kind="stable")]
    seen_m: set[int] = set()
    seen_s: set[int] = set()
    kept = []
    for i in order:
        m, s = int(cs.model_idx[i]), int(cs.scene_idx[i])
        if m in seen_m or s in seen_s:
            continue
        seen_m.add(m)
        seen_s.add(s)
        kept.append(int(i))
    return np.sort(np.asarray(kept, dtype=np.intp))


def estimate_vgtm(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    params = params or EstimatorParams()
    cs = ctx.correspondences
    require_min(cs)
    pi = build_payoff_vgtm(cs, params.vgtm.gamma, ctx.mr, params.vgtm.cutoff)
    x, steps = _evolve(pi, params.replicator)
    keep = one_to_one(cs, np.flatnonzero(x > params.vgtm.support * x.max()), x)
    return _finish(cs, x, keep, steps)
