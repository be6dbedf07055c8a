"""Consistency-based estimators built on sampling or pairwise rigidity: RANSAC, GCC and GCM."""

from __future__ import annotations

import itertools
import math

import numpy as np
from numpy.typing import NDArray

from regbench.errors import DegenerateInput
from regbench.estimators.base import (
    EstimateResult,
    EstimationContext,
    correspondence_residuals,
    fit_ranked,
    fit_subset,
    pairwise_distances,
    require_min,
    triangle_area,
)
from regbench.estimators.params import EstimatorParams
from regbench.geometry import RigidTransform

_REDRAW_LIMIT = 100


def rigidity_gap(model_pts: NDArray[np.float64], scene_pts: NDArray[np.float64]) -> NDArray[np.float64]:
    """``|d(q_i, q_j) - d(p_i, p_j)|`` for every pair of correspondences."""
    return np.abs(pairwise_distances(scene_pts) - pairwise_distances(model_pts))


# ---------------------------------------------------------------- RANSAC


def _triples(ctx: EstimationContext, rng: np.random.Generator):
    """Yield sample triples; every triple once when that fits the budget."""
    n = len(ctx.correspondences)
    if math.comb(n, 3) <= ctx.max_iterations:
        yield from (np.array(t, dtype=np.intp) for t in itertools.combinations(range(n), 3))
        return
    for _ in range(ctx.max_iterations):
        yield rng.choice(n, size=3, replace=False)


def _non_degenerate(ctx: EstimationContext, idx: NDArray[np.intp]) -> bool:
    p = ctx.correspondences.model_pts[idx]
    return triangle_area(p[0], p[1], p[2]) >= 1e-9 * ctx.mr * ctx.mr


def ransac_hypotheses(ctx: EstimationContext, params: EstimatorParams):
    """Yield ``(sample, transform, consensus)`` for every evaluated sample."""
    cs = ctx.correspondences
    rng = ctx.rng()
    exhaustive = math.comb(len(cs), 3) <= ctx.max_iterations
    tol = params.ransac.t * ctx.mr
    for sample in _triples(ctx, rng):
        if not exhaustive:
            for _ in range(_REDRAW_LIMIT):
                if _non_degenerate(ctx, sample):
                    break
                sample = rng.choice(len(cs), size=3, replace=False)
        if not _non_degenerate(ctx, sample):
            continue
        try:
            t = fit_subset(cs, sample)
        except DegenerateInput:
            continue
        consensus = np.flatnonzero(correspondence_residuals(cs, t) < tol)
        yield sample, t, consensus


def estimate_ransac(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    params = params or EstimatorParams()
    cs = ctx.correspondences
    require_min(cs)
    best: tuple[NDArray[np.intp], RigidTransform, NDArray[np.intp]] | None = None
    iterations = 0
    for sample, t, consensus in ransac_hypotheses(ctx, params):
        iterations += 1
        if best is None or consensus.size > best[2].size:
            best = (sample, t, consensus)
    if best is None:
        return EstimateResult(RigidTransform.identity(), np.arange(0), iterations, 0, ("NoValidSample",))
    sample, t, consensus = best
    flags: tuple[str, ...] = ()
    if consensus.size < 3:
        flags = ("NoConsensus",)
    elif consensus.size > params.ransac.k:
        try:
            t = fit_subset(cs, consensus)
        except DegenerateInput:
            flags = ("DegenerateFit",)
    return EstimateResult(t, consensus, iterations, int(consensus.size), flags)


# ---------------------------------------------------------------- GCC


def gcc_groups(gap: NDArray[np.float64], eps: float, pairwise: bool = False) -> list[NDArray[np.intp]]:
    """One group per seed correspondence.

    Seed-only mode admits every correspondence compatible with the seed.
    Pairwise mode scans in index order and admits a correspondence only if it
    is compatible with every member admitted so far.
    """
    ok = gap < eps
    n = ok.shape[0]
    groups = []
    for i in range(n):
        if not pairwise:
            groups.append(np.flatnonzero(ok[i]))
            continue
        members = [i]
        for j in np.flatnonzero(ok[i]):
            if j != i and ok[j, members].all():
                members.append(int(j))
        groups.append(np.sort(np.asarray(members, dtype=np.intp)))
    return groups


def estimate_gcc(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    params = params or EstimatorParams()
    cs = ctx.correspondences
    require_min(cs)
    gap = rigidity_gap(cs.model_pts, cs.scene_pts)
    groups = gcc_groups(gap, params.gcc.epsilon * ctx.mr, params.gcc.pairwise)
    sizes = np.array([g.size for g in groups])
    seed = int(np.argmax(sizes))
    group = groups[seed]
    flags: tuple[str, ...] = ()
    others = np.array([j for j in np.argsort(gap[seed], kind="stable") if j != seed], dtype=np.intp)
    ranking = np.concatenate([[seed], others])
    if group.size < 3:
        flags = ("DegenerateGroup",)
        group = ranking[:3]
    t, used, fit_flags = fit_ranked(cs, group, ranking)
    return EstimateResult(t, used, len(cs), int(group.size), flags + fit_flags)


# ---------------------------------------------------------------- GCM


def gcm_schedule(params: EstimatorParams) -> list[tuple[float, float]]:
    """``(epsilon, delta)`` per pass, interpolated linearly from loose to severe."""
    p = params.gcm
    if p.passes == 1:
        return [(p.epsilon2, p.delta2)]
    out = []
    for k in range(p.passes):
        w = k / (p.passes - 1)
        out.append((p.epsilon1 + w * (p.epsilon2 - p.epsilon1), p.delta1 + w * (p.delta2 - p.delta1)))
    return out


def violation_fractions(gap: NDArray[np.float64], members: NDArray[np.intp], eps: float) -> NDArray[np.float64]:
    """Share of the other members each member is incompatible with."""
    sub = gap[np.ix_(members, members)] >= eps
    np.fill_diagonal(sub, False)
    return sub.sum(axis=1) / max(members.size - 1, 1)


def estimate_gcm(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    params = params or EstimatorParams()
    cs = ctx.correspondences
    require_min(cs)
    gap = rigidity_gap(cs.model_pts, cs.scene_pts)
    alive = np.arange(len(cs))
    flags: tuple[str, ...] = ()
    rounds = 0
    for eps_mr, delta in gcm_schedule(params):
        eps = eps_mr * ctx.mr
        # re-evaluate within a pass until nobody exceeds the current delta
        while not flags:
            rounds += 1
            frac = violation_fractions(gap, alive, eps)
            drop = frac > delta
            if not drop.any():
                break
            if alive.size - np.count_nonzero(drop) < 3:
                flags = ("AllRejected",)
                alive = alive[np.argsort(frac, kind="stable")[:3]]
            else:
                alive = alive[~drop]
    ranking = np.argsort(violation_fractions(gap, np.arange(len(cs)), params.gcm.epsilon2 * ctx.mr), kind="stable")
    t, used, fit_flags = fit_ranked(cs, np.sort(alive), ranking)
    return EstimateResult(t, used, rounds, int(alive.size), flags + fit_flags)
