"""Hypothesise-and-verify estimators: SAC-IA, CCV, 1P-RANSAC, OSAC and 2SAC-GC."""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray

from regbench.errors import DegenerateInput
from regbench.estimators.base import (
    EstimateResult,
    EstimationContext,
    correspondence_residuals,
    fit_subset,
    pairwise_distances,
    require_min,
    triangle_area,
)
from regbench.estimators.params import EstimatorParams
from regbench.geometry import (
    RigidTransform,
    euler_zyx,
    transform_from_lrf_pair,
    transform_from_two_lra,
    transforms_from_lrf_pairs,
)
from regbench.verification import count_inliers, huber_metric, osac_score, residuals


def _supported(ctx: EstimationContext, t: RigidTransform) -> NDArray[np.intp]:
    """Correspondences that agree with ``t`` within the verification tolerance."""
    return np.flatnonzero(correspondence_residuals(ctx.correspondences, t) < ctx.verify_tol * ctx.mr)


class SpreadSampler:
    """Draws triples whose model points are pairwise farther apart than ``d_min``.

    If ``10 * max_iterations`` consecutive draws fail before any triple has been
    accepted, ``d_min`` is halved once; if that fails too the spacing filter is
    dropped and ``relaxed`` is set.
    """

    def __init__(self, ctx: EstimationContext, d_min_mr: float, rng: np.random.Generator):
        self.rng = rng
        self.n = len(ctx.correspondences)
        self.pts = ctx.correspondences.model_pts
        self.dist = pairwise_distances(self.pts)
        self.min_area = 1e-9 * ctx.mr * ctx.mr
        self.budget = 10 * ctx.max_iterations
        self.stages = [d_min_mr * ctx.mr, 0.5 * d_min_mr * ctx.mr, None]
        self.stage = 0
        self.accepted = 0
        self.relaxed = False

    def _ok(self, idx: NDArray[np.intp], d: float | None) -> bool:
        a, b, c = idx
        if d is not None and not (self.dist[a, b] > d and self.dist[a, c] > d and self.dist[b, c] > d):
            return False
        return triangle_area(self.pts[a], self.pts[b], self.pts[c]) >= self.min_area

    def draw(self) -> NDArray[np.intp] | None:
        while True:
            d = self.stages[self.stage]
            for _ in range(self.budget):
                idx = self.rng.choice(self.n, size=3, replace=False)
                if self._ok(idx, d):
                    self.accepted += 1
                    return idx
            if self.accepted or self.stage == len(self.stages) - 1:
                return None
            self.stage += 1
            self.relaxed = self.stages[self.stage] is None


def _sampled_search(ctx: EstimationContext, d_min_mr: float, score):
    """Run the shared 3-sample loop; ``score(t)`` returns a value to minimise."""
    sampler = SpreadSampler(ctx, d_min_mr, ctx.rng())
    best_t, best_v, iterations = None, math.inf, 0
    seen = []
    for _ in range(ctx.max_iterations):
        idx = sampler.draw()
        if idx is None:
            break
        iterations += 1
        try:
            t = fit_subset(ctx.correspondences, idx)
        except DegenerateInput:
            continue
        v = score(t)
        seen.append(t)
        if best_t is None or v < best_v:
            best_t, best_v = t, v
    flags = ("NoValidSample",) if sampler.relaxed or best_t is None else ()
    return best_t, best_v, iterations, seen, flags


def estimate_sacia(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    params = params or EstimatorParams()
    require_min(ctx.correspondences)
    model_sub, scene_sub = ctx.require_subsamples()
    t_e = params.sacia.t_e * ctx.mr

    def score(t):
        return huber_metric(residuals(model_sub, scene_sub, t), t_e)

    t, v, it, _, flags = _sampled_search(ctx, params.sacia.d_min, score)
    if t is None:
        return EstimateResult(RigidTransform.identity(), np.arange(0), it, None, flags)
    return EstimateResult(t, _supported(ctx, t), it, v, flags)


def estimate_osac(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    params = params or EstimatorParams()
    require_min(ctx.correspondences)
    model_sub, scene_sub = ctx.require_subsamples()
    tol = ctx.verify_tol * ctx.mr
    n1, n2 = len(model_sub), len(scene_sub)

    def score(t):
        return osac_score(residuals(model_sub, scene_sub, t), n1, n2, params.osac.delta, tol)[0]

    t, v, it, seen, flags = _sampled_search(ctx, params.osac.d_min, score)
    if t is None:
        return EstimateResult(RigidTransform.identity(), np.arange(0), it, None, flags)
    if math.isinf(v):
        # nothing passed the overlap test: fall back to the lowest mean residual
        means = [float(residuals(model_sub, scene_sub, s).mean()) for s in seen]
        t = seen[int(np.argmin(means))]
        flags = flags + ("AllInfinite",)
    return EstimateResult(t, _supported(ctx, t), it, v, flags)


def lrf_hypotheses(ctx: EstimationContext) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    cs = ctx.require_lrf()
    return transforms_from_lrf_pairs(cs.model_pts, cs.scene_pts, cs.model_lrf, cs.scene_lrf)


def ccv_clusters(rotations: NDArray[np.float64], translations: NDArray[np.float64], tau_a: float, tau_t: float) -> list[NDArray[np.intp]]:
    """Consistent set of each hypothesis: Euler-angle distance below ``tau_a`` and translation distance below ``tau_t``."""
    e = euler_zyx(rotations)
    de = pairwise_distances(e)
    dt = pairwise_distances(translations)
    close = (de < tau_a) & (dt < tau_t)
    return [np.flatnonzero(row) for row in close]


def estimate_ccv(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    params = params or EstimatorParams()
    cs = ctx.require_lrf()
    model_sub, scene_sub = ctx.require_subsamples()
    r, tr = lrf_hypotheses(ctx)
    clusters = ccv_clusters(r, tr, params.ccv.tau_a, params.ccv.tau_t * ctx.mr)
    tol = ctx.verify_tol * ctx.mr
    cache: dict[tuple[int, ...], tuple[RigidTransform, int]] = {}
    best = None
    for i, members in enumerate(clusters):
        key = tuple(int(j) for j in members)
        if key not in cache:
            t = RigidTransform(r[i], tr[i])
            if members.size >= 3:
                try:
                    t = fit_subset(cs, members)
                except DegenerateInput:
                    pass
            cache[key] = (t, int(count_inliers(model_sub, scene_sub, t, tol).value))
        t, count = cache[key]
        if best is None or count > best[1]:
            best = (t, count, members)
    t, count, members = best
    return EstimateResult(t, members, len(cs), count)


def one_point_counts(ctx: EstimationContext, order: NDArray[np.intp] | None = None) -> NDArray[np.int64]:
    """Inlier count of each single-correspondence hypothesis (all of them by default)."""
    model_sub, scene_sub = ctx.require_subsamples()
    r, tr = lrf_hypotheses(ctx)
    order = np.arange(len(r)) if order is None else order
    tol = ctx.verify_tol * ctx.mr
    return np.array([count_inliers(model_sub, scene_sub, RigidTransform(r[i], tr[i]), tol).value for i in order], dtype=np.int64)


def estimate_1p_ransac(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    cs = ctx.require_lrf()
    ctx.require_subsamples()
    n = len(cs)
    if n > ctx.max_iterations:
        order = np.sort(ctx.rng().choice(n, size=ctx.max_iterations, replace=False))
    else:
        order = np.arange(n)
    counts = one_point_counts(ctx, order)
    # strict improvement while traversing, so the first maximum wins
    win = order[int(np.argmax(counts))]
    hyp = transform_from_lrf_pair(cs.model_pts[win], cs.scene_pts[win], cs.model_lrf[win], cs.scene_lrf[win])
    support = _supported(ctx, hyp)
    t = hyp
    flags: tuple[str, ...] = ()
    if support.size >= 3:
        try:
            t = fit_subset(cs, support)
        except DegenerateInput:
            flags = ("DegenerateFit",)
    inliers = support if support.size else np.array([win])
    return EstimateResult(t, inliers, int(order.size), int(counts.max()), flags)


def two_point_consistent(
    p_i, p_j, q_i, q_j, a_pi, a_pj, a_qi, a_qj, sigma_d: float, sigma_a: float
) -> bool:
    """Distance and axis-angle agreement of two correspondences."""
    dd = abs(float(np.linalg.norm(p_i - p_j)) - float(np.linalg.norm(q_i - q_j)))
    ang_p = math.acos(min(1.0, max(-1.0, float(a_pi @ a_pj))))
    ang_q = math.acos(min(1.0, max(-1.0, float(a_qi @ a_qj))))
    return dd <= sigma_d and abs(ang_p - ang_q) < sigma_a


def estimate_2sac_gc(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    params = params or EstimatorParams()
    cs = ctx.correspondences
    require_min(cs, 2)
    a_p, a_q = ctx.require_lra()
    model_sub, scene_sub = ctx.require_subsamples()
    rng = ctx.rng()
    sigma_d = params.twosacgc.sigma_d * ctx.mr
    sigma_a = math.radians(params.twosacgc.sigma_a)
    tol = ctx.verify_tol * ctx.mr
    best = None
    rejected = []
    for _ in range(ctx.max_iterations):
        i, j = (int(v) for v in rng.choice(len(cs), size=2, replace=False))
        ok = two_point_consistent(
            cs.model_pts[i], cs.model_pts[j], cs.scene_pts[i], cs.scene_pts[j],
            a_p[i], a_p[j], a_q[i], a_q[j], sigma_d, sigma_a,
        )
        if not ok:
            rejected.append((i, j))
            continue
        try:
            t = transform_from_two_lra((cs.model_pts[i], cs.scene_pts[i]), (cs.model_pts[j], cs.scene_pts[j]), a_p[i], a_q[i])
        except DegenerateInput:
            continue
        count = int(count_inliers(model_sub, scene_sub, t, tol).value)
        if best is None or count > best[1]:
            best = (t, count)
    flags: tuple[str, ...] = ()
    if best is None:
        flags = ("NoValidPair",)
        for i, j in rejected:
            try:
                t = transform_from_two_lra((cs.model_pts[i], cs.scene_pts[i]), (cs.model_pts[j], cs.scene_pts[j]), a_p[i], a_q[i])
            except DegenerateInput:
                continue
            count = int(count_inliers(model_sub, scene_sub, t, tol).value)
            if best is None or count > best[1]:
                best = (t, count)
    if best is None:
        return EstimateResult(RigidTransform.identity(), np.arange(0), ctx.max_iterations, 0, flags + ("NoFit",))
    t, count = best
    return EstimateResult(t, _supported(ctx, t), ctx.max_iterations, count, flags)
