import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import correspondences_from, make_context, random_transform
from regbench.bench.synthetic import make_synthetic_pair
from regbench.cloud import PointCloud
from regbench.correspondence import CorrespondenceSet
from regbench.errors import DegenerateInput, MissingFrames
from regbench.estimators import (
    ESTIMATORS,
    METHODS,
    EstimationContext,
    EstimatorParams,
    build_payoff_gtm,
    build_payoff_vgtm,
    get_estimator,
    iterate_replicator,
    otsu_threshold,
    replicator_dynamics,
)
from regbench.estimators.base import fit_ranked
from regbench.estimators.consensus import (
    estimate_gcc,
    estimate_gcm,
    estimate_ransac,
    gcm_schedule,
    rigidity_gap,
    violation_fractions,
)
from regbench.estimators.game import estimate_gtm, estimate_vgtm, one_to_one
from regbench.estimators.hypothesis import (
    ccv_clusters,
    estimate_1p_ransac,
    estimate_2sac_gc,
    estimate_ccv,
    estimate_osac,
    lrf_hypotheses,
    one_point_counts,
    two_point_consistent,
)
from regbench.estimators.voting import estimate_lgv, lgv_scores, neighborhoods
from regbench.geometry import (
    RigidTransform,
    axis_angle_rotation,
    compose,
    euler_zyx,
    fit_rigid,
    is_rotation,
    random_rotation,
    transform_errors,
)
from regbench.verification import huber_metric, osac_metric, residuals

DEFAULTS = EstimatorParams()
_CONTEXTS: dict = {}


def make_context_cached(seed, pcc=1.0, n=50):
    """Contexts on the shared synthetic pair, built once per argument tuple."""
    key = (seed, pcc, n)
    if key not in _CONTEXTS:
        _CONTEXTS[key] = make_context(make_synthetic_pair(seed=1), n=n, pcc=pcc, seed=seed)
    return _CONTEXTS[key]


def cloud_of(cs, scene=False):
    return PointCloud(cs.scene_pts if scene else cs.model_pts)


def _mixed_set(rng, n, n_correct, gt, scale=50.0, offset=40.0):
    """``n_correct`` exact correspondences under ``gt``, the rest displaced far off."""
    p = rng.uniform(-scale, scale, size=(n, 3))
    q = gt.apply(p)
    bad = np.arange(n_correct, n)
    q[bad] += rng.normal(size=(bad.size, 3)) * offset
    return correspondences_from(p, q)


def _exact_frames(cs, gt, correct, rng):
    """Frames that reproduce ``gt`` exactly on ``correct`` and are random elsewhere."""
    n = len(cs)
    fp = np.stack([random_rotation(rng).T for _ in range(n)])
    fq = fp @ gt.rotation.T
    for i in np.setdiff1d(np.arange(n), correct):
        fq[i] = random_rotation(rng).T
    return cs.with_frames(fp, fq, fp[:, 2].copy(), fq[:, 2].copy())


# ---------------------------------------------------------------- RANSAC


def _brute_consensus(cs, tol):
    best = 0
    for tri in itertools.combinations(range(len(cs)), 3):
        idx = list(tri)
        try:
            t = fit_rigid(cs.model_pts[idx], cs.scene_pts[idx])
        except DegenerateInput:
            continue
        res = np.linalg.norm(t.apply(cs.model_pts) - cs.scene_pts, axis=1)
        best = max(best, int(np.count_nonzero(res < tol)))
    return best


@pytest.mark.parametrize("seed", range(5))
def test_ransac_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    gt = random_transform(rng)
    cs = _mixed_set(rng, 10, int(rng.integers(3, 8)), gt, scale=20.0, offset=5.0)
    ctx = EstimationContext(cs, 1.0, rng_seed=seed)
    res = estimate_ransac(ctx)
    assert res.score == _brute_consensus(cs, 3.0)
    assert res.iterations == math.comb(10, 3)


def test_ransac_all_inliers():
    rng = np.random.default_rng(10)
    gt = random_transform(rng)
    cs = _mixed_set(rng, 40, 40, gt)
    res = estimate_ransac(EstimationContext(cs, 1.0))
    assert res.inliers.size == 40 and res.flags == ()
    assert transform_errors(res.transform, gt, np.zeros(3), 1.0)[0] < 0.1


def test_ransac_without_consensus_is_flagged():
    rng = np.random.default_rng(11)
    p = rng.uniform(-50, 50, (3, 3))
    # three points whose pairwise distances disagree wildly: every triple is the sample itself
    q = p * np.array([3.0, 0.2, 1.0])
    res = estimate_ransac(EstimationContext(correspondences_from(p, q), 0.01))
    assert res.flags == ("NoConsensus",) and is_rotation(res.transform.rotation)


# ---------------------------------------------------------------- GCC


def _brute_gcc_group(cs, eps):
    n = len(cs)
    best = None
    for i in range(n):
        members = []
        for j in range(n):
            dp = np.linalg.norm(cs.model_pts[i] - cs.model_pts[j])
            dq = np.linalg.norm(cs.scene_pts[i] - cs.scene_pts[j])
            if abs(dq - dp) < eps:
                members.append(j)
        if best is None or len(members) > len(best):
            best = members
    return best


def test_gcc_handcrafted_group_of_five():
    rng = np.random.default_rng(3)
    gt = random_transform(rng)
    p = rng.uniform(-50, 50, (8, 3))
    q = gt.apply(p)
    # three outliers sent to widely separated corners
    q[5:] = gt.translation + np.array([[400.0, 0, 0], [0, 900, 0], [0, 0, -1600]])
    cs = correspondences_from(p, q)
    assert _brute_gcc_group(cs, 5.0) == [0, 1, 2, 3, 4]
    res = estimate_gcc(EstimationContext(cs, 1.0))
    assert res.inliers.tolist() == [0, 1, 2, 3, 4] and res.score == 5


@pytest.mark.parametrize("seed", range(5))
def test_gcc_members_satisfy_the_seed_constraint(seed):
    ctx = make_context_cached(seed, pcc=0.3)
    res = estimate_gcc(ctx)
    cs = ctx.correspondences
    gap = rigidity_gap(cs.model_pts, cs.scene_pts)
    want = _brute_gcc_group(cs, DEFAULTS.gcc.epsilon * ctx.mr)
    if res.flags == ():
        assert res.inliers.tolist() == want
        seed_idx = next(i for i in range(len(cs)) if np.flatnonzero(gap[i] < DEFAULTS.gcc.epsilon * ctx.mr).tolist() == want)
        assert np.all(gap[seed_idx, res.inliers] < DEFAULTS.gcc.epsilon * ctx.mr)


def test_gcc_degenerate_group_falls_back():
    rng = np.random.default_rng(4)
    p = rng.uniform(-50, 50, (6, 3))
    q = rng.uniform(-500, 500, (6, 3))
    res = estimate_gcc(EstimationContext(correspondences_from(p, q), 0.001))
    assert "DegenerateGroup" in res.flags and res.inliers.size == 3


# ---------------------------------------------------------------- GCM


def test_gcm_schedule_interpolates_endpoints():
    sched = gcm_schedule(DEFAULTS)
    assert len(sched) == 5
    assert sched[0] == (8.0, 0.7) and sched[-1] == pytest.approx((2.0, 0.3))
    eps = [e for e, _ in sched]
    assert eps == sorted(eps, reverse=True)


def test_gcm_keeps_everything_on_clean_data():
    rng = np.random.default_rng(5)
    gt = random_transform(rng)
    cs = _mixed_set(rng, 30, 30, gt)
    res = estimate_gcm(EstimationContext(cs, 1.0))
    assert res.inliers.size == 30 and res.flags == ()


def test_gcm_removes_gross_outlier_in_first_pass():
    rng = np.random.default_rng(6)
    gt = random_transform(rng)
    p = rng.uniform(-50, 50, (20, 3))
    q = gt.apply(p)
    q[7] += [500.0, 0, 0]
    cs = correspondences_from(p, q)
    gap = rigidity_gap(p, q)
    eps1 = DEFAULTS.gcm.epsilon1
    frac = violation_fractions(gap, np.arange(20), eps1)
    # direct counting of the first-pass test
    direct = [sum(1 for j in range(20) if j != i and gap[i, j] >= eps1) / 19 for i in range(20)]
    assert np.allclose(frac, direct)
    assert frac[7] > DEFAULTS.gcm.delta1 and np.all(np.delete(frac, 7) <= DEFAULTS.gcm.delta1)
    res = estimate_gcm(EstimationContext(cs, 1.0))
    assert 7 not in res.inliers and res.inliers.size == 19


@pytest.mark.parametrize("seed", range(6))
def test_gcm_survivors_pass_the_final_threshold(seed):
    ctx = make_context_cached(seed, pcc=0.2 + 0.1 * seed)
    res = estimate_gcm(ctx)
    if "AllRejected" in res.flags or "DegenerateFit" in res.flags:
        return
    cs = ctx.correspondences
    gap = rigidity_gap(cs.model_pts, cs.scene_pts)
    frac = violation_fractions(gap, res.inliers, DEFAULTS.gcm.epsilon2 * ctx.mr)
    assert np.all(frac <= DEFAULTS.gcm.delta2)


def test_gcm_all_rejected_is_flagged():
    rng = np.random.default_rng(7)
    p = rng.uniform(-50, 50, (8, 3))
    q = rng.uniform(-500, 500, (8, 3))
    res = estimate_gcm(EstimationContext(correspondences_from(p, q), 0.001))
    assert "AllRejected" in res.flags and res.inliers.size == 3


# ---------------------------------------------------------------- payoff matrices


def _direct_gtm(cs, lam):
    n = len(cs)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dp = np.linalg.norm(cs.model_pts[i] - cs.model_pts[j])
            dq = np.linalg.norm(cs.scene_pts[i] - cs.scene_pts[j])
            v = 0.0 if max(dp, dq) == 0 else (min(dp, dq) / max(dp, dq)) ** lam
            out[i, j] = out[j, i] = v
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 2.0]))
def test_gtm_payoff_matches_direct_evaluation(seed, lam):
    rng = np.random.default_rng(seed)
    cs = correspondences_from(rng.normal(size=(20, 3)), rng.normal(size=(20, 3)))
    pi = build_payoff_gtm(cs, lam)
    assert np.allclose(pi, _direct_gtm(cs, lam), rtol=1e-12, atol=1e-15)
    assert np.array_equal(pi, pi.T)
    assert np.all(np.diag(pi) == 0) and pi.min() >= 0 and pi.max() <= 1


def test_gtm_payoff_analytic_values():
    p = np.array([[0.0, 0, 0], [2, 0, 0], [0, 5, 0]])
    q = np.array([[0.0, 0, 0], [1, 0, 0], [0, 5, 0]])
    pi = build_payoff_gtm(correspondences_from(p, q), 1.0)
    assert pi[0, 1] == 0.5 and pi[0, 2] == 1.0
    coincident = correspondences_from(np.zeros((2, 3)), np.zeros((2, 3)))
    assert build_payoff_gtm(coincident)[0, 1] == 0.0
    with pytest.raises(ValueError):
        build_payoff_gtm(coincident, 0.0)


def test_vgtm_payoff_values():
    p = np.array([[0.0, 0, 0], [10, 0, 0], [0, 10, 0], [0, 0, 10]])
    q = p.copy()
    q[2] = [0, 12, 0]  # 10 vs 12: ratio 5/6 times exp(-2)
    q[3] = [0, 0, 100]  # ratio 0.1 times exp(-90): cut
    pi = build_payoff_vgtm(correspondences_from(p, q), 1.0, 1.0)
    assert pi[0, 1] == 1.0
    assert pi[0, 2] == pytest.approx(10 / 12 * math.exp(-2.0))
    assert pi[0, 3] == 0.0
    assert np.array_equal(pi, pi.T) and np.all(np.diag(pi) == 0)


def test_vgtm_payoff_zeroes_shared_points():
    p = np.array([[0.0, 0, 0], [0, 0, 0], [5, 0, 0]])
    q = np.array([[1.0, 0, 0], [2, 0, 0], [6, 0, 0]])
    pi = build_payoff_vgtm(correspondences_from(p, q), 1.0, 1.0)
    assert pi[0, 1] == 0.0
    # raw value just under the cut
    p2 = np.array([[0.0, 0, 0], [10, 0, 0]])
    gap = -math.log(0.05)
    q2 = np.array([[0.0, 0, 0], [10 + gap, 0, 0]])
    raw = 10 / (10 + gap) * 0.05
    assert raw < 0.1
    assert build_payoff_vgtm(correspondences_from(p2, q2), 1.0, 1.0)[0, 1] == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_vgtm_payoff_bounds(seed):
    rng = np.random.default_rng(seed)
    cs = correspondences_from(rng.normal(size=(15, 3)) * 5, rng.normal(size=(15, 3)) * 5)
    pi = build_payoff_vgtm(cs, 1.0, 0.5)
    assert np.array_equal(pi, pi.T) and np.all(np.diag(pi) == 0)
    assert pi.min() >= 0 and pi.max() <= 1
    assert np.all((pi == 0) | (pi >= 0.1))


# ---------------------------------------------------------------- replicator dynamics


def test_replicator_uniform_is_fixed_point():
    pi = np.ones((6, 6)) - np.eye(6)
    x = replicator_dynamics(pi)
    assert np.allclose(x, 1 / 6, atol=1e-15)


def test_replicator_isolated_strategy_dies_out():
    pi = np.zeros((4, 4))
    pi[:3, :3] = 1 - np.eye(3)
    x = replicator_dynamics(pi)
    assert x[3] < 1e-6
    assert np.allclose(x[:3], 1 / 3, atol=1e-6)


def test_replicator_zero_payoff_returns_input():
    x0 = np.array([0.2, 0.3, 0.5])
    assert np.array_equal(replicator_dynamics(np.zeros((3, 3)), x0), x0)
    with pytest.raises(ValueError):
        next(iterate_replicator(np.ones((2, 2)), [0.7, 0.7]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 20))
def test_replicator_stays_on_simplex_and_payoff_grows(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, (n, n))
    pi = (a + a.T) / 2
    x = np.full(n, 1 / n)
    prev = x @ pi @ x
    for x in iterate_replicator(pi, x, max_steps=200):
        assert abs(x.sum() - 1) <= 1e-12 and x.min() >= 0
        cur = x @ pi @ x
        assert cur >= prev - 1e-12
        prev = cur


# ---------------------------------------------------------------- GTM / V-GTM


def test_gtm_keeps_all_on_clean_data():
    rng = np.random.default_rng(12)
    gt = random_transform(rng)
    cs = _mixed_set(rng, 40, 40, gt)
    res = estimate_gtm(EstimationContext(cs, 1.0))
    assert res.inliers.size == 40
    assert transform_errors(res.transform, gt, np.zeros(3), 1.0)[0] < 0.1


@pytest.mark.parametrize("seed", range(5))
def test_gtm_survivors_are_more_compatible(seed):
    ctx = make_context_cached(seed, pcc=0.3)
    res = estimate_gtm(ctx)
    pi = build_payoff_gtm(ctx.correspondences, 1.0)
    kept = res.inliers
    n, k = len(pi), kept.size
    mean_all = pi.sum() / (n * (n - 1))
    mean_kept = pi[np.ix_(kept, kept)].sum() / (k * (k - 1))
    assert mean_kept >= mean_all


def test_one_to_one_prefers_higher_population():
    pts = np.zeros((4, 3))
    cs = CorrespondenceSet([0, 0, 1, 2], [5, 6, 5, 7], pts, pts)
    x = np.array([0.1, 0.4, 0.3, 0.2])
    # 1 beats 0 on model point 0; 2 then loses scene point 5 to nobody and is kept
    assert one_to_one(cs, np.arange(4), x).tolist() == [1, 2, 3]


@pytest.mark.parametrize("seed", range(5))
def test_vgtm_kept_set_is_one_to_one(seed):
    rng = np.random.default_rng(seed)
    gt = random_transform(rng)
    cs = _mixed_set(rng, 60, 30, gt, offset=3.0)
    # force shared model and scene points
    midx = cs.model_idx.copy()
    sidx = cs.scene_idx.copy()
    midx[30:40] = midx[:10]
    sidx[40:50] = sidx[10:20]
    cs = CorrespondenceSet(midx, sidx, cs.model_pts[np.r_[0:30, 0:10, 40:60]], cs.scene_pts[np.r_[0:40, 10:20, 50:60]])
    res = estimate_vgtm(EstimationContext(cs, 1.0))
    if "TooFewInliers" not in res.flags:
        assert np.unique(cs.model_idx[res.inliers]).size == res.inliers.size
        assert np.unique(cs.scene_idx[res.inliers]).size == res.inliers.size


# ---------------------------------------------------------------- Otsu


def _otsu_oracle(scores, bins=256):
    hist = [0] * bins
    for s in scores:
        hist[min(int(s * bins), bins - 1)] += 1
    best, best_k = None, None
    n = len(scores)
    for k in range(1, bins):
        lo = [(i, c) for i, c in enumerate(hist[:k]) if c]
        hi = [(i, c) for i, c in enumerate(hist[k:], start=k) if c]
        n0, n1 = sum(c for _, c in lo), sum(c for _, c in hi)
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(sum(i * c for i, c in lo), n0)
        mu1 = Fraction(sum(i * c for i, c in hi), n1)
        var = Fraction(n0 * n1, n * n) * (mu0 - mu1) ** 2
        if best is None or var > best:
            best, best_k = var, k
    return None if best_k is None else best_k / bins


@pytest.mark.parametrize("seed", range(10))
def test_otsu_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    scores = rng.beta(0.5, 0.5, size=int(rng.integers(2, 300)))
    want = _otsu_oracle(scores)
    got = otsu_threshold(scores)
    assert got == (want if want is not None else scores.min())


def test_otsu_bimodal_and_degenerate():
    t = otsu_threshold([0.1] * 10 + [0.9] * 10)
    assert 0.1 < t <= 0.9
    assert otsu_threshold([0.4] * 5) == 0.4
    with pytest.raises(DegenerateInput):
        otsu_threshold([0.5])
    with pytest.raises(ValueError):
        otsu_threshold([0.5, 1.5])


# ---------------------------------------------------------------- LGV


def test_neighborhoods_exclude_self():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0], [7, 0, 0]])
    nbr = neighborhoods(pts, 2)
    assert nbr.tolist() == [[1, 2], [0, 2], [1, 0], [2, 1]]
    assert all(i not in row for i, row in enumerate(nbr))


def test_lgv_local_score_is_vote_fraction():
    rng = np.random.default_rng(20)
    gt = random_transform(rng)
    p = rng.uniform(-50, 50, (51, 3))
    q = gt.apply(p)
    # ten outliers whose scene points are thrown far away
    q[41:] = gt.apply(p[41:]) + rng.normal(size=(10, 3)) * 1000
    cs = _exact_frames(correspondences_from(p, q), gt, np.arange(41), rng)
    sc = lgv_scores(EstimationContext(cs, 1.0), DEFAULTS)
    assert sc.local[0] == pytest.approx(0.8)


def test_lgv_drops_outliers_below_otsu_split():
    rng = np.random.default_rng(21)
    gt = random_transform(rng)
    p = rng.uniform(-50, 50, (20, 3))
    q = gt.apply(p)
    q[15:] += rng.normal(size=(5, 3)) * 60
    cs = _exact_frames(correspondences_from(p, q), gt, np.arange(15), rng)
    ctx = EstimationContext(cs, 1.0)
    sc = lgv_scores(ctx, DEFAULTS)
    final = dict(zip(sc.global_set.tolist(), sc.final.tolist()))
    thr = otsu_threshold(sc.final)
    assert all(final[i] < thr for i in range(15, 20))
    assert all(final[i] >= thr for i in range(15))
    res = estimate_lgv(ctx)
    assert res.inliers.tolist() == list(range(15))


def test_lgv_clean_set_scores_one():
    rng = np.random.default_rng(22)
    gt = random_transform(rng)
    cs = _exact_frames(_mixed_set(rng, 30, 30, gt), gt, np.arange(30), rng)
    sc = lgv_scores(EstimationContext(cs, 1.0), DEFAULTS)
    assert np.allclose(sc.final, 1.0)
    assert estimate_lgv(EstimationContext(cs, 1.0)).inliers.size == 30


# ---------------------------------------------------------------- SAC-IA / OSAC


def test_sacia_metric_prefers_ground_truth(pair, mr):
    ctx = make_context_cached(0)
    ms, ss = ctx.model_sub, ctx.scene_sub
    centre = pair.gt.apply(pair.model.centroid)
    r = axis_angle_rotation([0.3, -1.0, 0.5], math.radians(20))
    bad = compose(RigidTransform(r, centre - r @ centre), pair.gt)
    t_e = DEFAULTS.sacia.t_e * mr
    assert huber_metric(residuals(ms, ss, pair.gt), t_e) < huber_metric(residuals(ms, ss, bad), t_e)


def test_osac_finite_at_ground_truth_and_flags_all_infinite(pair, mr):
    ctx = make_context_cached(0)
    full = pair.model.subset(np.arange(0, len(pair.model), 50))
    assert osac_metric(full, pair.model.transformed(pair.gt), pair.gt, 0.3, 2 * mr) == pytest.approx(0.0)
    far = compose(RigidTransform(np.eye(3), [100 * mr, 0, 0]), pair.gt)
    assert math.isinf(osac_metric(ctx.model_sub, ctx.scene_sub, far, 0.3, 2 * mr))
    moved = ctx.scene_sub.transformed(RigidTransform(np.eye(3), [1e4, 0, 0]))
    lost = EstimationContext(ctx.correspondences, mr, ctx.model_sub, moved, max_iterations=20)
    res = estimate_osac(lost)
    assert "AllInfinite" in res.flags and math.isinf(res.score)


# ---------------------------------------------------------------- CCV


def test_ccv_clusters_match_brute_force_and_contain_correct_block():
    rng = np.random.default_rng(30)
    gt = random_transform(rng)
    cs = _mixed_set(rng, 20, 15, gt)
    cs = _exact_frames(cs, gt, np.arange(15), rng)
    # small frame noise on the correct ones keeps them near, not identical
    jitter = np.stack([axis_angle_rotation(rng.normal(size=3), math.radians(0.5)) for _ in range(20)])
    fq = cs.scene_lrf.copy()
    fq[:15] = np.einsum("nij,njk->nik", fq[:15], jitter[:15])
    cs = cs.with_frames(scene_lrf=fq)
    ctx = EstimationContext(cs, 1.0, cloud_of(cs), cloud_of(cs, scene=True))
    r, t = lrf_hypotheses(ctx)
    clusters = ccv_clusters(r, t, DEFAULTS.ccv.tau_a, DEFAULTS.ccv.tau_t)
    e = euler_zyx(r)
    for i in range(20):
        brute = [j for j in range(20) if np.linalg.norm(e[i] - e[j]) < 0.2 and np.linalg.norm(t[i] - t[j]) < 10.0]
        assert clusters[i].tolist() == brute
    res = estimate_ccv(ctx)
    assert set(range(15)) <= set(res.inliers.tolist())


# ---------------------------------------------------------------- 1P-RANSAC


def test_one_point_counts_match_brute_force(mr):
    ctx = make_context_cached(2, pcc=0.4)
    counts = one_point_counts(ctx)
    r, t = lrf_hypotheses(ctx)
    ms, ss = ctx.model_sub.points, ctx.scene_sub.points
    for i in range(0, len(r), 7):
        mapped = ms @ r[i].T + t[i]
        d = np.sqrt(((mapped[:, None, :] - ss[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
        assert counts[i] == np.count_nonzero(d < ctx.verify_tol * mr)
    res = estimate_1p_ransac(ctx)
    assert res.score == counts.max()
    win = int(np.argmax(counts))
    hyp = RigidTransform(r[win], t[win])
    support = np.flatnonzero(np.linalg.norm(hyp.apply(ctx.correspondences.model_pts) - ctx.correspondences.scene_pts, axis=1) < 2 * mr)
    assert res.inliers.tolist() == support.tolist()


def test_one_point_exact_overlap_counts_everything():
    rng = np.random.default_rng(31)
    gt = random_transform(rng)
    cs = _exact_frames(_mixed_set(rng, 5, 5, gt), gt, np.arange(5), rng)
    model = PointCloud(rng.uniform(-50, 50, (100, 3)))
    ctx = EstimationContext(cs, 1.0, model, model.transformed(gt))
    assert np.all(one_point_counts(ctx) == 100)


# ---------------------------------------------------------------- 2SAC-GC


def test_two_point_constraint_matches_direct_formula():
    rng = np.random.default_rng(40)
    sigma_d, sigma_a = 6.0, math.radians(6.0)
    for _ in range(1000):
        p_i, p_j = rng.normal(size=3) * 20, rng.normal(size=3) * 20
        q_i, q_j = p_i + rng.normal(size=3) * 3, p_j + rng.normal(size=3) * 3
        a = rng.normal(size=(4, 3))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        a[2] = a[0] + rng.normal(size=3) * 0.3
        a[3] = a[1] + rng.normal(size=3) * 0.3
        a[2:] /= np.linalg.norm(a[2:], axis=1, keepdims=True)
        dd = abs(np.linalg.norm(p_i - p_j) - np.linalg.norm(q_i - q_j))
        ap = math.acos(np.clip(a[0] @ a[1], -1, 1))
        aq = math.acos(np.clip(a[2] @ a[3], -1, 1))
        want = dd <= sigma_d and abs(ap - aq) < sigma_a
        assert two_point_consistent(p_i, p_j, q_i, q_j, a[0], a[1], a[2], a[3], sigma_d, sigma_a) == want


def test_two_point_constraint_rejects_distance_gap():
    z = np.array([0.0, 0, 1])
    p_i, p_j = np.zeros(3), np.array([30.0, 0, 0])
    q_i, q_j = np.zeros(3), np.array([40.0, 0, 0])
    assert not two_point_consistent(p_i, p_j, q_i, q_j, z, z, z, z, 6.0, math.radians(6))
    assert two_point_consistent(p_i, p_j, q_i, q_i + [31.0, 0, 0], z, z, z, z, 6.0, math.radians(6))


def test_2sac_flags_when_nothing_passes():
    ctx = make_context_cached(0)
    cs = ctx.correspondences.subset([0, 1])
    # parallel model axes against perpendicular scene axes: the angle test always fails
    lra = np.array([[0.0, 0, 1], [0, 0, 1]])
    crossed = CorrespondenceSet(cs.model_idx, cs.scene_idx, cs.model_pts, cs.scene_pts, model_lra=lra, scene_lra=np.eye(3)[:2])
    lost = EstimationContext(crossed, ctx.mr, ctx.model_sub, ctx.scene_sub, max_iterations=10)
    res = estimate_2sac_gc(lost)
    assert "NoValidPair" in res.flags


# ---------------------------------------------------------------- all methods


@pytest.mark.parametrize("method", list(ESTIMATORS))
def test_every_method_recovers_clean_set(method, pair, mr):
    for seed in range(3):
        ctx = make_context_cached(seed)
        res = ESTIMATORS[method](ctx, DEFAULTS)
        assert is_rotation(res.transform.rotation, 1e-9)
        er, et = transform_errors(res.transform, pair.gt, pair.model.centroid, mr)
        assert er < 1.0 and et < 1.0, (method, seed, er, et)


@pytest.mark.parametrize("method", list(ESTIMATORS))
def test_every_method_is_deterministic(method):
    ctx = make_context_cached(4, pcc=0.3)
    a = ESTIMATORS[method](ctx, DEFAULTS)
    b = ESTIMATORS[method](ctx, DEFAULTS)
    assert a.same_as(b)
    assert np.all(a.inliers < len(ctx.correspondences))
    assert np.unique(a.inliers).size == a.inliers.size


@pytest.mark.parametrize("method", [m for m, info in METHODS.items() if info.needs_lrf or info.needs_lra])
def test_frame_methods_need_frames(method, pair):
    ctx = make_context(pair, n=20, frames=False)
    with pytest.raises(MissingFrames):
        ESTIMATORS[method](ctx, DEFAULTS)


# CCV and 1P-RANSAC work from a single correspondence, 2SAC-GC from two
@pytest.mark.parametrize("method", [m for m in ESTIMATORS if m not in ("CCV", "1P-RANSAC", "2SAC-GC")])
def test_too_few_correspondences(method, pair):
    ctx = make_context(pair, n=2)
    with pytest.raises(DegenerateInput):
        ESTIMATORS[method](ctx, DEFAULTS)


def test_registry_and_params():
    assert list(ESTIMATORS) == ["RANSAC", "GCC", "GCM", "GTM", "V-GTM", "LGV", "SAC-IA", "CCV", "1P-RANSAC", "OSAC", "2SAC-GC"]
    with pytest.raises(KeyError):
        get_estimator("ICP")
    flat = DEFAULTS.flat()
    assert flat["gtm.lambda"] == 1.0 and flat["2sacgc.sigma_a"] == 6.0
    assert DEFAULTS.with_overrides(flat).flat() == flat
    tuned = DEFAULTS.with_overrides({"gtm.lambda": "2", "lgv.k": "100", "gcc.pairwise": "true"})
    assert tuned.gtm.lam == 2.0 and tuned.lgv.k == 100 and tuned.gcc.pairwise is True
    with pytest.raises(KeyError):
        DEFAULTS.with_overrides({"nope.x": 1})
    with pytest.raises(ValueError):
        DEFAULTS.with_overrides({"gcm.delta1": 1.5})
    with pytest.raises(ValueError):
        EstimationContext(CorrespondenceSet([], [], np.zeros((0, 3)), np.zeros((0, 3))), 0.0)


def test_fit_ranked_grows_past_degenerate_keep():
    p = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0], [0, 0, 1]])
    cs = correspondences_from(p, p)
    t, used, flags = fit_ranked(cs, np.array([0, 1, 2]), np.array([0, 1, 2, 3, 4]))
    assert flags == ("DegenerateFit",) and used.tolist() == [0, 1, 2, 3]
    line = correspondences_from(p[:3], p[:3])
    t, used, flags = fit_ranked(line, np.array([0]), np.array([0, 1, 2]))
    assert "NoFit" in flags and np.array_equal(t.rotation, np.eye(3))
