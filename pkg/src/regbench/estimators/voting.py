"""Local and global voting (LGV) and the Otsu split it relies on."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from regbench.errors import DegenerateInput
from regbench.estimators.base import EstimateResult, EstimationContext, fit_ranked, require_min
from regbench.estimators.game import build_payoff_gtm
from regbench.estimators.params import EstimatorParams
from regbench.geometry import transforms_from_lrf_pairs

OTSU_BINS = 256


def otsu_histogram(scores: ArrayLike, bins: int = OTSU_BINS) -> NDArray[np.int64]:
    s = np.asarray(scores, dtype=np.float64)
    if np.any((s < 0) | (s > 1)) or not np.all(np.isfinite(s)):
        raise ValueError("scores must lie in [0, 1]")
    idx = np.minimum((s * bins).astype(np.int64), bins - 1)
    return np.bincount(idx, minlength=bins)


def otsu_threshold(scores: ArrayLike, bins: int = OTSU_BINS) -> float:
    """Bin boundary ``k / bins`` maximising the between-class variance.

    Scores at or above the returned value form the upper class. Variances are
    compared exactly in integer arithmetic and ties go to the lower boundary.
    When no boundary separates anything (all scores in one bin) the minimum
    score is returned so that every score is retained.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.size < 2:
        raise DegenerateInput("need at least two scores")
    hist = [int(c) for c in otsu_histogram(s, bins)]
    total_n = sum(hist)
    total_s = sum(i * c for i, c in enumerate(hist))
    best_k, best_num, best_den = None, 0, 1
    n0 = s0 = 0
    for k in range(1, bins):
        n0 += hist[k - 1]
        s0 += (k - 1) * hist[k - 1]
        n1, s1 = total_n - n0, total_s - s0
        if n0 == 0 or n1 == 0:
            continue
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_k, best_num, best_den = k, num, den
    if best_k is None:
        return float(s.min())
    return best_k / bins


@dataclass(frozen=True)
class LgvScores:
    """Intermediate quantities of the two voting stages."""

    local: NDArray[np.float64]  # S_L for every correspondence
    global_set: NDArray[np.intp]  # indices of C_G, best first
    final: NDArray[np.float64]  # S for each member of global_set, same order


def neighborhoods(model_pts: NDArray[np.float64], k: int) -> NDArray[np.intp]:
    """Indices of the ``k`` correspondences with the nearest model points, self excluded."""
    n = model_pts.shape[0]
    k = min(k, n - 1)
    if k < 1:
        return np.zeros((n, 0), dtype=np.intp)
    _, idx = cKDTree(model_pts).query(model_pts, k=k + 1)
    idx = np.atleast_2d(idx)
    out = np.empty((n, k), dtype=np.intp)
    for i in range(n):
        row = idx[i][idx[i] != i]
        out[i] = row[:k]
    return out


def lgv_scores(ctx: EstimationContext, params: EstimatorParams) -> LgvScores:
    cs = ctx.require_lrf()
    p = params.lgv
    u = build_payoff_gtm(cs, 1.0)
    nbr = neighborhoods(cs.model_pts, p.neighbors)
    local_votes = np.take_along_axis(u, nbr, axis=1) > p.zeta
    n_local = nbr.shape[1]
    local_count = local_votes.sum(axis=1)
    s_local = local_count / n_local if n_local else np.zeros(len(cs))

    order = np.argsort(-s_local, kind="stable")
    cg = order[: min(p.k, len(cs))]
    r, t = transforms_from_lrf_pairs(cs.model_pts[cg], cs.scene_pts[cg], cs.model_lrf[cg], cs.scene_lrf[cg])
    # moved[a, b] = T(c_a) applied to p_b, for a, b in C_G
    moved = np.einsum("aij,bj->abi", r, cs.model_pts[cg]) + t[:, None, :]
    u_g = np.linalg.norm(moved - cs.scene_pts[cg][None, :, :], axis=2)
    g_votes = (u[np.ix_(cg, cg)] > p.zeta) & (u_g < p.delta * ctx.mr)
    np.fill_diagonal(g_votes, False)
    final = (local_count[cg] + g_votes.sum(axis=1)) / (n_local + cg.size - 1)
    return LgvScores(s_local, cg, final)


def estimate_lgv(ctx: EstimationContext, params: EstimatorParams | None = None) -> EstimateResult:
    params = params or EstimatorParams()
    cs = ctx.correspondences
    require_min(cs)
    sc = lgv_scores(ctx, params)
    ranking = sc.global_set[np.argsort(-sc.final, kind="stable")]
    flags: tuple[str, ...] = ()
    if np.ptp(sc.final) == 0:
        keep = sc.global_set
    else:
        keep = sc.global_set[sc.final >= otsu_threshold(sc.final)]
    if keep.size < 3:
        flags = ("TooFewInliers",)
        keep = ranking[:3]
    t, used, fit_flags = fit_ranked(cs, np.sort(keep), np.concatenate([ranking, np.setdiff1d(np.arange(len(cs)), ranking)]))
    return EstimateResult(t, used, 1, float(sc.final.max()), flags + fit_flags)
