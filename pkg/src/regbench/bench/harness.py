"""Running estimators on scan pairs and synthetic sweeps, and aggregating the outcomes."""

from __future__ import annotations

import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from regbench.bench.config import BenchConfig, PairSpec
from regbench.bench.synthetic import attach_synthetic_frames
from regbench.cloud import PointCloud, load_features, load_ply, overlap_ratio, subsample
from regbench.correspondence import CorrespondenceSet, match_features, select_ratio, synthesize_correspondences
from regbench.errors import RegBenchError
from regbench.estimators import METHODS, EstimationContext
from regbench.geometry import RigidTransform, load_transform, transform_errors
from regbench.lrf import load_lra_file, load_lrf_file
from regbench.refine import icp

logger = logging.getLogger(__name__)

SUCCESS_LIMIT = 5.0


def judge(eps_r: float, eps_t: float) -> bool:
    """A registration is correct when both errors are strictly below 5 (degrees and mr)."""
    if eps_r < 0 or eps_t < 0:
        raise ValueError("errors must be nonnegative")
    return eps_r < SUCCESS_LIMIT and eps_t < SUCCESS_LIMIT


def derive_seed(master: int, index: int) -> int:
    """Independent 63-bit seed for item ``index`` of a run started from ``master``."""
    state = np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)[0]
    return int(state) >> 1


def resolve_methods(methods: str | Sequence[str] | None) -> list[str]:
    if methods is None or methods == "all" or list(methods) == ["all"]:
        return list(METHODS)
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise KeyError(f"unknown method(s) {unknown}; choose from {', '.join(METHODS)}")
    return list(methods)


@dataclass(frozen=True)
class PairResult:
    method: str
    pair_id: str
    eps_r: float
    eps_t: float
    success: bool
    seconds: float
    iterations: int
    seed: int
    group: str = ""
    error: str = ""

    def __post_init__(self) -> None:
        if not math.isnan(self.eps_r) and not 0 <= self.eps_r <= 180:
            raise ValueError("eps_r must lie in [0, 180]")
        if not math.isnan(self.eps_t) and self.eps_t < 0:
            raise ValueError("eps_t must be nonnegative")


@dataclass
class SuiteReport:
    results: list[PairResult] = field(default_factory=list)
    metadata: dict[str, object] = field(default_factory=dict)

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.results))

    @property
    def groups(self) -> list[str]:
        return sorted({r.group for r in self.results})

    def success_by_method(self) -> dict[str, float]:
        return _percentages(self.results, lambda r: r.method)

    def success_by_group(self) -> dict[tuple[str, str], float]:
        return _percentages(self.results, lambda r: (r.method, r.group))

    def mean_seconds(self) -> dict[str, float]:
        acc: dict[str, list[float]] = defaultdict(list)
        for r in self.results:
            if not r.error:
                acc[r.method].append(r.seconds)
        return {m: sum(v) / len(v) for m, v in acc.items() if v}

    def summary_rows(self) -> list[dict[str, object]]:
        """One row per (method, group) plus an overall row per method (group ``*``)."""
        rows = []
        cells: dict[tuple[str, str], list[PairResult]] = defaultdict(list)
        for r in self.results:
            cells[(r.method, r.group)].append(r)
            cells[(r.method, "*")].append(r)
        for (method, group), rs in sorted(cells.items(), key=lambda kv: (self.methods.index(kv[0][0]), kv[0][1])):
            wins = sum(r.success for r in rs)
            timed = [r.seconds for r in rs if not r.error]
            rows.append(
                {
                    "method": method,
                    "group": group,
                    "runs": len(rs),
                    "successes": wins,
                    "success_pct": 100.0 * wins / len(rs),
                    "mean_seconds": sum(timed) / len(timed) if timed else float("nan"),
                }
            )
        return rows


def _percentages(results: Iterable[PairResult], key) -> dict:
    runs: dict = defaultdict(int)
    wins: dict = defaultdict(int)
    for r in results:
        runs[key(r)] += 1
        wins[key(r)] += r.success
    return {k: 100.0 * wins[k] / runs[k] for k in runs}


def overlap_bin(overlap: float) -> str:
    lo = min(int(overlap * 10), 9) / 10
    return f"overlap:{lo:.1f}-{lo + 0.1:.1f}"


def _failed(method: str, pair_id: str, seed: int, group: str, exc: BaseException) -> PairResult:
    return PairResult(method, pair_id, math.nan, math.nan, False, 0.0, 0, seed, group, type(exc).__name__)


def run_estimator(
    method: str,
    cs: CorrespondenceSet,
    model: PointCloud,
    scene: PointCloud,
    gt: RigidTransform,
    mr: float,
    model_sub: PointCloud,
    scene_sub: PointCloud,
    config: BenchConfig,
    seed: int,
    pair_id: str,
    group: str = "",
    model_centroid: np.ndarray | None = None,
) -> PairResult:
    """Run one method on a prepared correspondence set and judge it.

    Only the estimator call is timed; ICP (when enabled) and error evaluation
    are excluded.
    """
    info = METHODS[method]
    ctx = EstimationContext(
        cs, mr, model_sub, scene_sub, rng_seed=seed, max_iterations=config.iterations, verify_tol=config.verify_tol
    )
    try:
        start = time.perf_counter()
        est = info.fn(ctx, config.params)
        seconds = time.perf_counter() - start
        t = est.transform
        if config.icp:
            icp_model = subsample(model, config.icp_model_points, derive_seed(seed, 4))
            t = icp(icp_model, scene, t, mr=mr).transform
    except (RegBenchError, ValueError) as exc:
        logger.info("%s on %s failed: %s", method, pair_id, exc)
        return _failed(method, pair_id, seed, group, exc)
    m_c = model.centroid if model_centroid is None else model_centroid
    eps_r, eps_t = transform_errors(t, gt, m_c, mr)
    return PairResult(method, pair_id, eps_r, eps_t, judge(eps_r, eps_t), seconds, est.iterations, seed, group)


@dataclass(frozen=True, eq=False)
class PreparedPair:
    spec: PairSpec
    model: PointCloud
    scene: PointCloud
    gt: RigidTransform
    mr: float
    overlap: float
    raw: CorrespondenceSet | None


def prepare_pair(spec: PairSpec, config: BenchConfig) -> PreparedPair:
    """Load clouds, ground truth, keypoints and frames, and match descriptors."""
    model = load_ply(spec.model)
    scene = load_ply(spec.scene)
    gt = load_transform(spec.gt)
    mr = scene.mesh_resolution
    overlap = spec.overlap
    if overlap is None:
        overlap = overlap_ratio(model, scene, gt, config.overlap_tol * mr)
    raw = None
    if spec.features_model is not None and spec.features_scene is not None:
        mk = load_features(spec.features_model, model)
        sk = load_features(spec.features_scene, scene)
        if spec.lrf_model is not None and spec.lrf_scene is not None:
            mk = load_lrf_file(spec.lrf_model, mk)
            sk = load_lrf_file(spec.lrf_scene, sk)
        if spec.lra_model is not None and spec.lra_scene is not None:
            mk = load_lra_file(spec.lra_model, mk)
            sk = load_lra_file(spec.lra_scene, sk)
        raw = match_features(mk, sk)
    return PreparedPair(spec, model, scene, gt, mr, overlap, raw)


def run_prepared(prep: PreparedPair, method: str, config: BenchConfig, seed: int, group: str = "") -> PairResult:
    pid = prep.spec.pair_id
    if prep.raw is None:
        return PairResult(method, pid, math.nan, math.nan, False, 0.0, 0, seed, group, "MissingFeatures")
    k = config.inputs.get(method, len(prep.raw))
    try:
        cs = select_ratio(prep.raw, k)
    except (RegBenchError, ValueError) as exc:
        return _failed(method, pid, seed, group, exc)
    model_sub = subsample(prep.model, config.model_points, derive_seed(seed, 1))
    scene_sub = subsample(prep.scene, config.scene_points, derive_seed(seed, 2))
    return run_estimator(method, cs, prep.model, prep.scene, prep.gt, prep.mr, model_sub, scene_sub, config, seed, pid, group)


def run_pair(spec: PairSpec, method: str, config: BenchConfig, seed: int) -> PairResult:
    """Load one pair and run one method on it; load failures become failed results."""
    try:
        prep = prepare_pair(spec, config)
    except (RegBenchError, ValueError, OSError) as exc:
        return _failed(method, spec.pair_id, seed, "", exc)
    return run_prepared(prep, method, config, seed, overlap_bin(prep.overlap))


def run_suite(
    pairs: Sequence[PairSpec],
    config: BenchConfig,
    methods: Sequence[str] | str | None = None,
    master_seed: int = 0,
    progress: Callable[[str], None] | None = None,
) -> SuiteReport:
    """Every method on every pair whose overlap exceeds ``config.min_overlap``."""
    methods = resolve_methods(methods)
    report = SuiteReport(metadata={"master_seed": master_seed, "config": config.digest(), "skipped": []})
    for i, spec in enumerate(pairs):
        seed = derive_seed(master_seed, i)
        try:
            prep = prepare_pair(spec, config)
        except (RegBenchError, ValueError, OSError) as exc:
            logger.warning("could not load pair %s: %s", spec.pair_id, exc)
            report.results.extend(_failed(m, spec.pair_id, seed, "", exc) for m in methods)
            continue
        if prep.overlap <= config.min_overlap:
            report.metadata["skipped"].append(spec.pair_id)
            continue
        group = overlap_bin(prep.overlap)
        for m in methods:
            report.results.append(run_prepared(prep, m, config, seed, group))
        if progress:
            progress(f"pair {spec.pair_id} done")
    return report


def pcc_group(level: float) -> str:
    return f"pcc:{level:.2f}"


def pcc_sweep(
    model: PointCloud,
    scene: PointCloud,
    gt: RigidTransform,
    config: BenchConfig,
    methods: Sequence[str] | str | None = None,
    master_seed: int = 0,
    progress: Callable[[str], None] | None = None,
) -> SuiteReport:
    """Success rate of each method as the share of correct correspondences varies.

    Trial ``i`` uses one seed at every PCC level, so levels are compared on the
    same subsamples and sampling streams.
    """
    methods = resolve_methods(methods)
    mr = scene.mesh_resolution
    m_c = model.centroid
    tol = config.overlap_tol * mr
    report = SuiteReport(
        metadata={"master_seed": master_seed, "config": config.digest(), "trials": config.trials, "levels": list(config.pcc_levels)}
    )
    for i in range(config.trials):
        seed = derive_seed(master_seed, i)
        model_sub = subsample(model, config.model_points, derive_seed(seed, 1))
        scene_sub = subsample(scene, config.scene_points, derive_seed(seed, 2))
        for level in config.pcc_levels:
            cs = synthesize_correspondences(model, scene, gt, config.correspondences, level, seed=derive_seed(seed, 3), tol_mr=config.overlap_tol)
            cs = attach_synthetic_frames(cs, gt, tol, derive_seed(seed, 5), config.frame_noise_deg)
            for m in methods:
                report.results.append(
                    run_estimator(m, cs, model, scene, gt, mr, model_sub, scene_sub, config, seed, f"trial{i:03d}", pcc_group(level), m_c)
                )
        if progress:
            progress(f"trial {i + 1}/{config.trials} done")
    return report
