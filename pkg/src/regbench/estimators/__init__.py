"""The eleven transformation estimators behind one calling convention.

Every estimator is ``fn(ctx, params) -> EstimateResult``; :data:`ESTIMATORS`
maps the method names used by the benchmark to those functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from regbench.estimators.base import EstimateResult, EstimationContext
from regbench.estimators.consensus import estimate_gcc, estimate_gcm, estimate_ransac
from regbench.estimators.game import (
    build_payoff_gtm,
    build_payoff_vgtm,
    estimate_gtm,
    estimate_vgtm,
    iterate_replicator,
    replicator_dynamics,
)
from regbench.estimators.hypothesis import (
    estimate_1p_ransac,
    estimate_2sac_gc,
    estimate_ccv,
    estimate_osac,
    estimate_sacia,
)
from regbench.estimators.params import EstimatorParams
from regbench.estimators.voting import estimate_lgv, otsu_threshold

Estimator = Callable[[EstimationContext, EstimatorParams], EstimateResult]


@dataclass(frozen=True)
class MethodInfo:
    fn: Estimator
    family: str  # "MC" (consistency) or "CV" (hypothesise and verify)
    needs_lrf: bool = False
    needs_lra: bool = False
    needs_subsamples: bool = False


METHODS: dict[str, MethodInfo] = {
    "RANSAC": MethodInfo(estimate_ransac, "MC"),
    "GCC": MethodInfo(estimate_gcc, "MC"),
    "GCM": MethodInfo(estimate_gcm, "MC"),
    "GTM": MethodInfo(estimate_gtm, "MC"),
    "V-GTM": MethodInfo(estimate_vgtm, "MC"),
    "LGV": MethodInfo(estimate_lgv, "MC", needs_lrf=True),
    "SAC-IA": MethodInfo(estimate_sacia, "CV", needs_subsamples=True),
    "CCV": MethodInfo(estimate_ccv, "CV", needs_lrf=True, needs_subsamples=True),
    "1P-RANSAC": MethodInfo(estimate_1p_ransac, "CV", needs_lrf=True, needs_subsamples=True),
    "OSAC": MethodInfo(estimate_osac, "CV", needs_subsamples=True),
    "2SAC-GC": MethodInfo(estimate_2sac_gc, "CV", needs_lra=True, needs_subsamples=True),
}

ESTIMATORS: dict[str, Estimator] = {name: info.fn for name, info in METHODS.items()}


def get_estimator(name: str) -> Estimator:
    try:
        return ESTIMATORS[name]
    except KeyError:
        raise KeyError(f"unknown method {name!r}; choose from {', '.join(ESTIMATORS)}") from None


__all__ = [
    "ESTIMATORS",
    "METHODS",
    "EstimateResult",
    "EstimationContext",
    "EstimatorParams",
    "MethodInfo",
    "build_payoff_gtm",
    "build_payoff_vgtm",
    "estimate_1p_ransac",
    "estimate_2sac_gc",
    "estimate_ccv",
    "estimate_gcc",
    "estimate_gcm",
    "estimate_gtm",
    "estimate_lgv",
    "estimate_osac",
    "estimate_ransac",
    "estimate_sacia",
    "estimate_vgtm",
    "get_estimator",
    "iterate_replicator",
    "otsu_threshold",
    "replicator_dynamics",
]
