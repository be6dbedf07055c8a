"""Per-method parameters. Lengths are expressed in multiples of the mesh resolution."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Mapping


@dataclass(frozen=True)
class RansacParams:
    t: float = 3.0
    k: int = 5


@dataclass(frozen=True)
class GccParams:
    epsilon: float = 5.0
    pairwise: bool = False


@dataclass(frozen=True)
class GcmParams:
    epsilon1: float = 8.0
    delta1: float = 0.70
    epsilon2: float = 2.0
    delta2: float = 0.30
    passes: int = 5


@dataclass(frozen=True)
class GtmParams:
    lam: float = 1.0
    t: float = 0.5


@dataclass(frozen=True)
class VgtmParams:
    gamma: float = 1.0
    cutoff: float = 0.1
    support: float = 1e-6


@dataclass(frozen=True)
class LgvParams:
    zeta: float = 0.9
    k: int = 250
    delta: float = 5.0
    neighbors: int = 50


@dataclass(frozen=True)
class SacIaParams:
    t_e: float = 2.0
    d_min: float = 10.0


@dataclass(frozen=True)
class CcvParams:
    tau_a: float = 0.2
    tau_t: float = 10.0


@dataclass(frozen=True)
class OsacParams:
    delta: float = 0.3
    d_min: float = 10.0


@dataclass(frozen=True)
class TwoSacGcParams:
    sigma_d: float = 6.0
    sigma_a: float = 6.0  # degrees


@dataclass(frozen=True)
class ReplicatorParams:
    max_steps: int = 1000
    tol: float = 1e-8


@dataclass(frozen=True)
class EstimatorParams:
    ransac: RansacParams = field(default_factory=RansacParams)
    gcc: GccParams = field(default_factory=GccParams)
    gcm: GcmParams = field(default_factory=GcmParams)
    gtm: GtmParams = field(default_factory=GtmParams)
    vgtm: VgtmParams = field(default_factory=VgtmParams)
    lgv: LgvParams = field(default_factory=LgvParams)
    sacia: SacIaParams = field(default_factory=SacIaParams)
    ccv: CcvParams = field(default_factory=CcvParams)
    osac: OsacParams = field(default_factory=OsacParams)
    twosacgc: TwoSacGcParams = field(default_factory=TwoSacGcParams)
    replicator: ReplicatorParams = field(default_factory=ReplicatorParams)

    def __post_init__(self) -> None:
        for section, values in self.items():
            for key, value in values.items():
                if isinstance(value, bool):
                    continue
                if not value > 0:
                    raise ValueError(f"{section}.{key} must be positive, got {value}")
        for name in ("delta1", "delta2"):
            if not 0 < getattr(self.gcm, name) <= 1:
                raise ValueError(f"gcm.{name} must lie in (0, 1]")
        if not 0 < self.osac.delta < 1:
            raise ValueError("osac.delta must lie in (0, 1)")

    def items(self):
        for f in dataclasses.fields(self):
            yield f.name, dataclasses.asdict(getattr(self, f.name))

    def flat(self) -> dict[str, Any]:
        """Flat ``section.key`` view using the configuration-file key names."""
        out = {}
        for section, values in self.items():
            prefix = _SECTION_ALIASES.get(section, section)
            for key, value in values.items():
                out[f"{prefix}.{_KEY_ALIASES.get((section, key), key)}"] = value
        return out

    def with_overrides(self, overrides: Mapping[str, Any]) -> EstimatorParams:
        """Copy with ``section.key`` overrides such as ``{"gtm.lambda": 2}``."""
        reverse_section = {v: k for k, v in _SECTION_ALIASES.items()}
        reverse_key = {(s, v): k for (s, k), v in _KEY_ALIASES.items()}
        sections: dict[str, dict[str, Any]] = {}
        for dotted, value in overrides.items():
            prefix, _, key = dotted.partition(".")
            section = reverse_section.get(prefix, prefix)
            if section not in {f.name for f in dataclasses.fields(self)}:
                raise KeyError(f"unknown parameter section {prefix!r}")
            key = reverse_key.get((section, key), key)
            current = getattr(self, section)
            fields = {f.name: f for f in dataclasses.fields(current)}
            if key not in fields:
                raise KeyError(f"unknown parameter {dotted!r}")
            default = getattr(current, key)
            sections.setdefault(section, {})[key] = coerce_value(value, type(default))
        return dataclasses.replace(
            self,
            **{s: dataclasses.replace(getattr(self, s), **kv) for s, kv in sections.items()},
        )


_SECTION_ALIASES = {"twosacgc": "2sacgc"}
_KEY_ALIASES = {("gtm", "lam"): "lambda"}


def coerce_value(value: Any, kind: type) -> Any:
    if kind is bool:
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if kind is int:
        return int(float(value))
    return kind(value)
