"""Benchmark configuration (flat ``key=value`` text) and pair manifests (INI)."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Any, Mapping

from regbench.errors import ParseError
from regbench.estimators import ESTIMATORS
from regbench.estimators.params import EstimatorParams, coerce_value

# Correspondences fed to each method when running on real pairs.
DEFAULT_INPUTS = {
    "RANSAC": 100,
    "GCC": 50,
    "SAC-IA": 200,
    "GTM": 200,
    "GCM": 50,
    "CCV": 200,
    "LGV": 200,
    "1P-RANSAC": 150,
    "OSAC": 100,
    "2SAC-GC": 50,
    "V-GTM": 200,
}

PCC_LEVELS = tuple(round(0.05 * k, 2) for k in range(1, 11))


@dataclass(frozen=True)
class BenchConfig:
    iterations: int = 300
    model_points: int = 100
    scene_points: int = 8000
    verify_tol: float = 2.0  # mr
    icp: bool = False
    icp_model_points: int = 1000
    overlap_tol: float = 2.0  # mr
    min_overlap: float = 0.1
    correspondences: int = 200  # synthetic sets
    trials: int = 50
    frame_noise_deg: float = 0.0
    pcc_levels: tuple[float, ...] = PCC_LEVELS
    inputs: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_INPUTS))
    params: EstimatorParams = field(default_factory=EstimatorParams)

    def __post_init__(self) -> None:
        for name in ("iterations", "model_points", "scene_points", "icp_model_points", "correspondences", "trials"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not self.verify_tol > 0 or not self.overlap_tol > 0:
            raise ValueError("tolerances must be positive")
        if not 0 <= self.min_overlap < 1:
            raise ValueError("min_overlap must lie in [0, 1)")
        if any(not 0 <= p <= 1 for p in self.pcc_levels):
            raise ValueError("PCC levels must lie in [0, 1]")
        unknown = set(self.inputs) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown method(s) in inputs: {sorted(unknown)}")

    def flat(self) -> dict[str, Any]:
        """All settings as configuration-file keys."""
        out: dict[str, Any] = {
            "iterations": self.iterations,
            "verify.model_points": self.model_points,
            "verify.scene_points": self.scene_points,
            "verify.tol_mr": self.verify_tol,
            "icp": self.icp,
            "icp.model_points": self.icp_model_points,
            "overlap.tol_mr": self.overlap_tol,
            "overlap.min": self.min_overlap,
            "synthetic.correspondences": self.correspondences,
            "synthetic.trials": self.trials,
            "synthetic.frame_noise_deg": self.frame_noise_deg,
            "synthetic.pcc_levels": ",".join(repr(p) for p in self.pcc_levels),
        }
        for m in ESTIMATORS:
            out[f"inputs.{m}"] = self.inputs.get(m, DEFAULT_INPUTS[m])
        out.update(self.params.flat())
        return out

    def digest(self) -> str:
        text = "\n".join(f"{k}={v!r}" for k, v in sorted(self.flat().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_values(self, values: Mapping[str, Any]) -> BenchConfig:
        """Copy with configuration-file keys applied."""
        simple = {
            "iterations": "iterations",
            "verify.model_points": "model_points",
            "verify.scene_points": "scene_points",
            "verify.tol_mr": "verify_tol",
            "icp": "icp",
            "icp.model_points": "icp_model_points",
            "overlap.tol_mr": "overlap_tol",
            "overlap.min": "min_overlap",
            "synthetic.correspondences": "correspondences",
            "synthetic.trials": "trials",
            "synthetic.frame_noise_deg": "frame_noise_deg",
        }
        changes: dict[str, Any] = {}
        inputs = dict(self.inputs)
        overrides: dict[str, Any] = {}
        for key, value in values.items():
            if key in simple:
                attr = simple[key]
                changes[attr] = coerce_value(value, type(getattr(self, attr)))
            elif key == "synthetic.pcc_levels":
                changes["pcc_levels"] = tuple(float(v) for v in str(value).split(",") if v.strip())
            elif key.startswith("inputs."):
                inputs[key[len("inputs."):]] = int(value)
            else:
                overrides[key] = value
        return dataclasses.replace(self, inputs=inputs, params=self.params.with_overrides(overrides), **changes)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"{source}: line {lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | PathLike[str] | None) -> BenchConfig:
    if path is None:
        return BenchConfig()
    values = parse_config_text(Path(path).read_text(), str(path))
    try:
        return BenchConfig().with_values(values)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class PairSpec:
    pair_id: str
    model: Path
    scene: Path
    gt: Path
    features_model: Path | None = None
    features_scene: Path | None = None
    lrf_model: Path | None = None
    lrf_scene: Path | None = None
    lra_model: Path | None = None
    lra_scene: Path | None = None
    overlap: float | None = None

    def __post_init__(self) -> None:
        if self.overlap is not None and not 0 <= self.overlap <= 1:
            raise ValueError("overlap must lie in [0, 1]")


_PATH_KEYS = ("model", "scene", "gt", "features_model", "features_scene", "lrf_model", "lrf_scene", "lra_model", "lra_scene")


def load_manifest(path: str | PathLike[str]) -> list[PairSpec]:
    """One pair per section; relative paths resolve against the manifest's folder."""
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc
    pairs = []
    for section in cp.sections():
        s = cp[section]
        unknown = set(s) - set(_PATH_KEYS) - {"overlap"}
        if unknown:
            raise ParseError(f"{path}: [{section}] unknown key(s) {sorted(unknown)}")
        missing = [k for k in ("model", "scene", "gt") if k not in s]
        if missing:
            raise ParseError(f"{path}: [{section}] missing {', '.join(missing)}")
        kw: dict[str, Any] = {k: (path.parent / s[k]) for k in _PATH_KEYS if k in s}
        if "overlap" in s:
            kw["overlap"] = float(s["overlap"])
        pairs.append(PairSpec(section, **kw))
    return pairs


def write_manifest(path: str | PathLike[str], pairs: list[PairSpec]) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    base = Path(path).parent
    for p in pairs:
        cp[p.pair_id] = {}
        for k in _PATH_KEYS:
            v = getattr(p, k)
            if v is not None:
                v = Path(v)
                try:
                    v = v.relative_to(base)
                except ValueError:
                    pass
                cp[p.pair_id][k] = str(v)
        if p.overlap is not None:
            cp[p.pair_id]["overlap"] = repr(p.overlap)
    with open(path, "w") as fh:
        cp.write(fh)
