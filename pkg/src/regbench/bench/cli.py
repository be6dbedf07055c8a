"""Command-line entry point: ``bench run``, ``bench pcc-sweep``, ``bench params`` and ``bench synth``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from regbench.bench.config import DEFAULT_INPUTS, PairSpec, load_config, load_manifest, write_manifest
from regbench.bench.harness import pcc_sweep, resolve_methods, run_suite
from regbench.bench.report import emit_csv, emit_plots
from regbench.bench.synthetic import make_synthetic_pair, synthetic_keypoints
from regbench.cloud import load_ply, save_features, write_ply
from regbench.errors import RegBenchError
from regbench.estimators import EstimatorParams
from regbench.geometry import load_transform, save_transform
from regbench.lrf import save_lra_file, save_lrf_file


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _methods(text: str) -> list[str]:
    return resolve_methods(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Benchmark rigid-transform estimators on 3D correspondences.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run methods over the pairs of a manifest")
    run.add_argument("--manifest", required=True, type=Path)
    run.add_argument("--methods", default="all", help="comma-separated list or 'all'")
    run.add_argument("--config", type=Path)
    run.add_argument("--seed", type=_seed, default=0)
    run.add_argument("--icp", action="store_true", help="refine every estimate with ICP")
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--no-plots", action="store_true")

    sw = sub.add_parser("pcc-sweep", help="success rate against the share of correct synthetic correspondences")
    sw.add_argument("--model", required=True, type=Path)
    sw.add_argument("--scene", required=True, type=Path)
    sw.add_argument("--gt", required=True, type=Path)
    sw.add_argument("--trials", type=int)
    sw.add_argument("--seed", type=_seed, default=0)
    sw.add_argument("--methods", default="all")
    sw.add_argument("--config", type=Path)
    sw.add_argument("--levels", help="comma-separated PCC levels, e.g. 0.05,0.5")
    sw.add_argument("--out", required=True, type=Path)
    sw.add_argument("--no-plots", action="store_true")

    sub.add_parser("params", help="print default parameters")

    sy = sub.add_parser("synth", help="write a synthetic scan pair with keypoints, frames and a manifest")
    sy.add_argument("--out", required=True, type=Path)
    sy.add_argument("--seed", type=_seed, default=0)
    sy.add_argument("--pairs", type=int, default=1)
    sy.add_argument("--keypoints", type=int, default=300)
    sy.add_argument("--feature-noise", type=float, default=0.3)
    sy.add_argument("--noise", type=float, default=0.0, help="scene jitter in mr")
    return p


def _cmd_params() -> int:
    for key, value in EstimatorParams().flat().items():
        print(f"{key}={value}")
    for method, n in DEFAULT_INPUTS.items():
        print(f"inputs.{method}={n}")
    return 0


def _cmd_synth(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    specs = []
    for k in range(args.pairs):
        seed = args.seed + k
        pair = make_synthetic_pair(seed, noise_mr=args.noise)
        mk, sk = synthetic_keypoints(pair, n_keys=args.keypoints, feature_noise=args.feature_noise, seed=seed)
        stem = args.out / f"pair{k:02d}"
        files = {
            "model": stem.with_name(stem.name + "_model.ply"),
            "scene": stem.with_name(stem.name + "_scene.ply"),
            "gt": stem.with_name(stem.name + "_gt.txt"),
            "features_model": stem.with_name(stem.name + "_model.feat"),
            "features_scene": stem.with_name(stem.name + "_scene.feat"),
            "lrf_model": stem.with_name(stem.name + "_model.lrf"),
            "lrf_scene": stem.with_name(stem.name + "_scene.lrf"),
            "lra_model": stem.with_name(stem.name + "_model.lra"),
            "lra_scene": stem.with_name(stem.name + "_scene.lra"),
        }
        write_ply(files["model"], pair.model, binary=True)
        write_ply(files["scene"], pair.scene, binary=True)
        save_transform(files["gt"], pair.gt)
        save_features(files["features_model"], mk)
        save_features(files["features_scene"], sk)
        save_lrf_file(files["lrf_model"], mk)
        save_lrf_file(files["lrf_scene"], sk)
        save_lra_file(files["lra_model"], mk)
        save_lra_file(files["lra_scene"], sk)
        specs.append(PairSpec(f"pair{k:02d}", **files))
    write_manifest(args.out / "manifest.ini", specs)
    print(args.out / "manifest.ini")
    return 0


def _finish(report, out: Path, plots: bool) -> None:
    paths = emit_csv(report, out)
    if plots:
        emit_plots(report, out)
    for row in report.summary_rows():
        if row["group"] == "*":
            print(f"{row['method']:<10} {row['success_pct']:6.1f}%  {row['mean_seconds']:.4f}s")
    print(f"results: {paths['pairs']}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    log = logging.getLogger("bench").info
    try:
        if args.command == "params":
            return _cmd_params()
        if args.command == "synth":
            return _cmd_synth(args)
        config = load_config(args.config)
        methods = _methods(args.methods)
        if args.command == "run":
            if args.icp:
                config = config.with_values({"icp": True})
            report = run_suite(load_manifest(args.manifest), config, methods, args.seed, log)
            _finish(report, args.out, not args.no_plots)
            return 0
        values = {}
        if args.trials is not None:
            values["synthetic.trials"] = args.trials
        if args.levels:
            values["synthetic.pcc_levels"] = args.levels
        config = config.with_values(values)
        model, scene, gt = load_ply(args.model), load_ply(args.scene), load_transform(args.gt)
        report = pcc_sweep(model, scene, gt, config, methods, args.seed, log)
        _finish(report, args.out, not args.no_plots)
        return 0
    except (RegBenchError, KeyError, ValueError, OSError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
