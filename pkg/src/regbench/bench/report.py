"""CSV and SVG output for benchmark reports."""

from __future__ import annotations

import csv
import json
from os import PathLike
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from regbench.bench.harness import PairResult, SuiteReport  # noqa: E402

PAIR_COLUMNS = ("method", "pair_id", "group", "eps_r", "eps_t", "success", "iterations", "seed", "error")
TIMING_COLUMNS = ("method", "pair_id", "group", "seconds")
SUMMARY_COLUMNS = ("method", "group", "runs", "successes", "success_pct", "mean_seconds")


def _fmt(v: object) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def emit_csv(report: SuiteReport, out_dir: str | PathLike[str]) -> dict[str, Path]:
    """Write ``pairs.csv``, ``timings.csv``, ``summary.csv`` and ``run.json``.

    ``pairs.csv`` holds everything that is reproducible from the seed; wall
    times live in ``timings.csv`` so that reruns give byte-identical
    ``pairs.csv`` files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("pairs", "timings", "summary")}
    rows = [r.__dict__ for r in report.results]
    _write(paths["pairs"], PAIR_COLUMNS, rows)
    _write(paths["timings"], TIMING_COLUMNS, rows)
    _write(paths["summary"], SUMMARY_COLUMNS, report.summary_rows())
    paths["run"] = out / "run.json"
    paths["run"].write_text(json.dumps(report.metadata, indent=2, sort_keys=True) + "\n")
    return paths


def read_pairs_csv(path: str | PathLike[str]) -> list[PairResult]:
    """Parse ``pairs.csv`` (and ``timings.csv`` beside it, when present) back into results."""
    path = Path(path)
    timings: dict[tuple[str, str, str], float] = {}
    tpath = path.with_name("timings.csv")
    if tpath.exists():
        with open(tpath, newline="") as fh:
            for row in csv.DictReader(fh):
                timings[(row["method"], row["pair_id"], row["group"])] = float(row["seconds"])
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["method"], row["pair_id"], row["group"])
            out.append(
                PairResult(
                    row["method"],
                    row["pair_id"],
                    float(row["eps_r"]),
                    float(row["eps_t"]),
                    row["success"] == "1",
                    timings.get(key, 0.0),
                    int(row["iterations"]),
                    int(row["seed"]),
                    row["group"],
                    row["error"],
                )
            )
    return out


def _group_value(group: str, prefix: str) -> float | None:
    if not group.startswith(prefix):
        return None
    return float(group[len(prefix):].split("-")[0])


def emit_plots(report: SuiteReport, out_dir: str | PathLike[str]) -> list[Path]:
    """Line charts of success rate against PCC and overlap, and a bar chart of mean time."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "regbench"
    by_group = report.success_by_group()
    written = []
    for prefix, name, xlabel, scale in (("pcc:", "success_vs_pcc.svg", "correct correspondences (%)", 100.0), ("overlap:", "success_vs_overlap.svg", "overlap ratio bin start (%)", 100.0)):
        series: dict[str, list[tuple[float, float]]] = {}
        for (method, group), pct in by_group.items():
            x = _group_value(group, prefix)
            if x is not None:
                series.setdefault(method, []).append((x * scale, pct))
        if not series:
            continue
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for method in report.methods:
            if method in series:
                pts = sorted(series[method])
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("correct registrations (%)")
        ax.set_ylim(-2, 102)
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        path = out / name
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    times = report.mean_seconds()
    if times:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        names = [m for m in report.methods if m in times]
        ax.bar(names, [times[m] for m in names])
        ax.set_ylabel("mean time per run (s)")
        ax.tick_params(axis="x", labelrotation=45)
        fig.tight_layout()
        path = out / "time_per_method.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
