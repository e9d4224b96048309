"""Sweep report emission: CSV rows, JSON summary, optional SVG trend plots.

CSV and JSON bytes are deterministic (fixed column order, repr floats,
sorted keys); SVG plots carry matplotlib structure and are excluded from
byte-level reproducibility comparisons.
"""

from __future__ import annotations

import json
import math
import os

CSV_COLUMNS = ("axis", "axis_value", "trial", "estimator",
               "p50", "p75", "p95", "n_frames", "n_failures")


def _fmt_value(v: float) -> str:
    return "inf" if math.isinf(float(v)) else repr(float(v))


def report_csv_text(report) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for vi, value in enumerate(report.axis_values):
        for trial, cell in enumerate(report.cells[vi]):
            for name in report.estimators:
                m = cell[name]
                lines.append(",".join([
                    report.axis,
                    _fmt_value(value),
                    str(trial),
                    name,
                    repr(m["p50"]), repr(m["p75"]), repr(m["p95"]),
                    str(m["n_frames"]), str(m["n_failures"]),
                ]))
    return "\n".join(lines) + "\n"


def write_report_files(report, out_dir: str, svg: bool = True) -> dict:
    """Write report.csv + report.json (+ report.svg); returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w", newline="") as f:
        f.write(report_csv_text(report))
    paths["csv"] = csv_path
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w") as f:
        json.dump(report.to_dict(), f, sort_keys=True, indent=1)
    paths["json"] = json_path
    if svg:
        svg_path = os.path.join(out_dir, "report.svg")
        try:
            plot_report(report, svg_path)
            paths["svg"] = svg_path
        except ImportError:
            pass
    return paths


def plot_report(report, path: str) -> None:
    """Mean +/- std per percentile, one panel per percentile metric."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "eyetwin"

    xs = [float(v) for v in report.axis_values]
    finite = [x for x in xs if math.isfinite(x)]
    # map an inf axis point (clean-noise end) onto a readable position
    if finite and len(finite) < len(xs):
        span = (max(finite) - min(finite)) or 1.0
        xs = [x if math.isfinite(x) else max(finite) + 0.25 * span for x in xs]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4), sharex=True)
    for ax, pname in zip(axes, ("p50", "p75", "p95")):
        for name in report.estimators:
            mean = [agg[name][f"{pname}_mean"] for agg in report.aggregates]
            std = [agg[name][f"{pname}_std"] for agg in report.aggregates]
            lo = [m - s for m, s in zip(mean, std)]
            hi = [m + s for m, s in zip(mean, std)]
            ax.plot(xs, mean, marker="o", label=name)
            ax.fill_between(xs, lo, hi, alpha=0.2)
        ax.set_title(pname.upper())
        ax.set_xlabel(report.axis)
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("gaze error [deg]")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def merge_reports_csv(reports) -> str:
    """Concatenate several reports into one CSV (shared header)."""
    lines = [",".join(CSV_COLUMNS)]
    for rep in reports:
        body = report_csv_text(rep).splitlines()[1:]
        lines.extend(body)
    return "\n".join(lines) + "\n"
