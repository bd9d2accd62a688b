"""Report emission: JSON, aligned text tables, CSV, and rendered figures.

Every experiment command writes the same bundle into its output directory:
``report.json`` (config echo, per-seed metrics, aggregates, provenance
digests), ``report.txt`` (aligned tables), ``report.csv`` (long-format
metrics for plotting), and PNG figures under ``figures/``. Nothing
time-dependent goes into these files, so identical configs reproduce them
byte for byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def fmt(cells):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def _f(x: float) -> str:
    return f"{x:.4f}"


def pipeline_table(report: dict) -> str:
    """Aligned comparison of the pipelines' aggregated micro metrics."""
    rows = []
    for pipeline, data in sorted(report["pipelines"].items()):
        mean = data["aggregate"]["mean"]
        std = data["aggregate"]["std"]
        rows.append(
            [
                pipeline,
                _f(mean["micro_precision"]),
                _f(mean["micro_recall"]),
                _f(mean["micro_f1"]),
                _f(std["micro_f1"]),
                str(data["aggregate"]["n_runs"]),
            ]
        )
    return format_table(["pipeline", "precision", "recall", "f1", "f1_std", "runs"], rows)


def per_class_table(report: dict) -> str:
    rows = []
    for pipeline, data in sorted(report["pipelines"].items()):
        for label, f1 in sorted(data["aggregate"]["per_class_f1_mean"].items()):
            rows.append([pipeline, label, _f(f1), _f(data["aggregate"]["per_class_f1_std"][label])])
    if not rows:
        return ""
    return format_table(["pipeline", "relation_type", "f1", "f1_std"], rows)


def mcnemar_table(report: dict) -> str:
    rows = []
    for entry in report.get("mcnemar", []):
        rows.append(
            [
                entry["pipeline_a"],
                entry["pipeline_b"],
                entry["scope"],
                str(entry["result"]["b"]),
                str(entry["result"]["c"]),
                _f(entry["result"]["statistic"]),
                "yes" if entry["result"]["significant_at_05"] else "no",
            ]
        )
    if not rows:
        return ""
    return format_table(
        ["system_a", "system_b", "scope", "b", "c", "statistic", "significant@0.05"], rows
    )


def run_report_text(report: dict) -> str:
    sections = ["== aggregated results ==", pipeline_table(report)]
    per_class = per_class_table(report)
    if per_class:
        sections += ["", "== per relation type (mean F1) ==", per_class]
    mcn = mcnemar_table(report)
    if mcn:
        sections += ["", "== paired significance ==", mcn]
    return "\n".join(sections) + "\n"


def run_report_csv_rows(report: dict) -> tuple[list[str], list[dict]]:
    fieldnames = ["pipeline", "seed", "micro_precision", "micro_recall", "micro_f1"]
    rows = []
    for pipeline, data in sorted(report["pipelines"].items()):
        for entry in data["per_seed"]:
            rows.append(
                {
                    "pipeline": pipeline,
                    "seed": entry["seed"],
                    "micro_precision": entry["metrics"]["micro_precision"],
                    "micro_recall": entry["metrics"]["micro_recall"],
                    "micro_f1": entry["metrics"]["micro_f1"],
                }
            )
        rows.append(
            {
                "pipeline": pipeline,
                "seed": "mean",
                "micro_precision": data["aggregate"]["mean"]["micro_precision"],
                "micro_recall": data["aggregate"]["mean"]["micro_recall"],
                "micro_f1": data["aggregate"]["mean"]["micro_f1"],
            }
        )
    return fieldnames, rows


def run_overview_figure(report: dict, path: Path) -> None:
    """Bar chart of aggregated micro metrics per pipeline."""
    pipelines = sorted(report["pipelines"])
    metrics = ("micro_precision", "micro_recall", "micro_f1")
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(pipelines), 3.6))
    width = 0.25
    for j, metric in enumerate(metrics):
        xs = [i + (j - 1) * width for i in range(len(pipelines))]
        ys = [report["pipelines"][p]["aggregate"]["mean"][metric] for p in pipelines]
        ax.bar(xs, ys, width=width, label=metric.removeprefix("micro_"))
    ax.set_xticks(range(len(pipelines)))
    ax.set_xticklabels(pipelines, rotation=15)
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def curve_figure(x_values: list, series: dict[str, list[float]], xlabel: str, path: Path) -> None:
    """Line chart of mean micro-F1 per method over a sweep."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for name, ys in sorted(series.items()):
        ax.plot(range(len(x_values)), ys, marker="o", label=name)
    ax.set_xticks(range(len(x_values)))
    ax.set_xticklabels([str(x) for x in x_values])
    ax.set_xlabel(xlabel)
    ax.set_ylabel("micro F1")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_table(x_name: str, x_values: list, series: dict[str, list[float]]) -> str:
    methods = sorted(series)
    rows = [
        [str(x)] + [_f(series[m][i]) for m in methods]
        for i, x in enumerate(x_values)
    ]
    return format_table([x_name] + methods, rows)


def sweep_csv_rows(x_name: str, x_values: list, series: dict[str, list[float]]):
    fieldnames = [x_name] + sorted(series)
    rows = []
    for i, x in enumerate(x_values):
        row = {x_name: x}
        for method in sorted(series):
            row[method] = series[method][i]
        rows.append(row)
    return fieldnames, rows


def write_run_bundle(outdir: Path, report: dict) -> None:
    write_json(outdir / "report.json", report)
    (outdir / "report.txt").write_text(run_report_text(report), encoding="utf-8")
    fieldnames, rows = run_report_csv_rows(report)
    write_csv(outdir / "report.csv", fieldnames, rows)
    run_overview_figure(report, outdir / "figures" / "overview.png")


def write_sweep_bundle(
    outdir: Path,
    report: dict,
    x_name: str,
    x_values: list,
    series: dict[str, list[float]],
    figure_name: str,
) -> None:
    write_json(outdir / "report.json", report)
    (outdir / "report.txt").write_text(
        f"== mean micro F1 by {x_name} ==\n" + sweep_table(x_name, x_values, series) + "\n",
        encoding="utf-8",
    )
    fieldnames, rows = sweep_csv_rows(x_name, x_values, series)
    write_csv(outdir / "report.csv", fieldnames, rows)
    curve_figure(x_values, series, x_name, outdir / "figures" / figure_name)
