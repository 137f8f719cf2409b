"""Report rendering: delimited tables plus matplotlib figures.

Writes per-task score tables, round statistics, and the retrieved-data
distribution (target task x upstream task fractions) as CSV, and renders a
score bar chart and a distribution heatmap alongside them.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import AggregateReport, TaskScore

#: Keep figure output byte-stable run-to-run.
_SAVEFIG_KWARGS = {"dpi": 150, "metadata": {"Software": None}}


def write_scores_csv(scores: Sequence[TaskScore], path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "round", "metric", "value", "examples"])
        for s in sorted(scores, key=lambda s: (s.task, s.round_index)):
            writer.writerow([s.task, s.round_index, s.metric.value, s.value, s.example_count])


def write_per_task_csv(report: AggregateReport, path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "mean", "std"])
        for task, (mean, std) in sorted(report.per_task.items()):
            writer.writerow([task, mean, std])


def write_round_stats_csv(report: AggregateReport, path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "mean", "std", "median", "min", "max"])
        s = report.stats
        writer.writerow([report.metric.value, s.mean, s.std, s.median, s.min, s.max])


def write_distribution_csv(
    rows: Sequence[tuple[str, str, float]], path: Path
) -> None:
    """Rows are (target_task, upstream_task, fraction), heatmap-ready."""
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target_task", "upstream_task", "fraction"])
        for target, upstream, fraction in sorted(rows):
            writer.writerow([target, upstream, fraction])


def read_distribution_csv(path: Path) -> list[tuple[str, str, float]]:
    rows = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append((rec["target_task"], rec["upstream_task"], float(rec["fraction"])))
    return rows


def render_score_figure(report: AggregateReport, path: Path) -> None:
    """Bar chart of per-task means with std error bars."""
    tasks = sorted(report.per_task)
    means = [report.per_task[t][0] for t in tasks]
    stds = [report.per_task[t][1] for t in tasks]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(tasks) + 2.0), 3.5))
    ax.bar(range(len(tasks)), means, yerr=stds, capsize=3, color="#4878d0")
    ax.set_xticks(range(len(tasks)))
    ax.set_xticklabels(tasks, rotation=45, ha="right")
    ax.set_ylabel(f"{report.metric.value} (%)")
    ax.set_title("Per-task generalization score (mean over rounds)")
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)


def render_distribution_heatmap(
    rows: Sequence[tuple[str, str, float]], path: Path
) -> None:
    """Heatmap of retrieved-data fractions: target tasks x upstream tasks."""
    targets = sorted({r[0] for r in rows})
    upstreams = sorted({r[1] for r in rows})
    grid = np.zeros((len(targets), len(upstreams)))
    t_pos = {t: i for i, t in enumerate(targets)}
    u_pos = {u: j for j, u in enumerate(upstreams)}
    for target, upstream, fraction in rows:
        grid[t_pos[target], u_pos[upstream]] = fraction

    fig, ax = plt.subplots(
        figsize=(max(4.0, 0.55 * len(upstreams) + 2.0), max(2.5, 0.5 * len(targets) + 1.5))
    )
    image = ax.imshow(grid, cmap="Blues", aspect="auto", vmin=0.0)
    ax.set_xticks(range(len(upstreams)))
    ax.set_xticklabels(upstreams, rotation=45, ha="right")
    ax.set_yticks(range(len(targets)))
    ax.set_yticklabels(targets)
    ax.set_xlabel("upstream task")
    ax.set_ylabel("target task")
    ax.set_title("Retrieved data distribution")
    fig.colorbar(image, ax=ax, label="fraction")
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)


def write_report(
    scores: Sequence[TaskScore],
    report: AggregateReport,
    distribution: Sequence[tuple[str, str, float]] | None,
    out_dir: str | Path,
) -> list[Path]:
    """Write all report files into ``out_dir``; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "scores.csv"
    write_scores_csv(scores, path)
    written.append(path)

    path = out_dir / "per_task.csv"
    write_per_task_csv(report, path)
    written.append(path)

    path = out_dir / "round_stats.csv"
    write_round_stats_csv(report, path)
    written.append(path)

    path = out_dir / "per_task_scores.png"
    render_score_figure(report, path)
    written.append(path)

    if distribution:
        path = out_dir / "distribution.csv"
        write_distribution_csv(distribution, path)
        written.append(path)
        path = out_dir / "task_distribution.png"
        render_distribution_heatmap(distribution, path)
        written.append(path)
    return written
