"""Turn a results directory into plot-ready CSV, a text summary, and
rendered figures.

The delimited outputs stay the single source of truth; the PNGs are
conveniences rendered from the same rows (headless Agg backend, no display
needed).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from alen.exceptions import ParseError
from alen.metrics import AccuracyMatrix, forgetting


def _load_results(result_dir: Path) -> dict:
    path = result_dir / "results.json"
    if not path.exists():
        raise ParseError(f"no results.json under {result_dir}")
    return json.loads(path.read_text())


def write_accuracy_curves(matrix: AccuracyMatrix, path: Path) -> None:
    """One curve per domain: accuracy as a function of the increment at
    which the model was snapshotted.  Rows grouped by domain."""
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["domain_id", "increment", "accuracy"])
        domains = matrix.increment_count
        for j in range(domains):
            for i in range(j, domains):
                writer.writerow([j, i, f"{matrix[i, j]:.17g}"])


def _summary_lines(doc: dict, matrix: AccuracyMatrix) -> list[str]:
    lines = []
    method = doc.get("config", {}).get("method", "?")
    seed = doc.get("config", {}).get("seed", "?")
    lines.append(f"method: {method}   seed: {seed}")
    lines.append(f"increments: {matrix.increment_count}")
    lines.append(f"avg_acc: {matrix.average_accuracy() * 100:.2f}%")
    if matrix.increment_count > 1:
        lines.append(f"forgetting: {forgetting(matrix):+.2f}%")
    lines.append("")
    lines.append("final-model accuracy per domain:")
    for j, acc in enumerate(matrix.rows[-1]):
        lines.append(f"  domain {j}: {acc * 100:6.2f}%")
    return lines


def _plot_curves(matrix: AccuracyMatrix, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    domains = matrix.increment_count
    for j in range(domains):
        xs = list(range(j, domains))
        ys = [matrix[i, j] for i in xs]
        ax.plot(xs, ys, marker="o", label=f"domain {j}")
    ax.set_xlabel("increment")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.set_xticks(range(domains))
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_matrix(matrix: AccuracyMatrix, path: Path) -> None:
    n = matrix.increment_count
    grid = np.full((n, n), np.nan)
    for i, row in enumerate(matrix.rows):
        grid[i, :len(row)] = row
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(grid, vmin=0.0, vmax=1.0, cmap="viridis")
    for i in range(n):
        for j in range(i + 1):
            ax.text(j, i, f"{grid[i, j]:.2f}", ha="center", va="center",
                    fontsize=8,
                    color="white" if grid[i, j] < 0.6 else "black")
    ax.set_xlabel("evaluated domain")
    ax.set_ylabel("after increment")
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    fig.colorbar(im, ax=ax, label="accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_training(training_csv: Path, path: Path) -> bool:
    epochs, ls1, ls2, acc = [], [], [], []
    with training_csv.open(newline="") as fh:
        for rec in csv.DictReader(fh):
            epochs.append(int(rec["epoch"]))
            ls1.append(float(rec["mean_Ls1"]) if rec["mean_Ls1"] else None)
            ls2.append(float(rec["mean_Ls2"]))
            acc.append(float(rec["train_accuracy"]))
    if not epochs:
        return False
    fig, ax = plt.subplots(figsize=(6, 4))
    if any(v is not None for v in ls1):
        xs = [e for e, v in zip(epochs, ls1) if v is not None]
        ys = [v for v in ls1 if v is not None]
        ax.plot(xs, ys, label="mean_Ls1")
    ax.plot(epochs, ls2, label="mean_Ls2")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, acc, color="tab:green", linestyle="--",
             label="train accuracy")
    ax2.set_ylabel("train accuracy")
    ax2.set_ylim(0.0, 1.02)
    handles1, labels1 = ax.get_legend_handles_labels()
    handles2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(handles1 + handles2, labels1 + labels2, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def generate_report(result_dir: str | Path,
                    out_dir: str | Path | None = None) -> list[Path]:
    """Build every report artifact; returns the written paths in order."""
    result_dir = Path(result_dir)
    out = Path(out_dir) if out_dir is not None else result_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    doc = _load_results(result_dir)
    if "error" in doc:
        raise ParseError(f"run failed during stage "
                         f"'{doc['error']['stage']}'; nothing to report")
    matrix = AccuracyMatrix()
    for row in doc["accuracy_matrix"]:
        matrix.append_row(row)
    written = []
    curves_csv = out / "accuracy_curves.csv"
    write_accuracy_curves(matrix, curves_csv)
    written.append(curves_csv)
    summary = out / "summary.txt"
    summary.write_text("\n".join(_summary_lines(doc, matrix)) + "\n")
    written.append(summary)
    curves_png = out / "accuracy_curves.png"
    _plot_curves(matrix, curves_png)
    written.append(curves_png)
    matrix_png = out / "accuracy_matrix.png"
    _plot_matrix(matrix, matrix_png)
    written.append(matrix_png)
    training_csv = result_dir / "logs" / "training.csv"
    if training_csv.exists():
        training_png = out / "training_loss.png"
        if _plot_training(training_csv, training_png):
            written.append(training_png)
    return written
