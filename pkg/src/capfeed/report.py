"""Report rendering: delimited outputs plus matplotlib figures.

Every reporting CLI path writes machine-readable CSV/JSON next to PNG
figures so runs can be inspected without re-running anything.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .continual import forgetting  # noqa: E402


def write_r_matrix(r_matrix: list[list[float]], out_dir: str | Path) -> dict[str, Path]:
    """R matrix as CSV plus a heatmap and per-task forgetting bar chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t = len(r_matrix)
    csv_path = out_dir / "r_matrix.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["after_task"] + [f"task_{j}" for j in range(t)] + ["union"])
        for i, row in enumerate(r_matrix):
            writer.writerow([i] + [f"{v:.6f}" if not math.isnan(v) else "" for v in row])

    fig, ax = plt.subplots(figsize=(1.2 * (t + 1) + 2, 1.0 * t + 2))
    data = [[0.0 if math.isnan(v) else v for v in row] for row in r_matrix]
    im = ax.imshow(data, cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(t + 1))
    ax.set_xticklabels([f"task {j}" for j in range(t)] + ["union"])
    ax.set_yticks(range(t))
    ax.set_yticklabels([f"after {i}" for i in range(t)])
    for i, row in enumerate(r_matrix):
        for j, v in enumerate(row):
            if not math.isnan(v):
                ax.text(j, i, f"{v:.2f}", ha="center", va="center",
                        color="white" if v < 0.5 else "black", fontsize=8)
    ax.set_title("BLEU-4 per task after sequential training")
    fig.colorbar(im, ax=ax, shrink=0.8)
    heatmap_path = out_dir / "r_matrix.png"
    fig.tight_layout()
    fig.savefig(heatmap_path, dpi=120)
    plt.close(fig)

    forget = []
    for j in range(t):
        try:
            forget.append(forgetting(r_matrix, j))
        except ValueError:
            forget.append(float("nan"))
    fig, ax = plt.subplots(figsize=(1.0 * t + 2, 3))
    ax.bar(range(t), [0.0 if math.isnan(v) else v for v in forget], color="#c44e52")
    ax.set_xticks(range(t))
    ax.set_xticklabels([f"task {j}" for j in range(t)])
    ax.set_ylabel("forgetting (peak - final BLEU-4)")
    ax.axhline(0, color="black", linewidth=0.8)
    forgetting_path = out_dir / "forgetting.png"
    fig.tight_layout()
    fig.savefig(forgetting_path, dpi=120)
    plt.close(fig)
    return {"csv": csv_path, "heatmap": heatmap_path, "forgetting": forgetting_path}


def write_eval_report(report: dict, out_dir: str | Path, losses: list[float] | None = None):
    """Evaluation report as JSON + CSV, with an optional loss-curve figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w") as f:
        json.dump(report, f, indent=2)
    with open(out_dir / "report.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(sorted(report))
        writer.writerow([report[k] for k in sorted(report)])
    paths = {"json": out_dir / "report.json", "csv": out_dir / "report.csv"}
    if losses:
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.plot(losses, color="#4c72b0")
        ax.set_xlabel("training step")
        ax.set_ylabel("cross-entropy loss")
        fig.tight_layout()
        fig.savefig(out_dir / "loss_curve.png", dpi=120)
        plt.close(fig)
        paths["loss_curve"] = out_dir / "loss_curve.png"
    return paths
