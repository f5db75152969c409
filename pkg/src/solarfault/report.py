"""Per-system anomaly-score figures and their underlying CSVs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .data import DayLabel
from .metrics import ScoreEntry, score_cap_for_display

LABEL_COLORS = {
    DayLabel.NORMAL: "tab:green",
    DayLabel.MERK: "tab:orange",
    DayLabel.FAULT: "tab:red",
}


def write_system_plot_csv(path, entries: list[ScoreEntry], cap: float = 3.0) -> None:
    capped = score_cap_for_display([e.score for e in entries], cap)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day_index", "capped_score", "label"])
        for e, s in zip(entries, capped):
            writer.writerow([e.day_index, repr(float(s)), e.label.value])


def render_system_figure(path, system_id: str, entries: list[ScoreEntry],
                         cap: float = 3.0) -> None:
    """Day index vs capped anomaly score, one point per day, colored by label."""
    capped = score_cap_for_display([e.score for e in entries], cap)
    fig, ax = plt.subplots(figsize=(8, 3))
    for label in (DayLabel.NORMAL, DayLabel.MERK, DayLabel.FAULT):
        xs = [e.day_index for e, s in zip(entries, capped) if e.label is label]
        ys = [float(s) for e, s in zip(entries, capped) if e.label is label]
        if xs:
            ax.scatter(xs, ys, s=12, color=LABEL_COLORS[label],
                       label=label.value.capitalize())
    ax.set_xlabel("day index")
    ax.set_ylabel(f"anomaly score (capped at {cap:g})")
    ax.set_title(f"system {system_id}")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def report_system(out_dir, system_id: str, entries: list[ScoreEntry],
                  cap: float = 3.0) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"system_{system_id}_scores.csv"
    svg_path = out / f"system_{system_id}_scores.svg"
    write_system_plot_csv(csv_path, entries, cap)
    render_system_figure(svg_path, system_id, entries, cap)
    return svg_path, csv_path
