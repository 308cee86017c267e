"""Deterministic SVG figures from sweep CSV datasets.

RMSE figures use a log y-axis, rate figures a linear one.  Output is
byte-stable: fixed hash salt, no embedded date.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

_GROUPS = {
    "rmse": ("rmse_block1", "rmse_block2"),
    "rate_isac": ("rate_isac_random", "rate_isac", "rate_isac_genie"),
    "rate_pc": ("rate_pc_random", "rate_pc", "rate_pc_genie"),
    "rate_overall": ("rate_overall",),
}

_LABELS = {
    "rmse_block1": "block 1",
    "rmse_block2": "block 2",
    "rate_isac": "proposed",
    "rate_isac_random": "random phases",
    "rate_isac_genie": "genie",
    "rate_pc": "proposed",
    "rate_pc_random": "random phases",
    "rate_pc_genie": "genie",
    "rate_overall": "proposed",
}


def read_dataset(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plots(dataset, out_dir, metrics: tuple | None = None) -> list:
    """Render one SVG per metric group present in the dataset.

    `dataset` is a CSV path or a list of row dicts with the sweep schema.
    `metrics` restricts the plotted metrics; asking for a metric absent
    from the dataset raises a ValueError naming it.
    """
    if isinstance(dataset, (str, Path)):
        dataset = read_dataset(dataset)
    if not dataset:
        raise ValueError("dataset is empty; nothing to plot")
    series = defaultdict(list)
    for row in dataset:
        series[row["metric"]].append(
            (float(row["sweep_value"]), float(row["mean"]),
             float(row["p10"]), float(row["p90"]))
        )
    present = set(series)
    if metrics is not None:
        missing = [m for m in metrics if m not in present]
        if missing:
            raise ValueError(f"dataset has no column for metric(s): {', '.join(missing)}")
        wanted = set(metrics)
    else:
        wanted = present

    plt.rcParams["svg.hashsalt"] = "irssim"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for group, members in _GROUPS.items():
        chosen = [m for m in members if m in wanted and m in present]
        if not chosen:
            continue
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for metric in chosen:
            pts = sorted(series[metric])
            x = [p[0] for p in pts]
            mean = [p[1] for p in pts]
            ax.plot(x, mean, marker="o", label=_LABELS.get(metric, metric))
            if len(pts) > 1:
                ax.fill_between(x, [p[2] for p in pts], [p[3] for p in pts], alpha=0.15)
        if group == "rmse":
            ax.set_yscale("log")
            ax.set_ylabel("RMSE (m)")
        else:
            ax.set_ylabel("sum rate (bit/s/Hz)")
        ax.set_xlabel("sweep value")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"{group}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
