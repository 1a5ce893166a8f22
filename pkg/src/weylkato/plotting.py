"""Static SVG line charts built from report.csv."""

from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_report"]


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def plot_report(csv_path, svg_path, title=""):
    """Log-log plot of |resid_N| and |resid_e| against t.

    Annotations quote the CSV cells verbatim, so every number shown in the
    SVG also appears in report.csv.
    """
    header, rows = _read_csv(csv_path)
    col = {h: i for i, h in enumerate(header)}
    t = np.array([float(r[col["t"]]) for r in rows])
    plt.rcParams["svg.fonttype"] = "none"
    plt.rcParams["svg.hashsalt"] = "weylkato"
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for name, style in (("resid_N", "-"), ("resid_e", "--")):
        y = np.abs([float(r[col[name]]) for r in rows])
        ok = y > 0
        if ok.any():
            ax.loglog(t[ok], y[ok], style, label=f"|{name}|")
    last = rows[-1]
    ax.annotate(f"t = {last[col['t']]}\nN = {last[col['N']]}\nresid_N = {last[col['resid_N']]}",
                xy=(0.02, 0.98), xycoords="axes fraction", va="top", fontsize=8)
    ax.set_xlabel("t")
    ax.set_ylabel("|residual|")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    svg_path = Path(svg_path)
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=svg_path.parent, prefix=".plot-", suffix=".svg")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        os.replace(tmp, svg_path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)
    return svg_path
