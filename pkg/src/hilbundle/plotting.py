"""PNG figures for the plot-data tables of a report."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import CheckReport  # noqa: E402


def plot_quadrature(table, path: Path) -> None:
    nodes = [int(h.split("_")[1]) for h in table.header[3:]]
    errs = np.array([row[3:] for row in table.rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for e in errs:
        ax.semilogy(nodes, np.maximum(e, 1e-17), color="0.7", lw=0.8)
    ax.semilogy(nodes, np.maximum(errs.max(axis=0), 1e-17), "k-o", label="worst matrix")
    ax.axhline(1e-6, color="C3", ls="--", lw=1, label="1e-6")
    ax.set_xlabel("quadrature nodes")
    ax.set_ylabel("relative error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_dispro(table, path: Path) -> None:
    data = np.array(table.rows, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(data[:, 0], data[:, 1], ".", ms=3)
    ax.axhline(0.5, color="C3", ls="--", lw=1, label="1/2")
    ax.set_xlabel("chart distance")
    ax.set_ylabel("||P(y) - P(x)||")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


PLOTTERS = {
    "quadrature_convergence": plot_quadrature,
    "dispro_profile": plot_dispro,
}


def render_figures(report: CheckReport, outdir: str | Path) -> list[Path]:
    """One PNG per non-empty plot-data table."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    out = []
    for name, plot in PLOTTERS.items():
        table = report.tables.get(name)
        if table is None or not table.rows:
            continue
        path = outdir / f"{name}.png"
        plot(table, path)
        out.append(path)
    report.figures = [str(p) for p in out]
    return out
