"""Deterministic SVG figures.

Output depends only on the data: the SVG id salt and fonts are fixed and the
creation date is omitted, so identical input gives byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "nhssb",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 100,
    "path.simplify": False,
}


def _save(fig, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def _no_data(ax):
    ax.text(0.5, 0.5, "no data", ha="center", va="center", transform=ax.transAxes)


def plot_series(path, curves: Sequence[dict], xlabel: str, ylabel: str, title: str = "",
                hlines: Sequence[float] = ()) -> Path:
    """``curves`` holds dicts with ``x``, ``y`` and optional ``err``, ``label``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        drawn = False
        for c in curves:
            x = np.asarray(c.get("x", []), float)
            if x.size == 0:
                continue
            y = np.asarray(c["y"], float)
            err = c.get("err")
            ax.errorbar(x, y, yerr=None if err is None else np.asarray(err, float),
                        marker=c.get("marker", "o"), ms=3, lw=1, capsize=2, label=c.get("label"))
            drawn = True
        for h in hlines:
            ax.axhline(h, color="0.6", lw=0.6, ls="--")
        if not drawn:
            _no_data(ax)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if drawn and any(c.get("label") for c in curves):
            ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_winding(path, curves: Sequence[dict], xlabel: str = "T") -> Path:
    """Winding staircase with integer guides at 0, +-2, +-4."""
    return plot_series(path, curves, xlabel, "w", hlines=(-4, -2, 0, 2, 4))


def plot_histogram(path, hist, title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if hist.n_samples == 0:
            _no_data(ax)
        else:
            ax.pcolormesh(hist.edges_re, hist.edges_im, hist.density.T, cmap="viridis", shading="flat")
        ax.set_xlabel("Re v")
        ax.set_ylabel("Im v")
        ax.set_title(title or f"symmetry score {hist.symmetry_score:.3f}")
        fig.tight_layout()
        return _save(fig, path)


def plot_domain_wall(path, scan) -> Path:
    pts = np.asarray(scan.points, float).reshape(-1, 2)
    xlabel = "r" if scan.mode.value.startswith("fixed_L") else "L"
    curves = [{"x": pts[:, 0], "y": pts[:, 1], "label": "dE", "marker": "."}]
    if scan.fit is not None and np.isfinite(scan.fit.slope) and pts.size:
        curves.append({"x": pts[:, 0], "y": scan.fit.intercept + scan.fit.slope * pts[:, 0],
                       "label": f"fit R2={scan.fit.r2:.4f}", "marker": ""})
    return plot_series(path, curves, xlabel, "E(X) - E(X0)")


def plot_phase_diagram(path, rows: Sequence[dict], boundary: np.ndarray | None = None,
                       value: str = "abs_m") -> Path:
    """Colour map of ``value`` over the ``U``-``T`` grid with an optional
    ``(U, T_c)`` boundary overlay."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if not rows:
            _no_data(ax)
        else:
            U = np.array(sorted({r["U"] for r in rows}))
            T = np.array(sorted({r["T"] for r in rows}))
            Z = np.full((T.size, U.size), np.nan)
            for r in rows:
                Z[np.searchsorted(T, r["T"]), np.searchsorted(U, r["U"])] = r[value]
            mesh = ax.pcolormesh(U, T, Z, shading="nearest", cmap="viridis", vmin=0, vmax=1)
            fig.colorbar(mesh, ax=ax, label=value)
        if boundary is not None and len(boundary):
            b = np.asarray(boundary, float)
            ax.plot(b[:, 0], b[:, 1], "w-", lw=1.5, label="mean field")
            ax.legend(frameon=False)
        ax.set_xlabel("U")
        ax.set_ylabel("T")
        fig.tight_layout()
        return _save(fig, path)
