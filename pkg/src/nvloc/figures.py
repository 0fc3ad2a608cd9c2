"""Deterministic SVG figures: field heatmap, position contours, line fits."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .wire_field import FieldGrid, WireGeometry  # noqa: E402

_RC = {"svg.hashsalt": "nvloc", "svg.fonttype": "none", "font.size": 9}


def _extent(values):
    lo, hi = float(values[0]), float(values[-1])
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _save(fig, path, description=None):
    path = Path(path)
    meta = {"Date": None, "Creator": "nvloc"}
    if description:
        meta["Description"] = " ".join(f"{k}={v}" for k, v in sorted(description.items()))
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)
    return path


def _draw_field(ax, grid: FieldGrid, g: WireGeometry):
    x0, x1 = _extent(grid.x * 1e9)
    z0, z1 = _extent(grid.z * 1e9)
    im = ax.imshow(
        grid.magnitude * 1e3,
        origin="lower",
        extent=(x0, x1, z0, z1),
        aspect="auto",
        cmap="viridis",
        interpolation="nearest",
    )
    w, t = g.width * 1e9, g.thickness * 1e9
    ax.add_patch(plt.Rectangle((-w / 2, 0.0), w, t, fill=False, edgecolor="white", linewidth=1.0))
    ax.axhline(0.0, color="red", linewidth=1.0)
    ax.set_xlabel("x' (nm)")
    ax.set_ylabel("z' (nm)")
    ax.set_xlim(x0, x1)
    ax.set_ylim(z0, z1)
    return im


def field_map_svg(path, grid: FieldGrid, g: WireGeometry, title=None, description=None):
    """Heatmap of |B| in mT with the wire cross-section and the surface line."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        im = _draw_field(ax, grid, g)
        fig.colorbar(im, ax=ax, label="|B| (mT)")
        ax.set_title(title or f"|B| at {grid.current * 1e3:g} mA")
        fig.tight_layout()
        return _save(fig, path, description)


def locate_svg(path, grid: FieldGrid, g: WireGeometry, contours, estimate=None, title=None, description=None):
    """Field heatmap with position-PDF contours ``{mass: [lines in m]}`` overlaid."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        im = _draw_field(ax, grid, g)
        fig.colorbar(im, ax=ax, label="|B| (mT)")
        styles = ["-", "--", ":"]
        for k, (mass, lines) in enumerate(sorted(contours.items())):
            for line in lines:
                line = np.asarray(line) * 1e9
                ax.plot(line[:, 0], line[:, 1], color="white", linestyle=styles[k % 3], linewidth=0.8)
        if estimate is not None:
            ax.plot([estimate[0] * 1e9], [estimate[1] * 1e9], marker="+", color="white", markersize=8)
        ax.set_title(title or "position probability")
        fig.tight_layout()
        return _save(fig, path, description)


def line_fit_svg(path, x, y, yerr, fit, xlabel, ylabel, title=None, description=None):
    """Data points with error bars and the fitted line ``fit(x)``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.errorbar(x, y, yerr=yerr, fmt="s", color="black", markersize=4, capsize=2)
        xs = np.linspace(min(x.min(), 0.0), max(x.max(), 0.0), 101)
        ax.plot(xs, fit(xs), color="tab:red", linewidth=1.0)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path, description)
