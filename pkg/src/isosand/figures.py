"""Matplotlib figure emitters for states, Green fields and limit shapes.

Every figure is written to file (SVG by default).  Plot layers carry gid
tags ("amount-heatmap", "shape-boundary", "predicted-curve",
"empirical-boundary", ...) so the emitted SVG keeps the layers as named
groups; styling beyond that is presentation-only.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .isograph import IsoradialGraph
from .sandpile import SandpileState, shape

_SAVE_KW = {"metadata": {"Date": None}, "bbox_inches": "tight"}

# presentation cap: scatter layers are strided down to keep SVGs compact
MAX_POINTS = 60_000


def _stride(n: int) -> int:
    return max(1, n // MAX_POINTS + (n % MAX_POINTS > 0))


def _shape_hull_points(g: IsoradialGraph, state: SandpileState):
    """Shape boundary polyline: outermost shape vertex per angular sector."""
    hot = shape(state)
    if len(hot) == 0:
        return None
    rel = g.positions[hot] - g.positions[state.x0]
    ang = np.angle(rel) % (2 * math.pi)
    sectors = 180
    which = np.minimum((ang / (2 * math.pi) * sectors).astype(int), sectors - 1)
    pts = []
    for b in range(sectors):
        sel = which == b
        if sel.any():
            far = np.argmax(np.abs(rel[sel]))
            pts.append(rel[sel][far])
    pts.append(pts[0])
    return np.array(pts)


def save_state_figure(path, g: IsoradialGraph, state: SandpileState) -> None:
    """Amount and odometer heatmaps with the shape boundary polyline."""
    rel = g.positions - g.positions[state.x0]
    step = _stride(len(rel))
    fig, axes = plt.subplots(1, 2, figsize=(11, 5), sharex=True, sharey=True)
    for ax, field, name in ((axes[0], state.amounts, "amount"),
                            (axes[1], state.odometer, "odometer")):
        sc = ax.scatter(rel.real[::step], rel.imag[::step], c=field[::step], s=4,
                        cmap="viridis", gid=f"{name}-heatmap", linewidths=0)
        fig.colorbar(sc, ax=ax, shrink=0.8)
        ax.set_title(name)
        ax.set_aspect("equal")
        hull = _shape_hull_points(g, state)
        if hull is not None:
            ax.plot(hull.real, hull.imag, "r-", lw=0.8, gid="shape-boundary",
                    label="shape boundary")
    axes[0].legend(loc="upper right", fontsize=8)
    fig.suptitle(f"N = {state.N:g}")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_green_figure(path, g: IsoradialGraph, gf) -> None:
    """log10 of the Green function over the solve region."""
    region = gf.region
    rel = g.positions[region] - g.positions[gf.origin]
    vals = np.log10(np.maximum(gf.Gr[region], 1e-300))
    step = _stride(len(rel))
    fig, ax = plt.subplots(figsize=(6, 5))
    sc = ax.scatter(rel.real[::step], rel.imag[::step], c=vals[::step], s=4,
                    cmap="magma", gid="green-heatmap", linewidths=0)
    fig.colorbar(sc, ax=ax, label="log10 Gr")
    ax.set_aspect("equal")
    ax.set_title("Green function")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_overlay_figure(path, curve, radii_report, log_n: float) -> None:
    """Predicted plane limit shape over the rescaled empirical boundary."""
    fig, ax = plt.subplots(figsize=(6, 6))
    ok = ~np.isnan(curve.radius_plane)
    ang = np.concatenate([curve.angles[ok], curve.angles[ok][:1]])
    rad = np.concatenate([curve.radius_plane[ok], curve.radius_plane[ok][:1]])
    ax.plot(rad * np.cos(ang), rad * np.sin(ang), "b-", lw=1.4,
            gid="predicted-curve", label="predicted (per log N)")
    if radii_report is not None:
        sel = radii_report.counts > 0
        a = radii_report.angles[sel]
        r = radii_report.r_plane_max[sel] / log_n
        ax.plot(r * np.cos(a), r * np.sin(a), "k.", ms=6,
                gid="empirical-boundary", label="empirical / log N")
    ax.set_aspect("equal")
    ax.legend(fontsize=8)
    ax.set_title(f"limit shape, k = {curve.k}")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
