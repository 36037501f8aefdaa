"""Deterministic SVG figures of a flown trial.

All figures are written with a fixed SVG hash salt and without date metadata,
so the same log and maps always produce byte-identical files.
"""

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Polygon  # noqa: E402
import numpy as np  # noqa: E402

from .world import OCCUPIED, UNKNOWN, layer_of  # noqa: E402

_RC = {"svg.hashsalt": "mppi-nav", "svg.fonttype": "none", "path.simplify": False}
_META = {"Date": None, "Creator": None}


def _save(fig, path):
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def _cell_edges(grid):
    nx, ny, _ = grid.dims
    xs = grid.origin[0] + grid.cell_size * np.arange(nx + 1)
    ys = grid.origin[1] + grid.cell_size * np.arange(ny + 1)
    return xs, ys


def _footprint(center, yaw, size):
    """Corners of the horizontal FoV rectangle rotated by ``yaw``."""
    hx, hy = size[0] / 2.0, size[1] / 2.0
    c, s = math.cos(yaw), math.sin(yaw)
    corners = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
    return [(center[0] + c * a - s * b, center[1] + s * a + c * b) for a, b in corners]


def plot_topdown(log, truth, local=None, goals=(), fov=None, path="topdown.svg"):
    """Obstacles, discovered cells, final FoV footprint and the flown path."""
    xs, ys = _cell_edges(truth)
    fig, ax = plt.subplots(figsize=(6, 6))
    occ = (truth.cells == OCCUPIED).any(axis=2).astype(float)
    ax.pcolormesh(xs, ys, occ.T, cmap="Greys", vmin=0, vmax=1.5, shading="flat")
    if local is not None:
        known = (local.cells != UNKNOWN).any(axis=2)
        seen_occ = (local.cells == OCCUPIED).any(axis=2)
        ax.pcolormesh(xs, ys, np.ma.masked_where(~known, seen_occ.astype(float)).T,
                      cmap="Blues", vmin=-0.5, vmax=1.0, alpha=0.45, shading="flat")
    X = np.asarray(log["x"])
    ax.plot(X[:, 0], X[:, 1], color="tab:red", lw=1.2, label="trajectory")
    ax.plot(X[0, 0], X[0, 1], "o", color="tab:green", label="start")
    for n, g in enumerate(goals):
        ax.plot(g[0], g[1], "*", ms=12, color="tab:orange")
        ax.annotate(f"G{n + 1}", (g[0], g[1]), textcoords="offset points", xytext=(5, 5))
    if fov is not None:
        ax.add_patch(Polygon(_footprint(X[-1, :2], X[-1, 5], fov), closed=True,
                             fill=False, ec="tab:blue", lw=1.0, label="FoV"))
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)


def plot_3d(log, truth, goals=(), path="trajectory3d.svg"):
    """Oblique 3-D view of occupied voxel centers and the flown path."""
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    idx = np.argwhere(truth.cells == OCCUPIED)
    if len(idx):
        # thin the point cloud: every other layer is plenty for a sketch
        idx = idx[idx[:, 2] % 2 == 0]
        centers = truth.origin + (idx + 0.5) * truth.resolution
        ax.scatter(centers[:, 0], centers[:, 1], centers[:, 2], s=1, c="0.6", depthshade=False)
    X = np.asarray(log["x"])
    ax.plot(X[:, 0], X[:, 1], X[:, 2], color="tab:red", lw=1.2)
    for g in goals:
        ax.scatter([g[0]], [g[1]], [g[2]], marker="*", s=80, c="tab:orange", depthshade=False)
    ax.view_init(elev=30, azim=-60)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_zlabel("z [m]")
    return _save(fig, path)


def plot_layer(log, grid, z, path="layer.svg"):
    """One horizontal slice of ``grid`` with the path points inside that layer."""
    ell = layer_of(grid, z)
    xs, ys = _cell_edges(grid)
    fig, ax = plt.subplots(figsize=(6, 6))
    sl = grid.layer(ell).astype(float)
    ax.pcolormesh(xs, ys, sl.T, cmap="RdYlGn_r", vmin=UNKNOWN, vmax=OCCUPIED, shading="flat")
    X = np.asarray(log["x"])
    lo = grid.origin[2] + ell * grid.layer_height
    inside = (X[:, 2] >= lo) & (X[:, 2] < lo + grid.layer_height)
    ax.plot(X[:, 0], X[:, 1], color="0.3", lw=0.6)
    ax.plot(X[inside, 0], X[inside, 1], ".", ms=2, color="tab:blue")
    ax.set_title(f"layer {ell}: z in [{lo:.2f}, {lo + grid.layer_height:.2f}) m")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    return _save(fig, path)


def emit_plots(log, truth, local, out_dir, goals=(), fov=None, z=None):
    """Write the three figures into ``out_dir``; returns their paths.

    ``z`` picks the slice for the layer figure (default: the first goal's
    altitude, else the flight's median altitude).
    """
    os.makedirs(out_dir, exist_ok=True)
    if z is None:
        z = goals[0][2] if len(goals) else float(np.median(np.asarray(log["x"])[:, 2]))
    shown = local if local is not None else truth
    z = min(max(z, shown.origin[2]), shown.origin[2] + shown.height - 1e-9)
    return [
        plot_topdown(log, truth, local, goals, fov, os.path.join(out_dir, "topdown.svg")),
        plot_3d(log, truth, goals, os.path.join(out_dir, "trajectory3d.svg")),
        plot_layer(log, shown, z, os.path.join(out_dir, "layer.svg")),
    ]
