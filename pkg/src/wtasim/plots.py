"""Engagement-plane figures rendered from a mission log.

Figures show the x-y plane: dashed protection circles around each asset,
target tracks with their intended straight-line paths, interceptor tracks,
dotted assignment lines at the chosen instant, and markers with time labels
at completed intercepts.
"""

from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.lines import Line2D
from matplotlib.patches import Circle

from .mission import MissionLog

__all__ = ["build_engagement_figure", "emit_plot"]


def _tracks(log: MissionLog, side: str, until: float):
    """Per-agent position history up to the cut time, plus last assignment."""
    out: dict[int, list[tuple[float, tuple[float, float, float], int | None]]] = {}
    for s in log.samples:
        if s.side == side and s.time <= until + 1e-9:
            out.setdefault(s.id, []).append((s.time, s.position, s.assigned_target))
    return out


def build_engagement_figure(log: MissionLog, time: float) -> "plt.Figure":
    """Snapshot of the engagement at the given mission time."""
    time = min(max(time, 0.0), log.final_time)
    fig, ax = plt.subplots(figsize=(7.5, 7.0))

    for asset in log.scenario.assets:
        x, y = asset.position[0], asset.position[1]
        ax.add_patch(
            Circle((x, y), asset.protection_radius, fill=False, linestyle="--",
                   edgecolor="black", linewidth=1.0)
        )
        ax.plot([x], [y], marker="s", color="black", markersize=6)
        ax.annotate(f"A{asset.id} ({asset.priority:.1f})", (x, y),
                    textcoords="offset points", xytext=(6, 6), fontsize=8)

    initial_target_pos = {t.id: t.initial_state.position for t in log.scenario.targets}
    assets_by_id = {a.id: a for a in log.scenario.assets}
    target_tracks = _tracks(log, "target", time)
    interceptor_tracks = _tracks(log, "interceptor", time)

    for t_id, track in sorted(target_tracks.items()):
        xs = [p[0] for _, p, _ in track]
        ys = [p[1] for _, p, _ in track]
        ax.plot(xs, ys, color="tab:red", linewidth=1.2)
        ax.plot([xs[-1]], [ys[-1]], marker="v", color="tab:red", markersize=5)
        p0 = initial_target_pos.get(t_id)
        spec = next(t for t in log.scenario.targets if t.id == t_id)
        asset = None
        if spec.intended_asset is not None:
            asset = assets_by_id.get(spec.intended_asset)
        if asset is None and log.scenario.assets:
            asset = log.scenario.assets[0]
        if p0 is not None and asset is not None:
            ax.plot([p0[0], asset.position[0]], [p0[1], asset.position[1]],
                    color="gray", linestyle=":", linewidth=0.7, alpha=0.6)

    for i_id, track in sorted(interceptor_tracks.items()):
        xs = [p[0] for _, p, _ in track]
        ys = [p[1] for _, p, _ in track]
        ax.plot(xs, ys, color="tab:blue", linewidth=1.2)
        ax.plot([xs[-1]], [ys[-1]], marker="^", color="tab:blue", markersize=5)
        final_time, final_pos, assigned = track[-1]
        if assigned is not None and assigned in target_tracks:
            tp = target_tracks[assigned][-1][1]
            ax.plot([final_pos[0], tp[0]], [final_pos[1], tp[1]],
                    color="tab:purple", linestyle=":", linewidth=0.8)

    for event in log.events:
        if event.kind == "intercept" and event.time <= time + 1e-9 and event.position:
            ax.plot([event.position[0]], [event.position[1]], marker="o",
                    markerfacecolor="none", markeredgecolor="tab:green", markersize=9)
            ax.annotate(f"T = {event.time:.0f} s", (event.position[0], event.position[1]),
                        textcoords="offset points", xytext=(6, -10), fontsize=7,
                        color="tab:green")

    handles = [
        Line2D([], [], color="tab:blue", label="interceptors"),
        Line2D([], [], color="tab:red", label="targets"),
        Line2D([], [], color="tab:purple", linestyle=":", label="assignments"),
        Line2D([], [], color="tab:green", marker="o", markerfacecolor="none",
               linestyle="none", label="intercepts"),
        Line2D([], [], color="black", linestyle="--", label="protection zones"),
    ]
    ax.legend(handles=handles, loc="upper right", fontsize=8)
    ax.set_xlabel("x [km]")
    ax.set_ylabel("y [km]")
    ax.set_title(f"{log.scenario.name} ({log.assigner}), t = {time:.0f} s")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, linewidth=0.3, alpha=0.5)
    fig.tight_layout()
    return fig


def emit_plot(log: MissionLog, time: float, path: str) -> None:
    """Render the engagement figure to a file (format from the extension)."""
    fig = build_engagement_figure(log, time)
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    suffix = os.path.splitext(path)[1] or ".svg"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=suffix)
    os.close(fd)
    try:
        fig.savefig(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)
