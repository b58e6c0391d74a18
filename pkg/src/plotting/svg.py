"""Static SVG rendering of simulated trajectories.

Output bytes depend only on the inputs: the SVG backend runs with a fixed
hash salt and without a date stamp. Each violation entry becomes its own
marker group with id ``violation-<k>``.
"""

import io
from collections.abc import Sequence

import matplotlib
import numpy as np
import structlog
from matplotlib.figure import Figure
from matplotlib.patches import Circle

from ..simulation.simulator import TrajectoryPoint, count_step_violations

logger = structlog.get_logger(__name__)

SVG_RC = {
    "svg.hashsalt": "learned-safe-init",
    "svg.fonttype": "none",
    "path.simplify": False,
}


def violations_from_trajectories(
    trajectories: Sequence[Sequence[TrajectoryPoint]], rc: float
) -> list[tuple[float, int, int]]:
    """Recompute the violation log from recorded instants, counting active rows only."""
    n_instants = min((len(tr) for tr in trajectories), default=0)
    log = []
    for k in range(n_instants):
        states = np.array([[tr[k].state.qx, tr[k].state.qy] for tr in trajectories])
        active = [tr[k].active for tr in trajectories]
        for i, j in count_step_violations(states, active, rc):
            log.append((trajectories[0][k].t, i, j))
    return log


def _instant_index(trajectories: Sequence[Sequence[TrajectoryPoint]]) -> dict[float, int]:
    if not trajectories:
        return {}
    return {round(pt.t, 9): k for k, pt in enumerate(trajectories[0])}


def render_trajectories(
    trajectories: Sequence[Sequence[TrajectoryPoint]],
    rc: float,
    violation_log: Sequence[tuple[float, int, int]] = (),
    goals: Sequence[Sequence[float]] | None = None,
    title: str | None = None,
) -> str:
    """Render paths, goals, danger zones and violation markers as SVG text.

    Args:
        trajectories: Per-vehicle recorded points
        rc: Danger-zone radius drawn around each start position
        violation_log: (t, i, j) entries; one marker each, at the pair midpoint
        goals: Optional goal positions
        title: Optional figure title

    Returns:
        SVG document
    """
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot(1, 1, 1)
    colors = matplotlib.colormaps["tab10"]

    for i, tr in enumerate(trajectories):
        if not tr:
            continue
        color = colors(i % 10)
        xs = [pt.state.qx for pt in tr]
        ys = [pt.state.qy for pt in tr]
        ax.plot(xs, ys, color=color, linewidth=1.2, gid=f"path-{i}")
        ax.add_patch(
            Circle(
                (xs[0], ys[0]),
                rc,
                fill=False,
                linestyle="--",
                edgecolor=color,
                linewidth=0.8,
                gid=f"danger-zone-{i}",
            )
        )
        if goals is not None:
            ax.plot(
                [goals[i][0]],
                [goals[i][1]],
                marker="*",
                markersize=10,
                color=color,
                linestyle="none",
                gid=f"goal-{i}",
            )

    index = _instant_index(trajectories)
    for k, (t, i, j) in enumerate(violation_log):
        step = index.get(round(t, 9))
        if step is None:
            logger.warning("Violation time not found in trajectories", t=t)
            continue
        a, b = trajectories[i][step].state, trajectories[j][step].state
        ax.plot(
            [(a.qx + b.qx) / 2.0],
            [(a.qy + b.qy) / 2.0],
            marker="x",
            markersize=8,
            color="red",
            linestyle="none",
            gid=f"violation-{k}",
        )

    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.grid(True, linewidth=0.3)
    if title:
        ax.set_title(title)

    buf = io.BytesIO()
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue().decode("utf-8")
