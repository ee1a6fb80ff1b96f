"""Minimal SVG line charts of a run (states and barrier margins against time)."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def trajectory_svg(trajectory, oracle_samples=(), max_points=1000) -> str:
    """Deterministic SVG text: one panel per state component plus a margin panel.

    Lines are thinned to at most ``max_points`` samples (the last one is kept).
    """
    K, n, m = trajectory.x.shape
    idx = np.unique(np.append(np.arange(0, K, max(1, -(-K // max_points))), K - 1))
    t, x = trajectory.t[idx], trajectory.x[idx]
    with plt.rc_context({"svg.hashsalt": "tvswarm", "svg.fonttype": "none", "path.simplify": False}):
        fig, axes = plt.subplots(m + 1, 1, figsize=(7, 2.2 * (m + 1)), sharex=True)
        axes = np.atleast_1d(axes)
        for k in range(m):
            ax = axes[k]
            ax.plot(t, x[:, :, k], linewidth=0.8)
            if len(oracle_samples):
                ts = [s.t for s in oracle_samples]
                ys = [s.y_star[k] for s in oracle_samples]
                ax.plot(ts, ys, "k--", linewidth=1.0, label="optimum")
                ax.legend(loc="upper right", fontsize=7)
            ax.set_ylabel(f"x_{k + 1}")
        ax = axes[-1]
        marg = trajectory.margins.reshape(K, -1)[idx]
        if marg.shape[1]:
            ax.plot(t, marg, linewidth=0.8)
        ax.set_ylabel("g - 1/rho")
        ax.set_xlabel("t")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()
