"""PNG figures for simulation reports.

Uses the non-interactive Agg backend and strips timestamp/software
metadata so the same data always produces the same bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sim.integrator import Trajectory  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 3.2),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.0,
}
_METADATA = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_METADATA)
    plt.close(fig)
    return path


def _components(ax, t, v, prefix, ylabel):
    for c in range(v.shape[1]):
        ax.plot(t, v[:, c], label=f"{prefix}{c + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend(loc="upper right")


def trajectory_figures(tr: Trajectory, outdir, stem: str = "run0") -> list[Path]:
    """State, controlled output, measured output and the two mode signals."""
    outdir = Path(outdir)
    paths = []
    with plt.rc_context(STYLE):
        for name, v, label in (("x", tr.x, "state"), ("z", tr.z, "controlled output"),
                               ("y", tr.y, "measured output")):
            fig, ax = plt.subplots()
            _components(ax, tr.t, v, name, label)
            paths.append(_save(fig, outdir / f"{stem}_{name}.png"))
        fig, axes = plt.subplots(2, 1, sharex=True, figsize=(7.0, 3.6))
        for ax, v, label in ((axes[0], tr.r, "true mode r"), (axes[1], tr.robs, "observed mode")):
            ax.step(tr.t, v + 1, where="post")
            ax.set_ylabel(label)
            ax.set_yticks(np.arange(1, max(tr.r.max(), tr.robs.max()) + 2))
        axes[1].set_xlabel("t")
        paths.append(_save(fig, outdir / f"{stem}_modes.png"))
    return paths


def energy_figure(horizons: Sequence[float], means: Sequence[float], ses: Sequence[float], outdir,
                  name: str = "state_energy.png") -> Path:
    """Monte Carlo ``E int |x|^2`` against the horizon, with 2-SE bars."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(horizons, means, yerr=2 * np.asarray(ses), marker="o", capsize=3)
        ax.set_xlabel("horizon T")
        ax.set_ylabel("E int_0^T |x|^2 dt")
        return _save(fig, Path(outdir) / name)
