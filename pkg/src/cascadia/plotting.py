"""Figures for a recorded trace: mode timelines, tank water balance, power flows."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cascade import DEGRADED_MODES  # noqa: E402
from .scenario import Trace  # noqa: E402

STYLE = {
    "figure.figsize": (8.0, 4.5),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 9,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_modes(trace: Trace, path) -> Path:
    t = np.asarray(trace.data["t"])
    comps = [c for c in trace.nodes_with_modes()]
    fig, axes = plt.subplots(len(comps), 1, sharex=True, figsize=(8.0, 1.1 * len(comps) + 0.8))
    for ax, comp in zip(np.atleast_1d(axes), comps):
        modes = trace.data[f"{comp}.mode"]
        names = list(dict.fromkeys(modes))
        level = np.array([names.index(m) for m in modes])
        ax.step(t, level, where="post", color="k", lw=1.0)
        bad = np.array([m in DEGRADED_MODES.get(comp, ()) for m in modes])
        ax.fill_between(t, -0.4, len(names) - 0.6, where=bad, step="post", color="tab:red", alpha=0.2)
        ax.set_yticks(range(len(names)), names)
        ax.set_ylim(-0.5, len(names) - 0.5)
        ax.set_ylabel(comp, rotation=0, ha="right", va="center")
    np.atleast_1d(axes)[-1].set_xlabel("t [min]")
    return _save(fig, path)


def plot_tank(trace: Trace, path) -> Path:
    d = trace.data
    t = np.asarray(d["t"])
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True)
    ax1.plot(t, d["tank.x_v"], label="x_v")
    ax1.plot(t, d["pump.v_tank"], lw=0.8, ls="--", label="v_tank at pump")
    ax1.set_ylabel("volume [m3]")
    ax1.legend(loc="best")
    ax2.step(t, d["tank.w_s"], where="post", label="w_s")
    ax2.step(t, d["tank.w_d"], where="post", label="w_d")
    ax2.set_ylabel("rate [m3/min]")
    ax2.set_xlabel("t [min]")
    ax2.legend(loc="best")
    return _save(fig, path)


def plot_power(trace: Trace, path) -> Path:
    d = trace.data
    t = np.asarray(d["t"])
    fig, ax = plt.subplots()
    for col, label in (("substation.p_d", "p_d"), ("substation.p_s", "p_s"), ("substation.p_m", "p_m")):
        ax.plot(t, d[col], lw=1.0, label=label)
    ax.set_ylabel("power [kW]")
    ax.set_xlabel("t [min]")
    ax.legend(loc="best")
    return _save(fig, path)


def render_figures(trace: Trace, outdir) -> list[Path]:
    out = Path(outdir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        return [
            plot_modes(trace, out / "modes.png"),
            plot_tank(trace, out / "tank.png"),
            plot_power(trace, out / "power.png"),
        ]
