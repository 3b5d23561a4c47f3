"""Figure rendering for report bundles.

Figures are a presentation layer over the CSV columns: nothing here
computes statistics, it only draws what the bundle already carries.
All rendering uses the Agg backend so it works headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import IoError  # noqa: E402
from .reporting import ReportBundle  # noqa: E402

_MAX_POINTS = 2000
_DPI = 120

_LINE_STYLES = {
    "target": dict(color="C1", lw=1.5),
    "oracle": dict(color="C2", lw=1.0, alpha=0.8),
    "iid_empirical": dict(color="C3", lw=1.0, ls="--"),
    "target_lower": dict(color="C1", lw=1.0, ls="--"),
    "target_upper": dict(color="C1", lw=1.0, ls=":"),
}


def _downsample(n: int) -> np.ndarray:
    if n <= _MAX_POINTS:
        return np.arange(n)
    idx = np.linspace(0, n - 1, _MAX_POINTS)
    return np.unique(idx.astype(np.intp))


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    try:
        fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    except OSError as exc:
        raise IoError(f"cannot write '{path}': {exc}")
    finally:
        plt.close(fig)
    return path


def _render_cdf_figure(bundle: ReportBundle, out_dir: str) -> str:
    experiment = bundle.params["experiment"]
    arrays = {name: np.asarray(arr) for name, arr in bundle.columns}
    idx = _downsample(arrays["r"].size)
    r = arrays["r"][idx]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.step(r, arrays["empirical"][idx], where="post", color="C0",
            lw=1.2, label="empirical")
    for name in arrays:
        if name in ("r", "empirical"):
            continue
        style = _LINE_STYLES.get(name, dict(lw=1.0))
        ax.plot(r, arrays[name][idx], label=name, **style)
    ax.set_xlabel("r")
    ax.set_ylabel("CDF")
    ax.set_ylim(-0.02, 1.02)
    k = bundle.params.get("k", 1)
    ax.set_title(f"{experiment}: rescaled k={k} maximum, "
                 f"{bundle.summary['samples']} trajectories")
    ax.legend(loc="lower right", fontsize=9)
    ax.grid(alpha=0.25)
    return _save(fig, out_dir, f"{experiment}-cdf.png")


def _render_tail_figure(bundle: ReportBundle, out_dir: str) -> str:
    arrays = {name: np.asarray(arr) for name, arr in bundle.columns}
    z = arrays["z"]
    emp = arrays["empirical_survival"]
    tgt = arrays["target_survival"]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    pos = emp > 0
    ax.semilogy(z[pos], emp[pos], color="C0", lw=1.2, label="empirical")
    ax.semilogy(z, tgt, color="C1", lw=1.5, ls="--", label="target")
    ax.set_xlabel("z")
    ax.set_ylabel("survival probability")
    ax.set_title(f"tail: shortest-vector exceedances, "
                 f"{bundle.summary['samples']} samples")
    ax.legend(loc="upper right", fontsize=9)
    ax.grid(alpha=0.25, which="both")
    return _save(fig, out_dir, "tail-survival.png")


def render_figures(bundle: ReportBundle, out_dir: str) -> list[str]:
    """Render the figures a bundle supports; returns the written paths."""
    if bundle.columns is None:
        return []
    names = [name for name, _ in bundle.columns]
    if names[0] == "z":
        return [_render_tail_figure(bundle, out_dir)]
    return [_render_cdf_figure(bundle, out_dir)]


def render_fd_scatter(x: np.ndarray, y: np.ndarray, out_dir: str) -> str:
    """Scatter of sampled lattice shapes in the modular fundamental domain."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    idx = _downsample(x.size)
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    ax.scatter(x[idx], y[idx], s=4, alpha=0.4, color="C0", lw=0)
    bx = np.linspace(-0.5, 0.5, 200)
    ax.plot(bx, np.sqrt(np.maximum(1.0 - bx**2, 0.0)), color="C1", lw=1.0)
    ax.axvline(-0.5, color="C1", lw=1.0)
    ax.axvline(0.5, color="C1", lw=1.0)
    ax.set_xlim(-0.7, 0.7)
    ax.set_ylim(0.0, max(3.0, float(np.percentile(y, 99.5)) * 1.1))
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"Haar sample, {x.size} lattices")
    ax.grid(alpha=0.25)
    return _save(fig, out_dir, "haar-sample-fd.png")
