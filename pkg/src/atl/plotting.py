"""Report figures written to files (PNG by default)."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import ScalarField  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _slice2d(field: ScalarField):
    """2D fields as-is; 3D fields cut at the node of largest value, normal to the last axis."""
    vals = field.values
    axes = field.grid.axes()
    if field.grid.dimension == 2:
        return vals, axes[0], axes[1], ""
    finite = np.where(np.isfinite(vals), vals, -np.inf)
    k = int(np.unravel_index(np.argmax(finite), vals.shape)[2])
    return vals[:, :, k], axes[0], axes[1], f" (z = {axes[2][k]:.3f})"


def plot_field(field: ScalarField, path, title: str | None = None, levels: int = 12) -> Path:
    vals, x, y, suffix = _slice2d(field)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.2, 4.2))
        masked = np.ma.masked_invalid(vals.T)
        im = ax.pcolormesh(x, y, masked, shading="nearest", cmap="viridis")
        if np.isfinite(vals).sum() > 4 and np.nanmax(vals) > np.nanmin(vals):
            ax.contour(x, y, masked, levels=levels, colors="w", linewidths=0.5)
        fig.colorbar(im, ax=ax, label=field.label or "value")
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title((title or field.label or "field") + suffix)
        ax.grid(False)
        return _save(fig, path)


def plot_convergence(spacings, errors, path, title: str = "max-norm error vs oracle") -> Path:
    h = np.asarray(spacings, float)
    e = np.asarray(errors, float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.loglog(h, e, "o-", label="measured")
        ref = e[0] * (h / h[0]) ** 2
        ax.loglog(h, ref, "k--", lw=0.8, label="slope 2")
        ax.set_xlabel("h")
        ax.set_ylabel("L-inf error")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_game_sweep(epsilons, values, reference: float, path) -> Path:
    eps = np.asarray(epsilons, float)
    err = np.abs(np.asarray(values, float) - reference)
    with plt.rc_context(STYLE):
        fig, (a0, a1) = plt.subplots(1, 2, figsize=(8, 3.4))
        a0.plot(eps, values, "o-")
        a0.axhline(reference, color="k", ls="--", lw=0.8, label="arrival time")
        a0.set_xlabel("epsilon")
        a0.set_ylabel("u_eps at probe")
        a0.legend()
        a1.loglog(eps, np.maximum(err, 1e-16), "s-")
        a1.set_xlabel("epsilon")
        a1.set_ylabel("|u_eps - u|")
        return _save(fig, path)


def plot_profile(fits: dict, k: int, path) -> Path:
    """Fitted ``r / sqrt(tau)`` per critical point against the cylinder value ``sqrt(2k)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.5))
        for key, rows in fits.items():
            tau = [r.tau for r in rows]
            ax.errorbar(tau, [r.mean_ratio for r in rows], yerr=[r.spread for r in rows],
                        fmt="o-", capsize=2, label=key)
        target = math.sqrt(2 * k)
        ax.axhline(target, color="k", ls="--", lw=0.8)
        ax.axhspan(0.9 * target, 1.1 * target, color="0.85", alpha=0.5)
        ax.set_xscale("log")
        ax.set_xlabel("tau")
        ax.set_ylabel("r / sqrt(tau)")
        ax.legend(fontsize=7)
        return _save(fig, path)


def plot_axis_decay(tables: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.5))
        for key, rows in tables.items():
            ax.loglog([r.delta for r in rows], [max(r.ratio, 1e-16) for r in rows], "o-", label=key)
        ax.set_xlabel("delta")
        ax.set_ylabel("|grad u(p + delta v)| / delta")
        ax.legend(fontsize=7)
        return _save(fig, path)


def plot_spectra(records, path) -> Path:
    """Hessian eigenvalues at each critical point with the targets 0 and -1/k."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for n, rec in enumerate(records):
            ax.plot([n] * len(rec.eigenvalues), rec.eigenvalues, "o", ms=4)
        kmax = records[0].n if records else 2
        for k in range(1, kmax + 1):
            ax.axhline(-1.0 / k, color="0.5", ls=":", lw=0.8)
        ax.axhline(0.0, color="0.5", ls=":", lw=0.8)
        ax.set_xlabel("critical point")
        ax.set_ylabel("Hessian eigenvalue")
        return _save(fig, path)
