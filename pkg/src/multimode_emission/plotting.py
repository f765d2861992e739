"""Figures written next to the CSV outputs.

Every function takes an output path, draws one figure with the Agg
backend and closes it.  Nothing here is needed for the numerical results.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import units  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_modes(path, decomposition, n_show: int = 4):
    """Occupations and |v_i(t)|^2 of the leading temporal modes."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.5))
    occ = decomposition.occupations
    k = min(len(occ), 10)
    ax0.bar(np.arange(1, k + 1), occ[:k], color="tab:blue")
    ax0.set_xlabel("mode index i")
    ax0.set_ylabel("occupation n_i")
    ax0.set_xticks(np.arange(1, k + 1))
    t = decomposition.grid.samples
    for i in range(min(n_show, len(occ))):
        ax1.plot(t, np.abs(decomposition.modes[i]) ** 2, label=f"v{i + 1}, n={occ[i]:.3f}")
    ax1.set_xlabel("t (us)")
    ax1.set_ylabel("|v_i(t)|^2 (1/us)")
    if len(occ):
        ax1.legend(fontsize=8)
    _save(fig, path)


def plot_spectrogram(path, spec):
    fig, ax = plt.subplots(figsize=(6, 4))
    f_mhz = units.rad_per_us_to_mhz(spec.omegas)
    im = ax.pcolormesh(spec.times, f_mhz, spec.intensity, shading="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label="I(w, t)")
    ax.set_xlabel("t (us)")
    ax.set_ylabel("frequency (MHz)")
    _save(fig, path)


def plot_wigner(path, x, p, w, title=""):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    lim = float(np.max(np.abs(w))) or 1.0
    im = ax.pcolormesh(x, p, w, shading="auto", cmap="RdBu_r", vmin=-lim, vmax=lim)
    fig.colorbar(im, ax=ax, label="W(x, p)")
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_sweep(path, x, columns: dict, xlabel: str):
    """One panel per summary column against the swept parameter."""
    names = [k for k, v in columns.items() if np.any(np.isfinite(np.asarray(v, dtype=float)))]
    if not names:
        return
    n = len(names)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3), squeeze=False)
    for ax, name in zip(axes[0], names):
        ax.plot(x, np.asarray(columns[name], dtype=float), "o-")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(name)
    _save(fig, path)


def plot_drive_rate(path, t0s, fidelities):
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.semilogx(t0s, fidelities, "o-")
    ax.set_xlabel("t0 (us)")
    ax.set_ylabel("fidelity")
    _save(fig, path)
