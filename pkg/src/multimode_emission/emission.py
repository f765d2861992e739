"""Output-field correlation, temporal-mode decomposition and spectra.

Conventions: ``G.values[i, j] = Tr[x^dag L(t_j, t_i)[x rho(t_i)]]`` for
``t_j >= t_i`` and Hermitian completion below the diagonal.  Eigenvectors of
the quadrature-weighted matrix are the mode functions, so that
``G = sum_i n_i v_i v_i^dag``; a photon leaving at carrier frequency w has
``v(t) ~ exp(-i w t)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .dynamics import LindbladModel, TimeGrid, co_propagate
from .errors import (
    DataIntegrityError,
    DiagnosticsWarning,
    IntegrationError,
    SpaceMismatchError,
    UndefinedRatioError,
)
from .quantum import Operator, as_density

RESIDUAL_THRESHOLD = 1e-3


def trapezoid_weights(samples) -> np.ndarray:
    t = np.asarray(samples, dtype=float)
    w = np.empty_like(t)
    dt = np.diff(t)
    w[0] = dt[0] / 2
    w[-1] = dt[-1] / 2
    w[1:-1] = (dt[:-1] + dt[1:]) / 2
    return w


@dataclass
class CorrelationMatrix:
    grid: TimeGrid
    values: np.ndarray
    weights: np.ndarray
    metadata: dict = field(default_factory=dict)

    HERMITIAN_TOL = 1e-9

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        n = len(self.grid)
        if v.shape != (n, n):
            raise DataIntegrityError(f"correlation matrix shape {v.shape} does not match grid of {n}")
        dev = np.max(np.abs(v - v.conj().T), initial=0.0)
        if dev > self.HERMITIAN_TOL:
            raise DataIntegrityError(f"correlation matrix not Hermitian (deviation {dev:.3g})")
        d = np.diag(v).real
        if np.min(d, initial=0.0) < -1e-9:
            raise DataIntegrityError(f"negative photon flux {np.min(d):.3g} on the diagonal")
        self.values = v
        self.weights = np.asarray(self.weights, dtype=float)

    @classmethod
    def from_function(cls, grid: TimeGrid, func) -> "CorrelationMatrix":
        """Tabulate G(t1, t2) from a callable; used for synthetic and analytic kernels."""
        t = grid.samples
        v = func(t[:, None], t[None, :]) * np.ones((t.size, t.size))
        return cls(grid, v, trapezoid_weights(t))

    @property
    def times(self):
        return self.grid.samples

    def flux(self) -> np.ndarray:
        """Photon flux G(t, t)."""
        return np.diag(self.values).real


def _source_occupation(model: LindbladModel, rho: np.ndarray) -> float:
    """Total photon number in the model's source oscillators."""
    from .quantum import annihilation, embed

    slots = model.labels.get("source_slots", range(model.space.n_subsystems))
    total = 0.0
    for s in slots:
        a = embed(annihilation(model.space.subsystem_dims[s]), model.space, s)
        total += float(np.real(np.trace(a.dag().matrix @ a.matrix @ rho)))
    return total


def first_order_correlation(
    model: LindbladModel,
    rho0,
    grid: TimeGrid,
    output_op: Operator,
    residual_threshold: float = RESIDUAL_THRESHOLD,
) -> CorrelationMatrix:
    """Two-time correlation of the output field by the quantum regression theorem.

    All regression matrices x rho(t_i) are carried forward in one batched
    integration together with rho itself, so each is propagated exactly once.
    """
    if output_op.space != model.space:
        raise SpaceMismatchError(f"output operator on {output_op.space!r}, model on {model.space!r}")
    rho0 = as_density(rho0)
    x = np.asarray(output_op.matrix)
    xc = x.conj()
    n = len(grid)
    g = np.zeros((n, n), dtype=complex)
    diag_imag = [0.0]

    def spawn(i, rho):
        return x @ rho

    def observe(i, stack):
        # rows 1..i+1 of the stack were spawned at samples 0..i
        vals = np.einsum("kl,bkl->b", xc, stack[1:])
        g[: i + 1, i] = vals
        diag_imag[0] = max(diag_imag[0], abs(vals[-1].imag))

    try:
        states, stats = co_propagate(model, rho0, grid, spawn, observe)
    except IntegrationError as exc:
        t = exc.time
        done = int(np.searchsorted(grid.samples, t))
        raise IntegrationError(
            f"regression propagation failed for (t_i, t_j) with t_i <= {grid.samples[max(done - 1, 0)]:.6g}"
            f" and t_j = {t:.6g}: {exc}",
            t,
        ) from exc

    upper = np.triu(g, 1)
    values = upper + upper.conj().T + np.diag(np.diag(g).real)
    residual = _source_occupation(model, states[-1])
    initial = _source_occupation(model, np.asarray(rho0.matrix))
    meta = {
        "residual_source_occupation": residual,
        "initial_source_occupation": initial,
        "diagonal_imag_residue": diag_imag[0],
        "integrator_steps": stats["steps"],
    }
    if residual > residual_threshold:
        meta["grid_warning"] = True
        warnings.warn(
            f"emission not complete at t={grid.t1:.4g} us: {residual:.3g} photons remain in the source",
            DiagnosticsWarning,
            stacklevel=2,
        )
    cm = CorrelationMatrix(grid, values, trapezoid_weights(grid.samples), meta)
    cm.states = states
    return cm


@dataclass
class ModeDecomposition:
    grid: TimeGrid
    modes: np.ndarray  # (n_modes, n_t), modes[i] = v_i(t)
    occupations: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.occupations)

    @property
    def total(self) -> float:
        return float(np.sum(self.occupations))

    def gram(self) -> np.ndarray:
        return (self.modes.conj() * self.weights) @ self.modes.T

    def reconstruct(self) -> np.ndarray:
        return (self.modes.T * self.occupations) @ self.modes.conj()


def decompose_modes(g: CorrelationMatrix, max_modes: int | None = None) -> ModeDecomposition:
    """Eigen-decomposition of W^1/2 G W^1/2 into orthonormal temporal modes."""
    v = g.values
    dev = np.max(np.abs(v - v.conj().T), initial=0.0)
    if dev > CorrelationMatrix.HERMITIAN_TOL:
        raise DataIntegrityError(f"correlation matrix not Hermitian (deviation {dev:.3g})")
    sw = np.sqrt(g.weights)
    m = sw[:, None] * v * sw[None, :]
    m = 0.5 * (m + m.conj().T)
    evals, evecs = np.linalg.eigh(m)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    if max_modes is not None:
        evals = evals[:max_modes]
        evecs = evecs[:, :max_modes]
    evals = np.where(evals < 0, 0.0, evals)
    modes = (evecs / sw[:, None]).T
    # fix the arbitrary eigenvector phase: largest sample real and positive
    for k in range(modes.shape[0]):
        j = int(np.argmax(np.abs(modes[k])))
        if modes[k, j] != 0:
            modes[k] *= np.conj(modes[k, j]) / abs(modes[k, j])
    return ModeDecomposition(g.grid, modes, evals, g.weights.copy())


def emitted_photons(g: CorrelationMatrix) -> float:
    return float(max(0.0, np.sum(g.weights * g.flux())))


def mode_occupation_ratio(d: ModeDecomposition) -> float:
    total = d.total
    if not total > 0:
        raise UndefinedRatioError("no emitted photons: n1 / n_out is undefined")
    return float(d.occupations[0] / total)


def significant_modes(d: ModeDecomposition, threshold: float = 0.1) -> int:
    return int(np.sum(d.occupations > threshold))


@dataclass
class Spectrogram:
    times: np.ndarray
    omegas: np.ndarray  # rad/us
    intensity: np.ndarray  # (n_omega, n_t)
    metadata: dict = field(default_factory=dict)


def _interpolator(g: CorrelationMatrix):
    t = g.times
    re = RegularGridInterpolator((t, t), g.values.real, method="linear", bounds_error=False, fill_value=0.0)
    im = RegularGridInterpolator((t, t), g.values.imag, method="linear", bounds_error=False, fill_value=0.0)
    return lambda p: re(p) + 1j * im(p)


def time_dependent_spectrum(
    g: CorrelationMatrix, omega_grid, t_grid=None, window_width: float | None = None
) -> Spectrogram:
    """Wigner-Ville style spectrum I(w, t) = int ds G(t - s/2, t + s/2) exp(-i w s).

    The argument order is chosen so a line at carrier +w0 (v ~ exp(-i w0 t))
    appears at w = +w0.  G is zero outside the simulated window and is
    bilinearly interpolated off-grid.  ``window_width`` applies an optional
    Gaussian taper exp(-s^2 / 2 sigma^2).
    """
    omegas = np.asarray(omega_grid, dtype=float)
    t_all = g.times
    times = t_all if t_grid is None else np.asarray(t_grid, dtype=float)
    ds = float(np.min(np.diff(t_all)))
    span = t_all[-1] - t_all[0]
    kmax = int(math.ceil(2 * span / ds))
    s = ds * np.arange(-kmax, kmax + 1)
    taper = np.ones_like(s) if window_width is None else np.exp(-(s ** 2) / (2 * window_width ** 2))
    interp = _interpolator(g)
    phase = np.exp(-1j * np.outer(omegas, s))
    out = np.empty((omegas.size, times.size), dtype=complex)
    for k, t in enumerate(times):
        pts = np.stack([t - s / 2, t + s / 2], axis=-1)
        kern = interp(pts) * taper
        out[:, k] = phase @ kern * ds
    meta = {
        "imag_residue": float(np.max(np.abs(out.imag), initial=0.0)),
        "ds": ds,
        "window": "none" if window_width is None else "gaussian",
    }
    if window_width is not None:
        meta["window_width_us"] = window_width
    return Spectrogram(times, omegas, out.real, meta)


def integrated_spectrum(g: CorrelationMatrix, omega_grid) -> np.ndarray:
    """Time-integrated spectrum sum_ij w_i w_j G_ij exp(-i w (t_j - t_i)).

    Equal to the time marginal of :func:`time_dependent_spectrum`.
    """
    omegas = np.asarray(omega_grid, dtype=float)
    t = g.times
    e = np.exp(-1j * np.outer(omegas, t)) * g.weights  # (n_w, n_t)
    s = np.einsum("wi,ij,wj->w", e.conj(), g.values, e)
    return s.real
