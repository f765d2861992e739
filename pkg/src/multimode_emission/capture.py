"""Recapture of the dominant output mode by a virtual linear receiver.

A downstream cavity d with time-dependent coupling g_v(t) absorbs the
contents of mode v1.  The emitter and receiver are cascaded: the receiver
sees only the emitter's output, never the reverse.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .dynamics import (
    ONE,
    CollapseOperator,
    ControlFunction,
    LindbladModel,
    TimeGrid,
    co_propagate,
)
from .emission import trapezoid_weights
from .errors import (
    InvalidArgumentError,
    OutOfRangeError,
    SpaceMismatchError,
    UnsupportedConfigurationError,
)
from .quantum import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    annihilation,
    as_density,
    cat_state,
    fidelity_pure,
    partial_trace,
    tensor,
    fock_state,
)

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-10
DEFAULT_CAP_FACTOR = 50.0
#: Sign s of the cascade beam splitter s (i/2)(g d^dag L1 - g^* L1^dag d),
#: with L0 = L1 + g^* d.  With g = -conj(v1)/sqrt(norm) only s = -1 absorbs
#: a single photon; s = +1 reflects it completely.
CASCADE_SIGN = -1


@dataclass
class ReceiverCoupling:
    """g_v(t) = -conj(v1(t)) / sqrt(int_0^t |v1|^2), floored and capped."""

    times: np.ndarray
    mode: np.ndarray
    norm_profile: np.ndarray
    coupling: np.ndarray
    eps: float
    cap: float
    cap_activations: int
    _re: CubicSpline = field(repr=False, default=None)
    _im: CubicSpline = field(repr=False, default=None)
    _norm: object = field(repr=False, default=None)

    def __call__(self, t: float) -> complex:
        t0, t1 = self.times[0], self.times[-1]
        if t < t0 or t > t1:
            return 0.0j
        v = complex(self._re(t), self._im(t))
        acc = max(float(self._norm(t)), self.eps)
        g = -np.conj(v) / math.sqrt(acc)
        mag = abs(g)
        if mag > self.cap:
            g *= self.cap / mag
        return g

    def accumulated_norm(self, t: float) -> float:
        return float(self._norm(t))

    def capture_end_time(self, kappa: float, threshold: float = 1e-4, extra: float = 2.0) -> float:
        """Time where the mode's accumulated norm passes 1 - threshold, plus extra/kappa."""
        idx = np.nonzero(self.norm_profile >= 1.0 - threshold)[0]
        t_full = self.times[idx[0]] if idx.size else self.times[-1]
        return float(min(t_full + extra / kappa, self.times[-1]))


def receiver_coupling(times, v1, kappa: float, eps: float = DEFAULT_EPS, cap: float | None = None) -> ReceiverCoupling:
    times = np.asarray(times, dtype=float)
    v1 = np.asarray(v1, dtype=complex)
    w = trapezoid_weights(times)
    norm = float(np.sum(w * np.abs(v1) ** 2))
    if abs(norm - 1.0) > 1e-6:
        raise InvalidArgumentError(f"mode function is not normalized (norm {norm:.6g})")
    if cap is None:
        cap = DEFAULT_CAP_FACTOR * math.sqrt(kappa)
    re = CubicSpline(times, v1.real)
    im = CubicSpline(times, v1.imag)
    dens = np.abs(v1) ** 2
    # cumulative trapezoid keeps the profile monotone and consistent with the grid norm
    prof = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(times))])
    norm_spline = CubicSpline(times, prof)
    # spline of |v|^2 integrated exactly is smoother for the coupling itself
    dens_anti = CubicSpline(times, dens).antiderivative()

    def acc(t):
        return max(float(dens_anti(t)), 0.0)

    rc = ReceiverCoupling(times, v1, prof, np.zeros_like(v1), eps, cap, 0, re, im, acc)
    g = np.array([rc(t) for t in times])
    raw = np.array(
        [abs(v1[k]) / math.sqrt(max(acc(t), eps)) for k, t in enumerate(times)]
    )
    rc.coupling = g
    rc.cap_activations = int(np.sum(raw > cap))
    rc._norm_profile_spline = norm_spline
    if rc.cap_activations:
        log.info("receiver coupling capped at %d grid samples", rc.cap_activations)
    return rc


def _extend(op: Operator, space: HilbertSpace) -> Operator:
    extra = space.dim // op.space.dim
    return Operator(space, np.kron(np.asarray(op.matrix), np.eye(extra)))


def cascade_model(emitter: LindbladModel, coupling: ReceiverCoupling, receiver_dim: int, sign: int = CASCADE_SIGN) -> LindbladModel:
    """Emitter plus receiver cavity d driven by the emitter's output.

    The single emitter jump operator L1 = sqrt(kappa) x is replaced by
    L0 = L1 + g^*(t) d and the beam splitter (i/2)(g d^dag L1 - g^* L1^dag d)
    is added, split into two Hermitian pieces with real coefficients.
    """
    if len(emitter.collapse_ops) != 1 or not emitter.collapse_ops[0].is_constant:
        raise UnsupportedConfigurationError("cascading needs an emitter with exactly one constant collapse operator")
    space = HilbertSpace(emitter.space.subsystem_dims + (receiver_dim,))
    l1 = _extend(emitter.collapse_ops[0].terms[0][0], space)
    d = Operator(space, np.kron(np.eye(emitter.space.dim), annihilation(receiver_dim).matrix))
    dd, l1d = d.dag(), l1.dag()

    terms = [(_extend(op, space), f) for op, f in emitter.hamiltonian_terms]
    h_re = 0.5j * (dd @ l1 - l1d @ d)
    h_im = -0.5 * (dd @ l1 + l1d @ d)
    terms.append((sign * h_re, ControlFunction(lambda t: coupling(t).real, True, "Re g_v")))
    terms.append((sign * h_im, ControlFunction(lambda t: coupling(t).imag, True, "Im g_v")))
    jump = CollapseOperator(((l1, ONE), (d, ControlFunction(lambda t: np.conj(coupling(t)), True, "g_v*"))))

    labels = dict(emitter.labels)
    labels.update(
        kind="cascade",
        receiver_slot=space.n_subsystems - 1,
        source_slots=tuple(labels.get("source_slots", range(emitter.space.n_subsystems))),
    )
    return LindbladModel(space, tuple(terms), (jump,), labels=labels)


@dataclass
class CaptureResult:
    rho_d: DensityMatrix
    captured_photons: float
    leftover: dict
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "captured_photons": self.captured_photons,
            "leftover_occupations": self.leftover,
            "diagnostics": self.diagnostics,
            "rho_d_real": np.asarray(self.rho_d.matrix).real.tolist(),
            "rho_d_imag": np.asarray(self.rho_d.matrix).imag.tolist(),
        }


def capture(model: LindbladModel, rho0, grid: TimeGrid, coupling: ReceiverCoupling | None = None) -> CaptureResult:
    """Run the cascaded model and return the receiver's reduced state at the last sample.

    ``rho0`` may live on the emitter space only, in which case the receiver
    starts in vacuum.
    """
    rho0 = as_density(rho0)
    rslot = model.labels.get("receiver_slot", model.space.n_subsystems - 1)
    rdim = model.space.subsystem_dims[rslot]
    if rho0.space != model.space:
        if rho0.space.subsystem_dims + (rdim,) != model.space.subsystem_dims:
            raise SpaceMismatchError(f"initial state on {rho0.space!r}, cascade on {model.space!r}")
        rho0 = tensor(rho0, fock_state(rdim, 0))
    states, stats = co_propagate(model, rho0, grid)
    final = DensityMatrix(model.space, states[-1], validate=False)
    rho_d = partial_trace(final, rslot)
    n_d = float(np.real(np.trace(np.diag(np.arange(rdim)) @ rho_d.matrix)))
    leftover = {}
    for s in range(model.space.n_subsystems):
        if s == rslot:
            continue
        red = partial_trace(final, s)
        leftover[f"slot{s}"] = float(np.real(np.trace(np.diag(np.arange(red.space.dim)) @ red.matrix)))
    traces = [abs(np.trace(s).real - 1.0) for s in states]
    diag = {
        "max_trace_drift": float(max(traces)),
        "integrator_steps": stats["steps"],
        "final_time": grid.t1,
        "receiver_min_eigenvalue": rho_d.min_eigenvalue(),
    }
    if coupling is not None:
        diag["cap_activations"] = coupling.cap_activations
    return CaptureResult(rho_d, n_d, leftover, diag)


def fock_population_fidelity(rho_d, n: int) -> float:
    rho_d = as_density(rho_d)
    if not 0 <= n < rho_d.space.dim:
        raise OutOfRangeError(f"Fock index {n} outside receiver dimension {rho_d.space.dim}")
    return float(np.real(rho_d.matrix[n, n]))


# -- cat fitting -----------------------------------------------------------------------


@dataclass
class CatFitReport:
    family: int
    alpha: float  # |alpha~|
    theta: float
    fidelity: float
    scan: np.ndarray  # rows (|alpha|, best theta on grid, fidelity)

    @property
    def alpha_sq(self) -> float:
        return self.alpha ** 2

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "alpha": self.alpha,
            "alpha_sq": self.alpha_sq,
            "theta": self.theta,
            "fidelity": self.fidelity,
            "scan": self.scan.tolist(),
        }


def _fidelity_vs_theta(rho: np.ndarray, c: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """<cat| R(theta)^dag rho R(theta) |cat> for target R(theta)|cat>, R = exp(-i theta n)."""
    m = np.conj(c)[:, None] * rho * c[None, :]
    dim = rho.shape[0]
    ks = np.arange(-(dim - 1), dim)
    diag_sums = np.array([np.trace(m, offset=-k) for k in ks])  # sum over m - n = k
    return np.real(np.exp(1j * np.outer(thetas, ks)) @ diag_sums)


def _target(dim, alpha, family):
    import warnings

    from .errors import TruncationWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        return cat_state(dim, alpha, family).amplitudes


def cat_fidelity(rho_d, family: int, alpha: float, theta: float) -> float:
    rho = np.asarray(as_density(rho_d).matrix)
    c = _target(rho.shape[0], alpha, family)
    return float(_fidelity_vs_theta(rho, c, np.array([theta]))[0])


def best_cat_fit(rho_d, family: int, alpha_range, theta_steps: int = 64, alpha_steps: int = 61) -> CatFitReport:
    """Maximize <cat(alpha) | R^dag rho R | cat(alpha)> over |alpha| and rotation.

    Grid scan over (|alpha|, theta), then bounded Brent searches on |alpha| and
    theta (seeded by a parabolic vertex), alternated until stable.
    """
    rho_d = as_density(rho_d)
    if rho_d.space.n_subsystems != 1:
        raise SpaceMismatchError("best_cat_fit needs a single-oscillator state")
    if family not in (2, 4):
        raise InvalidArgumentError(f"family must be 2 or 4, got {family}")
    lo, hi = (float(x) for x in alpha_range)
    if not hi > lo or lo < 0:
        raise InvalidArgumentError(f"empty or invalid alpha range ({lo}, {hi})")
    rho = np.asarray(rho_d.matrix)
    dim = rho.shape[0]
    alphas = np.linspace(lo, hi, alpha_steps)
    h = 2 * math.pi / theta_steps
    thetas = h * np.arange(theta_steps)
    table = np.array([_fidelity_vs_theta(rho, _target(dim, a, family), thetas) for a in alphas])
    best_theta_idx = np.argmax(table, axis=1)
    scan = np.column_stack([alphas, thetas[best_theta_idx], table[np.arange(alpha_steps), best_theta_idx]])
    i, j = np.unravel_index(np.argmax(table), table.shape)

    def f(a, th):
        return float(_fidelity_vs_theta(rho, _target(dim, a, family), np.array([th]))[0])

    # parabolic vertex through the three theta grid points around the maximum
    y0, y1, y2 = table[i, (j - 1) % theta_steps], table[i, j], table[i, (j + 1) % theta_steps]
    denom = y0 - 2 * y1 + y2
    theta = thetas[j] + (0.5 * h * (y0 - y2) / denom if denom < 0 else 0.0)
    alpha = alphas[i]
    best = f(alpha, theta)

    for _ in range(4):
        prev = best
        if 0 < i < alpha_steps - 1 or lo < alpha < hi:
            step = alphas[1] - alphas[0]
            a_lo, a_hi = max(lo, alpha - step), min(hi, alpha + step)
            res = minimize_scalar(
                lambda a: -f(a, theta), bounds=(a_lo, a_hi), method="bounded", options={"xatol": 1e-7}
            )
            if -res.fun >= best:
                alpha, best = float(res.x), -float(res.fun)
        res = minimize_scalar(
            lambda th: -f(alpha, th), bounds=(theta - h, theta + h), method="bounded", options={"xatol": 1e-9}
        )
        if -res.fun >= best:
            theta, best = float(res.x), -float(res.fun)
        if best - prev < 1e-13:
            break
    best = min(max(best, 0.0), 1.0)
    return CatFitReport(family, float(alpha), float(theta % (2 * math.pi)), best, scan)
