"""End-to-end scenarios: emitter model, emission analysis and recapture.

A :class:`Scenario` bundles everything a run needs.  :func:`run_emission`
produces the output correlation and its modes; :func:`run_capture` feeds the
dominant mode to a virtual receiver and scores the captured state.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np

from . import units
from .capture import (
    CaptureResult,
    CatFitReport,
    best_cat_fit,
    capture,
    cascade_model,
    fock_population_fidelity,
    receiver_coupling,
)
from .circuit import EffectiveParams
from .dynamics import (
    TimeGrid,
    build_effective_model,
    build_toy_model,
    chirped_frequency,
    co_propagate,
    drive_envelope,
)
from .emission import (
    CorrelationMatrix,
    ModeDecomposition,
    _source_occupation,
    decompose_modes,
    first_order_correlation,
)
from .errors import DiagnosticsWarning, InvalidArgumentError, TruncationWarning
from .quantum import Ket, annihilation, cat_state, embed, fock_state, tensor

#: leakage-cavity decay rate of the reference operating point, 1/us
REFERENCE_KAPPA = 5.0
#: baseline drive rise time, us
REFERENCE_T0 = 1.5
#: drive amplitude delta of F(t) = delta tanh(t / t0), dimensionless flux
REFERENCE_DELTA = 0.01
#: target Kerr coefficients / 2 pi in MHz of the reference operating point
REFERENCE_CHI_MHZ = {"chi_a": -0.017, "chi_b": -0.04, "chi_ab": -0.11}

LEAKAGE_DIM = 4
RESIDUAL_TARGET = 1e-3
#: largest sample spacing of the emission grid, us; never coarser than 1 / (2 kappa)
GRID_STEP = 0.1
#: emission grids are never extended beyond this many rise times (plus slack)
MAX_GRID_RISE_TIMES = 12


def reference_calibration() -> dict:
    text = resources.files(__package__).joinpath("data/reference_calibration.json").read_text()
    return json.loads(text)


def reference_netlist():
    from .circuit import CircuitNetlist
    from .config import parse_config

    text = resources.files(__package__).joinpath("data/reference_netlist.txt").read_text()
    return CircuitNetlist.from_file_dict(parse_config(text).values)


def reference_params() -> EffectiveParams:
    """Kerr coefficients of the operating point with swap/Stark scales of the reference netlist."""
    from .circuit import derive

    _, p = derive(reference_netlist())
    return p.scaled(
        chi_a=units.mhz_to_rad_per_us(REFERENCE_CHI_MHZ["chi_a"]),
        chi_b=units.mhz_to_rad_per_us(REFERENCE_CHI_MHZ["chi_b"]),
        chi_ab=units.mhz_to_rad_per_us(REFERENCE_CHI_MHZ["chi_ab"]),
    )


# -- initial states --------------------------------------------------------------------


@dataclass(frozen=True)
class StateSpec:
    """Initial storage state: ``fock`` with ``n``, or ``tccs``/``fccs`` with |alpha|^2."""

    kind: str
    value: float

    KINDS = ("fock", "tccs", "fccs")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidArgumentError(f"state kind must be one of {self.KINDS}, got {self.kind!r}")
        if self.kind == "fock" and (self.value < 0 or self.value != int(self.value)):
            raise InvalidArgumentError(f"Fock number must be a non-negative integer, got {self.value}")
        if self.kind != "fock" and not self.value > 0:
            raise InvalidArgumentError(f"cat |alpha|^2 must be positive, got {self.value}")

    @property
    def components(self) -> int:
        return {"tccs": 2, "fccs": 4}.get(self.kind, 0)

    @property
    def alpha(self) -> float:
        return math.sqrt(self.value)

    def ket(self, dim: int) -> Ket:
        if self.kind == "fock":
            return fock_state(dim, int(self.value))
        return cat_state(dim, self.alpha, self.components)

    def populations(self, dim: int) -> np.ndarray:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            return np.abs(self.ket(dim).amplitudes) ** 2

    def mean_photons(self) -> float:
        p = self.populations(self.storage_dim() + 10)
        return float(np.sum(np.arange(p.size) * p))

    def storage_dim(self, threshold: float = 1e-2, margin: int = 3) -> int:
        """Largest Fock index holding more than ``threshold`` probability, plus ``margin``."""
        if self.kind == "fock":
            return int(self.value) + margin
        p = self.populations(int(4 * self.value + 20))
        return int(np.nonzero(p > threshold)[0].max()) + margin


# -- scenarios -------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """One emitter configuration.

    ``kind`` is ``toy`` (single Kerr oscillator, optional chirp) or
    ``effective`` (storage + leakage driven by the coupler).  Rates are in
    rad/us, times in us.
    """

    kind: str
    state: StateSpec
    kappa: float
    params: EffectiveParams | None = None
    delta: float = REFERENCE_DELTA
    t0: float = REFERENCE_T0
    toy_omega: float = 0.0
    toy_kerr: float = 0.0
    toy_chirp: float = 0.0
    storage_dim: int | None = None
    leakage_dim: int = LEAKAGE_DIM
    grid_step: float | None = None
    t_end: float | None = None
    max_modes: int | None = None
    receiver_dim: int | None = None
    capture_eps: float = 1e-10
    capture_cap_factor: float = 50.0

    def __post_init__(self):
        if self.kind not in ("toy", "effective"):
            raise InvalidArgumentError(f"scenario kind must be 'toy' or 'effective', got {self.kind!r}")
        if self.kind == "effective" and self.params is None:
            raise InvalidArgumentError("an effective scenario needs EffectiveParams")
        if not self.kappa > 0:
            raise InvalidArgumentError(f"kappa must be positive, got {self.kappa}")

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)

    @property
    def dims(self) -> tuple:
        n = self.storage_dim or self.state.storage_dim()
        return (n,) if self.kind == "toy" else (n, self.leakage_dim)

    def model(self):
        dims = self.dims
        if self.kind == "toy":
            omega = self.toy_omega
            if self.toy_chirp:
                n = int(round(self.state.mean_photons()))
                omega = chirped_frequency(self.toy_omega, self.toy_chirp, n, self.kappa)
            return build_toy_model(dims[0], omega, self.toy_kerr, self.kappa)
        return build_effective_model(self.params, drive_envelope(self.delta, self.t0), self.kappa, dims)

    def initial_state(self):
        dims = self.dims
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            psi = self.state.ket(dims[0])
        if len(dims) == 1:
            return psi
        return tensor(psi, fock_state(dims[1], 0))

    def output_operator(self):
        model = self.model()
        slot = model.labels["output_slot"]
        return math.sqrt(self.kappa) * embed(annihilation(self.dims[slot]), model.space, slot)

    def describe(self) -> dict:
        d = {
            "kind": self.kind,
            "state": self.state.kind,
            "state_value": self.state.value,
            "kappa_per_us": self.kappa,
            "dims": list(self.dims),
        }
        if self.kind == "effective":
            d.update(delta=self.delta, t0_us=self.t0, **self.params.to_dict())
        else:
            d.update(
                omega_MHz=units.rad_per_us_to_mhz(self.toy_omega),
                kerr_MHz=units.rad_per_us_to_mhz(self.toy_kerr),
                chirp_MHz=units.rad_per_us_to_mhz(self.toy_chirp),
            )
        return d


def reference_scenario(state: StateSpec, **changes) -> Scenario:
    base = Scenario("effective", state, REFERENCE_KAPPA, params=reference_params())
    return base.replace(**changes) if changes else base


def emission_end_time(scenario: Scenario, target: float = RESIDUAL_TARGET) -> float:
    """First time the source occupation drops below ``target``, found by evolving rho alone."""
    if scenario.t_end is not None:
        return scenario.t_end
    model = scenario.model()
    scale = scenario.t0 if scenario.kind == "effective" else 1.0 / scenario.kappa
    t_cap = MAX_GRID_RISE_TIMES * scale + 40.0 / scenario.kappa
    chunk = max(scale, 4.0 / scenario.kappa) / 4
    samples = np.arange(0.0, t_cap + chunk, chunk)
    found = [None]

    class _Done(Exception):
        pass

    def observe(i, stack):
        if i > 0 and _source_occupation(model, stack[0]) < target:
            found[0] = samples[i]
            raise _Done

    try:
        co_propagate(model, scenario.initial_state(), TimeGrid(samples), observe=observe)
    except _Done:
        pass
    if found[0] is None:
        warnings.warn(
            f"source still holds more than {target} photons at the grid cap {t_cap:.3g} us",
            DiagnosticsWarning,
            stacklevel=2,
        )
        return float(samples[-1])
    # two leakage lifetimes of slack so the tail of the output is resolved
    return float(found[0] + 2.0 / scenario.kappa)


def emission_grid(scenario: Scenario) -> TimeGrid:
    t_end = emission_end_time(scenario)
    step = scenario.grid_step or min(GRID_STEP, 0.5 / scenario.kappa)
    n = max(int(math.ceil(t_end / step)) + 1, 3)
    return TimeGrid.uniform(0.0, t_end, n)


@dataclass
class EmissionResult:
    scenario: Scenario
    grid: TimeGrid
    correlation: CorrelationMatrix
    modes: ModeDecomposition
    residual: float

    @property
    def emitted(self) -> float:
        from .emission import emitted_photons

        return emitted_photons(self.correlation)

    def summary(self) -> dict:
        occ = self.modes.occupations
        total = float(occ.sum())
        return {
            "n_out": self.emitted,
            "n1": float(occ[0]) if occ.size else 0.0,
            "n1_over_nout": float(occ[0] / total) if total > 0 else float("nan"),
            "occupations": occ.tolist(),
            "significant_modes": int(np.sum(occ > 0.1)),
            "residual_source_occupation": self.residual,
            "t_end_us": self.grid.t1,
            "grid_points": len(self.grid),
        }


def run_emission(scenario: Scenario, grid: TimeGrid | None = None) -> EmissionResult:
    grid = grid or emission_grid(scenario)
    model = scenario.model()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiagnosticsWarning)
        g = first_order_correlation(model, scenario.initial_state(), grid, scenario.output_operator())
    modes = decompose_modes(g, scenario.max_modes)
    return EmissionResult(scenario, grid, g, modes, g.metadata["residual_source_occupation"])


@dataclass
class CaptureOutcome:
    emission: EmissionResult
    result: CaptureResult
    capture_end: float
    cat_fit: CatFitReport | None = None
    fock_fidelity: float | None = None

    @property
    def fidelity(self) -> float:
        return self.cat_fit.fidelity if self.cat_fit is not None else self.fock_fidelity

    def summary(self) -> dict:
        d = dict(self.emission.summary())
        d["captured_photons"] = self.result.captured_photons
        d["capture_end_us"] = self.capture_end
        d["fidelity"] = self.fidelity
        if self.cat_fit is not None:
            d["alpha_sq_fit"] = self.cat_fit.alpha_sq
            d["theta_fit"] = self.cat_fit.theta
        return d


def run_capture(scenario: Scenario, emission: EmissionResult | None = None, capture_samples: int = 50) -> CaptureOutcome:
    emission = emission or run_emission(scenario)
    if emission.modes.occupations.size == 0 or emission.modes.occupations[0] <= 0:
        v1 = None
    else:
        v1 = emission.modes.modes[0]
    rdim = scenario.receiver_dim or scenario.dims[0]
    model = scenario.model()
    times = emission.grid.samples
    if v1 is None:
        # nothing was emitted: the receiver stays in vacuum
        from .capture import ReceiverCoupling  # noqa: F401

        rho_d = np.zeros((rdim, rdim), dtype=complex)
        rho_d[0, 0] = 1.0
        from .quantum import DensityMatrix

        res = CaptureResult(DensityMatrix((rdim,), rho_d), 0.0, {}, {"max_trace_drift": 0.0})
        t_cap = emission.grid.t1
    else:
        coupling = receiver_coupling(
            times, v1, scenario.kappa, eps=scenario.capture_eps, cap=scenario.capture_cap_factor * math.sqrt(scenario.kappa)
        )
        t_cap = coupling.capture_end_time(scenario.kappa)
        cm = cascade_model(model, coupling, rdim)
        res = capture(cm, scenario.initial_state(), TimeGrid.uniform(0.0, t_cap, capture_samples), coupling)
    out = CaptureOutcome(emission, res, t_cap)
    st = scenario.state
    if st.kind == "fock":
        out.fock_fidelity = fock_population_fidelity(res.rho_d, int(st.value)) if st.value < rdim else 0.0
    else:
        out.cat_fit = best_cat_fit(res.rho_d, st.components, (0.5 * st.alpha, 1.2 * st.alpha))
    return out


def matched_state(kind: str, mean: float) -> StateSpec:
    """State of the given family whose mean photon number equals ``mean``."""
    if kind == "fock":
        if mean != int(mean):
            raise InvalidArgumentError(f"a Fock state needs an integer mean, got {mean}")
        return StateSpec("fock", int(mean))
    from scipy.optimize import brentq

    def excess(a2):
        st = StateSpec(kind, a2)
        p = st.populations(int(4 * a2 + 30))
        return float(np.sum(np.arange(p.size) * p)) - mean

    return StateSpec(kind, float(brentq(excess, 1e-3, mean + 10.0, xtol=1e-12)))


# -- drive-rate optimization -----------------------------------------------------------


def default_t0_candidates(lo: float = 0.5, hi: float = 20.0, per_decade: int = 8) -> np.ndarray:
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    return np.logspace(math.log10(lo), math.log10(hi), n)


@dataclass
class DriveRateResult:
    best_t0: float
    best: CatFitReport | float
    reports: list  # one dict per candidate, in candidate order

    def to_dict(self) -> dict:
        best = self.best.to_dict() if isinstance(self.best, CatFitReport) else {"fidelity": self.best}
        return {"best_t0_us": self.best_t0, "best": best, "candidates": self.reports}


def _evaluate_t0(args):
    scenario, t0 = args
    try:
        out = run_capture(scenario.replace(t0=float(t0)))
    except Exception as exc:  # recorded and skipped
        return {"t0_us": float(t0), "status": "failed", "reason": f"{type(exc).__name__}: {exc}"}
    d = {"t0_us": float(t0), "status": "done", **out.summary()}
    d["_fit"] = out.cat_fit if out.cat_fit is not None else out.fock_fidelity
    return d


def optimize_drive_rate(scenario: Scenario, t0_candidates=None, workers: int = 1) -> DriveRateResult:
    """Run the full pipeline for each drive rise time and keep the best fidelity.

    Failed candidates are recorded with their reason and skipped.
    """
    from .errors import SimulationError

    cands = default_t0_candidates() if t0_candidates is None else np.asarray(t0_candidates, dtype=float)
    if cands.size == 0:
        raise InvalidArgumentError("t0 candidate list is empty")
    if scenario.kind != "effective":
        raise InvalidArgumentError("drive-rate optimization needs an effective scenario")
    jobs = [(scenario, t0) for t0 in cands]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_t0, jobs))
    else:
        results = [_evaluate_t0(j) for j in jobs]
    done = [r for r in results if r["status"] == "done"]
    if not done:
        raise SimulationError("every drive-rate candidate failed: " + "; ".join(r["reason"] for r in results))
    best = max(done, key=lambda r: r["fidelity"])
    fit = best["_fit"]
    for r in results:
        r.pop("_fit", None)
    return DriveRateResult(best["t0_us"], fit, results)
