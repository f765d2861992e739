"""Run configurations and the derive / emit / capture commands.

Each command reads a flat config (see :mod:`.config`), runs the numerical
pipeline and writes CSV/JSON (and optionally PNG) files into an output
directory.  Every file carries the config hash and package version.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io, units
from .circuit import CircuitNetlist, derive, purcell_rate, resonance_detuning
from .config import REQUIRED, ConfigError, ConfigFile, Reader, config_hash, read_config
from .emission import time_dependent_spectrum
from .errors import InvalidArgumentError
from .pipeline import (
    Scenario,
    StateSpec,
    default_t0_candidates,
    optimize_drive_rate,
    reference_params,
    run_capture,
    run_emission,
)
from .quantum import DensityMatrix, partial_trace, wigner

log = logging.getLogger(__name__)

SCENARIO_KINDS = ("toy", "effective", "circuit")
EFFECTIVE_KEYS = {
    "chi_a_MHz": "chi_a",
    "chi_b_MHz": "chi_b",
    "chi_ab_MHz": "chi_ab",
    "swap_scale_MHz": "swap_scale",
    "stark_scale_a_MHz": "stark_scale_a",
    "stark_scale_b_MHz": "stark_scale_b",
}
#: numerical threshold below which a temporal mode counts as unoccupied
EMPTY_MODE = 1e-10


@dataclass
class RunConfig:
    scenario: Scenario
    kind: str
    values: dict
    netlist: CircuitNetlist | None = None
    spectrum_omegas: np.ndarray | None = None
    spectrum_times: int = 100
    spectrum_window: float | None = None
    optimize_t0: bool = False
    t0_candidates: np.ndarray | None = None
    wigner_extent: float = 4.0
    wigner_points: int = 81
    sweep_parameter: str | None = None
    sweep_values: list | None = None
    sweep_mode: str = "emit"
    extras: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.values)

    def meta(self, **extra) -> dict:
        return io.metadata(self.hash, **self.extras, **extra)


def _netlist_from(cfg: ConfigFile, overrides: dict | None = None) -> CircuitNetlist:
    values = dict(cfg.values)
    values.update(overrides or {})
    try:
        return CircuitNetlist.from_file_dict(values)
    except KeyError as exc:
        key = exc.args[0]
        raise ConfigError(f"missing required netlist key {key!r}", None, key) from None
    except ValueError as exc:
        raise ConfigError(f"invalid netlist: {exc}") from None


def read_netlist(path) -> CircuitNetlist:
    return _netlist_from(read_config(path))


def build_run_config(cfg: ConfigFile, overrides: dict | None = None) -> RunConfig:
    """Validate a parsed config and turn it into a :class:`RunConfig`.

    ``overrides`` replace raw values (used by sweeps) before validation.
    """
    if overrides:
        cfg = ConfigFile({**cfg.values, **{k: str(v) for k, v in overrides.items()}}, cfg.lines, cfg.source)
    r = Reader(cfg)
    kind = r.str("scenario", REQUIRED, choices=SCENARIO_KINDS)
    state_kind = r.str("state", REQUIRED, choices=StateSpec.KINDS)
    try:
        if state_kind == "fock":
            state = StateSpec("fock", r.int("state_n", REQUIRED, minimum=0))
        else:
            state = StateSpec(state_kind, r.float("state_alpha_sq", REQUIRED, positive=True))
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc), cfg.line_of("state"), "state") from None
    kappa = r.float("kappa_per_us", REQUIRED, positive=True)

    common = dict(
        storage_dim=r.int("storage_dim", None, minimum=2),
        leakage_dim=r.int("leakage_dim", 4, minimum=2),
        receiver_dim=r.int("receiver_dim", None, minimum=2),
        grid_step=r.float("grid_step_us", None, positive=True),
        t_end=r.float("grid_t_end_us", None, positive=True),
        max_modes=r.int("max_modes", None, minimum=1),
        capture_eps=r.float("capture_eps", 1e-10, positive=True),
        capture_cap_factor=r.float("capture_cap_factor", 50.0, positive=True),
    )
    netlist = None
    if kind == "toy":
        scenario = Scenario(
            "toy",
            state,
            kappa,
            toy_omega=r.mhz("toy_omega_MHz", 0.0),
            toy_kerr=r.mhz("toy_kerr_MHz", 0.0),
            toy_chirp=r.mhz("toy_chirp_MHz", 0.0),
            **common,
        )
    else:
        if kind == "effective":
            base = reference_params()
            changes = {}
            for key, name in EFFECTIVE_KEYS.items():
                v = r.mhz(key, None)
                if v is not None:
                    changes[name] = v
            params = base.scaled(**changes)
        else:
            path = r.path("netlist", REQUIRED)
            net_cfg = read_config(path)
            net_over = {k: v for k, v in cfg.values.items() if k in CircuitNetlist.FILE_KEYS.values()}
            for k in net_over:
                r.used.add(k)
            netlist = _netlist_from(net_cfg, net_over)
            _, params = derive(netlist)
        scenario = Scenario(
            "effective",
            state,
            kappa,
            params=params,
            delta=r.float("drive_delta", 0.01, positive=True),
            t0=r.float("drive_t0_us", 1.5, positive=True),
            **common,
        )

    rc = RunConfig(scenario, kind, dict(cfg.values), netlist)
    lo, hi = r.float("spectrum_omega_min_MHz", None), r.float("spectrum_omega_max_MHz", None)
    n_w = r.int("spectrum_points", 201, minimum=2)
    if lo is not None or hi is not None:
        if lo is None or hi is None or not hi > lo:
            key = "spectrum_omega_max_MHz" if lo is not None else "spectrum_omega_min_MHz"
            raise ConfigError(f"{key}: spectrum range needs both bounds with max > min", cfg.line_of(key), key)
        rc.spectrum_omegas = units.mhz_to_rad_per_us(np.linspace(lo, hi, n_w))
    else:
        rc.spectrum_omegas = default_omega_grid(scenario, n_w)
    rc.spectrum_times = r.int("spectrum_times", 100, minimum=2)
    rc.spectrum_window = r.float("spectrum_window_us", None, positive=True)
    rc.optimize_t0 = r.bool("optimize_t0", False)
    rc.t0_candidates = np.asarray(r.floats("t0_candidates_us", None) or default_t0_candidates())
    if np.any(rc.t0_candidates <= 0):
        raise ConfigError("t0 candidates must be positive", cfg.line_of("t0_candidates_us"), "t0_candidates_us")
    rc.wigner_extent = r.float("wigner_extent", 4.0, positive=True)
    rc.wigner_points = r.int("wigner_points", 81, minimum=3)
    rc.sweep_parameter = r.str("sweep_parameter", None)
    rc.sweep_values = r.floats("sweep_values", None)
    rc.sweep_mode = r.str("sweep_mode", "emit", choices=("derive", "emit", "capture"))
    r.check_unused()
    return rc


def load_run_config(path, overrides=None) -> RunConfig:
    return build_run_config(read_config(path), overrides)


def default_omega_grid(scenario: Scenario, n: int) -> np.ndarray:
    """Symmetric frequency window wide enough for the Kerr-split lines."""
    n_max = scenario.dims[0]
    if scenario.kind == "toy":
        center = scenario.toy_omega
        chi = max(abs(scenario.toy_kerr), abs(scenario.toy_chirp))
        spread = 4.0 * chi * n_max
    else:
        p = scenario.params
        center = 0.0
        spread = 2.0 * (abs(p.chi_a) + abs(p.chi_ab)) * n_max
    half = 6.0 * scenario.kappa + spread
    return np.linspace(center - half, center + half, n)


# -- derive ----------------------------------------------------------------------------


def derive_report(net: CircuitNetlist, kappa: float | None = None, delta: float | None = None) -> dict:
    modes, params = derive(net)
    out = {
        "netlist": net.to_file_dict(),
        "dressed_modes": {
            "omega_a_GHz": modes.omega_a / units.TWO_PI / 1e3,
            "omega_c_GHz": modes.omega_c / units.TWO_PI / 1e3,
            "omega_b_GHz": modes.omega_b / units.TWO_PI / 1e3,
            "lambda_a_Wb": modes.lambda_a,
            "lambda_c_Wb": modes.lambda_c,
            "lambda_b_Wb": modes.lambda_b,
        },
        "effective_params": params.to_dict(),
        "delta_E_2_MHz": units.rad_per_us_to_mhz(resonance_detuning(2, params.chi_a, params.chi_ab)),
    }
    if kappa is not None:
        d = 0.01 if delta is None else delta
        g = abs(params.swap_scale) * d
        out["purcell"] = {
            "kappa_per_us": kappa,
            "drive_delta": d,
            "g_swap_peak_MHz": units.rad_per_us_to_mhz(g),
            "purcell_rate_per_us": purcell_rate(g, kappa),
        }
    return out


def cmd_derive(netlist_path, out_dir, plots=True) -> dict:
    cfg = read_config(netlist_path)
    r = Reader(cfg)
    kappa = r.float("kappa_per_us", None, positive=True)
    delta = r.float("drive_delta", None, positive=True)
    net = _netlist_from(cfg)
    for k in CircuitNetlist.FILE_KEYS.values():
        r.used.add(k)
    r.check_unused()
    report = derive_report(net, kappa, delta)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "derive.json", report, io.metadata(cfg.content_hash()))
    return report


# -- emit ------------------------------------------------------------------------------


def _mode_rows(times, modes):
    for j, t in enumerate(times):
        row = [float(t)]
        for v in modes:
            row += [float(v[j].real), float(v[j].imag)]
        yield row


def write_emission(rc: RunConfig, em, out: Path, plots: bool) -> dict:
    meta = rc.meta()
    out.mkdir(parents=True, exist_ok=True)
    d = em.modes
    keep = int(np.sum(d.occupations > EMPTY_MODE))
    modes = d.modes[:keep]
    summary = em.summary()
    summary["occupations"] = d.occupations[:keep].tolist()
    if keep == 0:
        summary["n1"] = 0.0
        summary["n1_over_nout"] = None
    summary["scenario"] = rc.scenario.describe()
    summary["integrator_steps"] = em.correlation.metadata["integrator_steps"]

    np.save(out / "g1.npy", em.correlation.values)
    cols = ["t_us"] + [f"{p}_v{i + 1}" for i in range(keep) for p in ("re", "im")]
    io.write_csv(out / "modes.csv", cols, _mode_rows(em.grid.samples, modes), meta)
    io.write_json(out / "modes.json", {"occupations": d.occupations[:keep].tolist()}, meta)
    io.write_csv(
        out / "flux.csv", ["t_us", "photon_flux_per_us"], zip(em.grid.samples, em.correlation.flux()), meta
    )

    times = np.linspace(em.grid.t0, em.grid.t1, rc.spectrum_times)
    spec = time_dependent_spectrum(em.correlation, rc.spectrum_omegas, times, rc.spectrum_window)
    io.write_grid_csv(
        out / "spectrogram.csv",
        "frequency_MHz",
        units.rad_per_us_to_mhz(spec.omegas),
        "t_us",
        spec.times,
        spec.intensity,
        rc.meta(spectrogram_window=spec.metadata["window"]),
    )
    io.write_json(out / "summary.json", summary, meta)
    if plots:
        from . import plotting

        plotting.plot_modes(out / "modes.png", d)
        plotting.plot_spectrogram(out / "spectrogram.png", spec)
    return summary


def cmd_emit(rc: RunConfig, out_dir, plots=True) -> dict:
    em = run_emission(rc.scenario)
    return write_emission(rc, em, Path(out_dir), plots)


# -- capture ---------------------------------------------------------------------------


def _storage_reduced(rc: RunConfig):
    psi = rc.scenario.initial_state()
    rho = psi.projector()
    if rho.space.n_subsystems > 1:
        rho = partial_trace(rho, 0)
    return rho


def cmd_capture(rc: RunConfig, out_dir, plots=True, workers: int = 1) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = rc.meta()
    scenario = rc.scenario
    result = {}
    if rc.optimize_t0 and scenario.kind == "effective":
        opt = optimize_drive_rate(scenario, rc.t0_candidates, workers)
        io.write_json(out / "drive_rate.json", opt.to_dict(), meta)
        rows = [(c["t0_us"], c["status"], c.get("fidelity"), c.get("alpha_sq_fit"), c.get("reason", "")) for c in opt.reports]
        io.write_csv(out / "drive_rate.csv", ["t0_us", "status", "fidelity", "alpha_sq_fit", "reason"], rows, meta)
        if plots:
            from . import plotting

            ok = [c for c in opt.reports if c["status"] == "done"]
            plotting.plot_drive_rate(out / "drive_rate.png", [c["t0_us"] for c in ok], [c["fidelity"] for c in ok])
        scenario = scenario.replace(t0=opt.best_t0)
        result["best_t0_us"] = opt.best_t0
    outcome = run_capture(scenario)
    summary = outcome.summary()
    summary.update(result)
    summary["scenario"] = scenario.describe()
    io.write_json(out / "capture.json", outcome.result.to_dict(), meta)
    if outcome.cat_fit is not None:
        io.write_json(out / "catfit.json", outcome.cat_fit.to_dict(), meta)
    else:
        io.write_json(out / "fockfit.json", {"n": int(scenario.state.value), "fidelity": outcome.fock_fidelity}, meta)
    io.write_json(out / "summary.json", summary, meta)

    x = np.linspace(-rc.wigner_extent, rc.wigner_extent, rc.wigner_points)
    panels = {"initial": _storage_reduced(rc), "captured": outcome.result.rho_d}
    for name, rho in panels.items():
        w = wigner(rho, x, x)
        io.write_grid_csv(out / f"wigner_{name}.csv", "p", x, "x", x, w, meta)
        if plots:
            from . import plotting

            plotting.plot_wigner(out / f"wigner_{name}.png", x, x, w, name)
    return summary
