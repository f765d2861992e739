"""Resumable one-parameter sweeps.

Each point runs in its own directory named after the swept value.  The
manifest (``manifest.json``) records the base config hash and the status of
every point and is rewritten atomically by the parent process only.  A
re-run with ``resume=True`` skips finished points, so repeating a completed
sweep performs no simulations.
"""

from __future__ import annotations

import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from . import io, units
from .config import ConfigError, ConfigFile, config_hash
from .errors import DataIntegrityError, SimulationError

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
AGGREGATE = "sweep.csv"
SUMMARY_COLUMNS = (
    "n_out",
    "n1_over_nout",
    "significant_modes",
    "fidelity",
    "alpha_sq_fit",
    "captured_photons",
    "delta_E_2_MHz",
    "purcell_rate_per_us",
    "chi_a_MHz",
    "chi_b_MHz",
    "chi_ab_MHz",
    "swap_scale_MHz",
)


def format_point_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def point_dirname(param: str, v: float) -> str:
    return re.sub(r"[^A-Za-z0-9_.=+-]", "_", f"{param}={format_point_value(v)}")


def _params_columns(scenario) -> dict:
    from .circuit import purcell_rate, resonance_detuning

    if scenario.kind != "effective":
        return {}
    p = scenario.params
    g = abs(p.swap_scale) * scenario.delta
    return {
        "delta_E_2_MHz": units.rad_per_us_to_mhz(resonance_detuning(2, p.chi_a, p.chi_ab)),
        "purcell_rate_per_us": purcell_rate(g, scenario.kappa),
        "chi_a_MHz": units.rad_per_us_to_mhz(p.chi_a),
        "chi_b_MHz": units.rad_per_us_to_mhz(p.chi_b),
        "chi_ab_MHz": units.rad_per_us_to_mhz(p.chi_ab),
        "swap_scale_MHz": units.rad_per_us_to_mhz(p.swap_scale),
    }


def run_point(base_values: dict, source: str, param: str, value: float, mode: str, out_dir: str, sweep_hash: str, plots: bool) -> dict:
    """Run one sweep point in its directory; returns its summary.  Executed in workers."""
    from .harness import build_run_config, cmd_capture, write_emission
    from .pipeline import run_emission

    cfg = ConfigFile(dict(base_values), {}, source)
    over = {param: format_point_value(value)}
    rc = build_run_config(cfg, over)
    rc.extras = {"sweep_hash": sweep_hash, "sweep_parameter": param, "sweep_value": value}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "derive":
        summary = {}
    elif mode == "emit":
        summary = write_emission(rc, run_emission(rc.scenario), out, plots)
    else:
        summary = cmd_capture(rc, out, plots)
    summary.update(_params_columns(rc.scenario))
    io.write_json(out / "point.json", {"summary": summary}, rc.meta())
    return summary


class Manifest:
    def __init__(self, path: Path, data: dict):
        self.path = path
        self.data = data

    @classmethod
    def create(cls, path, sweep_hash, param, values, mode):
        points = [
            {"value": float(v), "dir": point_dirname(param, v), "status": "pending", "reason": None}
            for v in values
        ]
        data = {
            "config_hash": sweep_hash,
            "version": io.VERSION,
            "parameter": param,
            "values": [float(v) for v in values],
            "mode": mode,
            "points": points,
        }
        m = cls(Path(path), data)
        m.save()
        return m

    @classmethod
    def load(cls, path):
        return cls(Path(path), io.read_json(path))

    def save(self):
        import json

        io.atomic_write_text(self.path, json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    @property
    def points(self):
        return self.data["points"]

    def set_status(self, i, status, reason=None):
        self.points[i]["status"] = status
        self.points[i]["reason"] = reason
        self.save()

    def reconcile(self, root: Path):
        """Mark 'done' points whose results are missing on disk as pending again."""
        changed = False
        for p in self.points:
            if p["status"] == "done" and not (root / p["dir"] / "point.json").exists():
                p["status"] = "pending"
                changed = True
            elif p["status"] == "running":
                p["status"] = "pending"
                changed = True
        if changed:
            self.save()


def run_sweep(cfg: ConfigFile, param: str, values, mode: str, out_dir, resume=False, workers=None, plots=True):
    """Run (or resume) a sweep and write the aggregated CSV.

    Returns ``(manifest, n_simulated)``.
    """
    if param is None:
        raise ConfigError("sweep needs 'sweep_parameter'", None, "sweep_parameter")
    if values is None or len(values) == 0:
        raise ConfigError("sweep needs a non-empty 'sweep_values' list", cfg.line_of("sweep_values"), "sweep_values")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sweep_hash = config_hash(cfg.values)
    mpath = out / MANIFEST
    if mpath.exists():
        if not resume:
            raise ConfigError(f"{mpath} already exists; pass --resume to continue it")
        manifest = Manifest.load(mpath)
        if manifest.data["config_hash"] != sweep_hash:
            raise ConfigError(
                f"config hash {sweep_hash} differs from the manifest's {manifest.data['config_hash']}; refusing to resume"
            )
        manifest.reconcile(out)
    else:
        manifest = Manifest.create(mpath, sweep_hash, param, values, mode)

    pending = [i for i, p in enumerate(manifest.points) if p["status"] != "done"]
    workers = workers or os.cpu_count() or 1
    args = [
        (dict(cfg.values), cfg.source, param, manifest.points[i]["value"], mode, str(out / manifest.points[i]["dir"]), sweep_hash, plots)
        for i in pending
    ]

    def record(i, fut_or_exc):
        if isinstance(fut_or_exc, BaseException):
            exc = fut_or_exc
            manifest.set_status(i, "failed", f"{type(exc).__name__}: {exc}")
            log.warning("sweep point %s failed: %s", manifest.points[i]["dir"], exc)
        else:
            manifest.set_status(i, "done")

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(run_point, *a): i for i, a in zip(pending, args)}
            for fut in as_completed(futs):
                i = futs[fut]
                exc = fut.exception()
                record(i, exc if exc is not None else None)
    else:
        for i, a in zip(pending, args):
            try:
                run_point(*a)
                record(i, None)
            except (SimulationError, ArithmeticError, ValueError, RuntimeError) as exc:
                record(i, exc)
    aggregate(out, manifest)
    return manifest, len(pending)


def aggregate(out: Path, manifest: Manifest) -> Path:
    param = manifest.data["parameter"]
    rows, metas = [], []
    for p in manifest.points:
        summary = {}
        if p["status"] == "done":
            data = io.read_json(out / p["dir"] / "point.json")
            metas.append({"config_hash": data["metadata"].get("sweep_hash")})
            summary = data["summary"]
        row = [p["value"], p["status"]]
        for c in SUMMARY_COLUMNS:
            v = summary.get(c)
            row.append(v if isinstance(v, (int, float)) and v is not None and math.isfinite(v) else None)
        row.append(p["reason"] or "")
        rows.append(row)
    if metas:
        h = io.check_same_hash(metas)
        if h != manifest.data["config_hash"]:
            raise DataIntegrityError("point results belong to a different sweep configuration")
    path = out / AGGREGATE
    io.write_csv(path, [param, "status", *SUMMARY_COLUMNS, "reason"], rows, io.metadata(manifest.data["config_hash"]))
    return path


def aggregated_columns(path):
    """Read the aggregated CSV back as ``(param_values, {column: float array})``."""
    meta, cols, rows = io.read_csv(path)
    arr = {c: np.array([float(r[k]) if r[k] not in ("", None) else np.nan for r in rows]) for k, c in enumerate(cols) if c not in ("status", "reason")}
    return arr.pop(cols[0]), arr
