"""Command-line entry point: ``multimode-emission {derive,emit,capture,sweep}``.

Exit codes: 0 success, 1 simulation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

from .config import ConfigError, read_config
from .errors import SimulationError

EXIT_OK, EXIT_SIMULATION, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("multimode_emission")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="multimode-emission",
        description="Multimode photon emission from a Kerr-nonlinear cavity and recapture of the dominant mode.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="flat key = value config file")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures, write data files only")
    common.add_argument("--seedless", action="store_true", help="accepted for compatibility; every run is deterministic")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("derive", parents=[common], help="dressed modes and effective Hamiltonian of a netlist")
    p = sub.add_parser("emit", parents=[common], help="output correlation, temporal modes and spectrogram")
    p.add_argument("--max-modes", type=int, default=None, help="keep at most this many temporal modes")
    p = sub.add_parser("capture", parents=[common], help="recapture the dominant mode and fit the target state")
    p.add_argument("--max-modes", type=int, default=None)
    p.add_argument("--workers", type=int, default=1, help="parallel drive-rate candidates")
    p = sub.add_parser("sweep", parents=[common], help="resumable one-parameter sweep")
    p.add_argument("--resume", action="store_true", help="continue an existing sweep in --out")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    p.add_argument("--max-modes", type=int, default=None)
    return ap


def _overrides(args) -> dict:
    return {"max_modes": args.max_modes} if getattr(args, "max_modes", None) else {}


def run(args) -> int:
    from . import harness

    plots = not args.no_plots
    if args.command == "derive":
        report = harness.cmd_derive(args.config, args.out, plots)
        print(json.dumps(report["effective_params"], indent=2, sort_keys=True))
        return EXIT_OK
    if args.command == "sweep":
        from .sweep import run_sweep

        cfg = read_config(args.config)
        if args.max_modes:
            cfg.values["max_modes"] = str(args.max_modes)
        rc = harness.build_run_config(cfg)  # validates the base config up front
        manifest, n_run = run_sweep(
            cfg, rc.sweep_parameter, rc.sweep_values, rc.sweep_mode, args.out, args.resume, args.workers, plots
        )
        failed = [p for p in manifest.points if p["status"] == "failed"]
        print(f"sweep: {len(manifest.points)} points, {n_run} simulated, {len(failed)} failed")
        return EXIT_SIMULATION if failed else EXIT_OK
    rc = harness.load_run_config(args.config, _overrides(args))
    if args.command == "emit":
        summary = harness.cmd_emit(rc, args.out, plots)
    else:
        summary = harness.cmd_capture(rc, args.out, plots, args.workers)
    keys = ("n_out", "n1_over_nout", "significant_modes", "fidelity", "alpha_sq_fit", "best_t0_us")
    print(json.dumps({k: summary[k] for k in keys if k in summary}, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"simulation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
