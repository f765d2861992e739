import json
import subprocess
import sys

import numpy as np
import pytest

from multimode_emission import io
from multimode_emission.cli import EXIT_CONFIG, EXIT_OK, EXIT_SIMULATION, main
from multimode_emission.config import write_config
from multimode_emission.pipeline import reference_netlist
from multimode_emission.sweep import AGGREGATE, MANIFEST, aggregated_columns

TOY = {
    "scenario": "toy",
    "state": "fock",
    "state_n": 1,
    "kappa_per_us": 2.0,
    "toy_omega_MHz": 0.2,
    "grid_step_us": 0.1,
    "spectrum_times": 10,
    "spectrum_points": 21,
    "wigner_points": 11,
}


def config(tmp_path, name="run.txt", **changes):
    values = {**TOY, **changes}
    values = {k: v for k, v in values.items() if v is not None}
    path = tmp_path / name
    write_config(path, values)
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestDerive:
    def test_reference(self, tmp_path, capsys):
        net = tmp_path / "net.txt"
        write_config(net, {**reference_netlist().to_file_dict(), "kappa_per_us": 5.0})
        assert run("derive", "--config", net, "--out", tmp_path / "o") == EXIT_OK
        data = io.read_json(tmp_path / "o" / "derive.json")
        for key, target in (("chi_a_MHz", -0.017), ("chi_b_MHz", -0.04), ("chi_ab_MHz", -0.11)):
            assert abs(data["effective_params"][key] / target - 1) <= 0.15
        assert data["purcell"]["purcell_rate_per_us"] > 0
        assert "config_hash" in data["metadata"]

    def test_decoupled(self, tmp_path):
        net = tmp_path / "net.txt"
        write_config(net, reference_netlist().replace(C_ac=0.0, C_bc=0.0).to_file_dict())
        assert run("derive", "--config", net, "--out", tmp_path / "o") == EXIT_OK
        p = io.read_json(tmp_path / "o" / "derive.json")["effective_params"]
        assert p["chi_a_MHz"] == 0 and p["chi_b_MHz"] == 0 and p["chi_ab_MHz"] == 0

    def test_missing_key_exit_2(self, tmp_path, capsys):
        d = reference_netlist().to_file_dict()
        del d["L_b_nH"]
        net = tmp_path / "net.txt"
        write_config(net, d)
        assert run("derive", "--config", net, "--out", tmp_path / "o") == EXIT_CONFIG
        assert "L_b_nH" in capsys.readouterr().err


class TestEmit:
    def test_outputs(self, tmp_path):
        out = tmp_path / "o"
        assert run("emit", "--config", config(tmp_path), "--out", out) == EXIT_OK
        for name in ("g1.npy", "modes.csv", "modes.json", "flux.csv", "spectrogram.csv", "summary.json",
                     "modes.png", "spectrogram.png"):
            assert (out / name).exists(), name
        s = io.read_json(out / "summary.json")
        assert s["n_out"] == pytest.approx(1.0, abs=5e-3)
        assert s["n1_over_nout"] >= 0.999
        meta, cols, rows = io.read_csv(out / "modes.csv")
        assert cols[:3] == ["t_us", "re_v1", "im_v1"] and meta["config_hash"] == s["metadata"]["config_hash"]
        g = np.load(out / "g1.npy")
        assert g.shape[0] == g.shape[1] == len(rows)

    def test_vacuum(self, tmp_path):
        out = tmp_path / "o"
        assert run("emit", "--config", config(tmp_path, state_n=0), "--out", out, "--no-plots") == EXIT_OK
        s = io.read_json(out / "summary.json")
        assert s["n_out"] == 0 and s["occupations"] == [] and s["n1_over_nout"] is None
        assert not (out / "modes.png").exists()

    def test_max_modes_flag(self, tmp_path):
        out = tmp_path / "o"
        cfg = config(tmp_path, state_n=2, toy_kerr_MHz=0.47, kappa_per_us=1.0)
        assert run("emit", "--config", cfg, "--out", out, "--no-plots", "--max-modes", 2) == EXIT_OK
        assert len(io.read_json(out / "modes.json")["occupations"]) <= 2

    def test_config_error_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("scenario = toy\nstate = fock\n")
        assert run("emit", "--config", cfg, "--out", tmp_path / "o") == EXIT_CONFIG
        assert "state_n" in capsys.readouterr().err

    def test_parse_error_reports_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("scenario = toy\nthis line is wrong\n")
        assert run("emit", "--config", cfg, "--out", tmp_path / "o") == EXIT_CONFIG
        assert "line 2" in capsys.readouterr().err

    def test_simulation_failure_exit_1(self, tmp_path, monkeypatch, capsys):
        from multimode_emission import harness
        from multimode_emission.errors import IntegrationError

        def boom(*a, **k):
            raise IntegrationError("step size underflow", 0.5)

        monkeypatch.setattr(harness, "run_emission", boom)
        assert run("emit", "--config", config(tmp_path), "--out", tmp_path / "o") == EXIT_SIMULATION
        assert "underflow" in capsys.readouterr().err


class TestCapture:
    def test_fock_one(self, tmp_path):
        out = tmp_path / "o"
        assert run("capture", "--config", config(tmp_path), "--out", out) == EXIT_OK
        s = io.read_json(out / "summary.json")
        assert s["fidelity"] >= 0.999
        for name in ("capture.json", "fockfit.json", "wigner_initial.csv", "wigner_captured.csv", "wigner_captured.png"):
            assert (out / name).exists(), name

    def test_vacuum_passes_through(self, tmp_path):
        out = tmp_path / "o"
        assert run("capture", "--config", config(tmp_path, state_n=0), "--out", out, "--no-plots") == EXIT_OK
        assert io.read_json(out / "summary.json")["fidelity"] == pytest.approx(1.0)

    def test_cat_fit_written(self, tmp_path):
        out = tmp_path / "o"
        cfg = config(tmp_path, state="tccs", state_n=None, state_alpha_sq=1.0)
        assert run("capture", "--config", cfg, "--out", out, "--no-plots") == EXIT_OK
        fit = io.read_json(out / "catfit.json")
        assert fit["family"] == 2 and fit["fidelity"] >= 0.999
        assert fit["alpha_sq"] == pytest.approx(1.0, abs=1e-3)

    def test_drive_rate_outputs(self, tmp_path):
        out = tmp_path / "o"
        cfg = config(
            tmp_path, scenario="effective", kappa_per_us=5.0, toy_omega_MHz=None,
            optimize_t0="true", t0_candidates_us="1.0, 2.0",
        )
        assert run("capture", "--config", cfg, "--out", out, "--no-plots") == EXIT_OK
        dr = io.read_json(out / "drive_rate.json")
        assert dr["best_t0_us"] in (1.0, 2.0) and len(dr["candidates"]) == 2
        assert io.read_json(out / "summary.json")["best_t0_us"] == dr["best_t0_us"]


def sweep_config(tmp_path, **changes):
    return config(
        tmp_path, "sweep.txt", sweep_parameter="state_n", sweep_values="1, 2", sweep_mode="emit", **changes
    )


class TestSweep:
    def test_resume_is_idempotent(self, tmp_path, capsys):
        cfg, out = sweep_config(tmp_path), tmp_path / "s"
        assert run("sweep", "--config", cfg, "--out", out, "--workers", 1, "--no-plots") == EXIT_OK
        assert "2 simulated" in capsys.readouterr().out
        first = (out / AGGREGATE).read_text()
        assert run("sweep", "--config", cfg, "--out", out, "--workers", 1, "--resume") == EXIT_OK
        assert "0 simulated" in capsys.readouterr().out
        assert (out / AGGREGATE).read_text() == first
        values, cols = aggregated_columns(out / AGGREGATE)
        assert list(values) == [1.0, 2.0]
        assert np.all(cols["n_out"] > 0)
        assert (out / "state_n=1" / "point.json").exists()

    def test_existing_manifest_needs_resume(self, tmp_path):
        cfg, out = sweep_config(tmp_path), tmp_path / "s"
        assert run("sweep", "--config", cfg, "--out", out, "--workers", 1, "--no-plots") == EXIT_OK
        assert run("sweep", "--config", cfg, "--out", out, "--workers", 1) == EXIT_CONFIG

    def test_hash_mismatch_blocks_resume(self, tmp_path, capsys):
        out = tmp_path / "s"
        assert run("sweep", "--config", sweep_config(tmp_path), "--out", out, "--workers", 1, "--no-plots") == EXIT_OK
        changed = sweep_config(tmp_path, kappa_per_us=3.0)
        assert run("sweep", "--config", changed, "--out", out, "--workers", 1, "--resume") == EXIT_CONFIG
        assert "hash" in capsys.readouterr().err

    def test_missing_result_is_rerun(self, tmp_path, capsys):
        cfg, out = sweep_config(tmp_path), tmp_path / "s"
        run("sweep", "--config", cfg, "--out", out, "--workers", 1, "--no-plots")
        (out / "state_n=2" / "point.json").unlink()
        capsys.readouterr()
        assert run("sweep", "--config", cfg, "--out", out, "--workers", 1, "--resume", "--no-plots") == EXIT_OK
        assert "1 simulated" in capsys.readouterr().out

    def test_empty_values(self, tmp_path):
        cfg = config(tmp_path, "sweep.txt", sweep_parameter="state_n", sweep_values=",")
        assert run("sweep", "--config", cfg, "--out", tmp_path / "s") == EXIT_CONFIG

    def test_failed_point_recorded(self, tmp_path, capsys):
        cfg = config(tmp_path, "sweep.txt", sweep_parameter="kappa_per_us", sweep_values="2, -1")
        out = tmp_path / "s"
        assert run("sweep", "--config", cfg, "--out", out, "--workers", 1, "--no-plots") == EXIT_SIMULATION
        manifest = json.loads((out / MANIFEST).read_text())
        status = [p["status"] for p in manifest["points"]]
        assert status == ["done", "failed"]
        assert "kappa_per_us" in manifest["points"][1]["reason"]

    def test_derive_sweep_monotone(self, tmp_path):
        net = tmp_path / "net.txt"
        write_config(net, reference_netlist().to_file_dict())
        cfg = tmp_path / "sweep.txt"
        write_config(cfg, {
            "scenario": "circuit", "netlist": "net.txt", "state": "fock", "state_n": 1, "kappa_per_us": 5.0,
            "sweep_parameter": "C_ac_fF", "sweep_values": "3, 4, 5, 6", "sweep_mode": "derive",
        })
        out = tmp_path / "s"
        assert run("sweep", "--config", cfg, "--out", out, "--workers", 1) == EXIT_OK
        _, cols = aggregated_columns(out / AGGREGATE)
        assert np.all(np.diff(np.abs(cols["chi_ab_MHz"])) > 0)

    def test_parallel_workers(self, tmp_path):
        out = tmp_path / "s"
        assert run("sweep", "--config", sweep_config(tmp_path), "--out", out, "--workers", 2, "--no-plots") == EXIT_OK
        manifest = json.loads((out / MANIFEST).read_text())
        assert all(p["status"] == "done" for p in manifest["points"])


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "multimode_emission.cli", "emit", "--config", str(config(tmp_path)),
         "--out", str(tmp_path / "o"), "--no-plots"],
        capture_output=True, text=True,
    )
    assert out.returncode == 0, out.stderr
    assert json.loads(out.stdout)["n1_over_nout"] >= 0.999
