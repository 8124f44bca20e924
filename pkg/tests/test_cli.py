"""Command-line pipeline: exit codes, artifacts, determinism."""

import json

import numpy as np
import pytest

from hankelmpc import cli
from hankelmpc import serialization as ser


def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen") / "data"
    code = run_cli("gen-data", "--plant", "four-tank", "--seed", "1",
                   "--length", "100", "--out", str(out))
    assert code == 0
    return out


@pytest.fixture(scope="module")
def cert_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("design") / "cert"
    code = run_cli("design", "--data", str(data_dir / "data.csv"),
                   "--horizon", "15", "--window", "2",
                   "--q-scale", "1.0", "--r-scale", "0.005",
                   "--u-bound", "2.0", "--setpoint", "1,1:0.65,0.77",
                   "--zero-controller", "--out", str(out))
    assert code == 0
    return out


class TestGenData:
    def test_artifacts_written(self, data_dir):
        assert (data_dir / "data.csv").exists()
        assert (data_dir / "plant.json").exists()
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert manifest["command"] == "gen-data"

    def test_seed_reproduces_bytes(self, tmp_path, data_dir):
        again = tmp_path / "again"
        assert run_cli("gen-data", "--plant", "four-tank", "--seed", "1",
                       "--length", "100", "--out", str(again)) == 0
        assert (again / "data.csv").read_bytes() == (data_dir / "data.csv").read_bytes()

    def test_input_range_respected(self, data_dir):
        traj = ser.load_trajectory_csv(data_dir / "data.csv")
        assert np.max(np.abs(traj.u)) <= 1.0

    def test_bad_plant_spec_usage_error(self, tmp_path):
        assert run_cli("gen-data", "--plant", "missing.json",
                       "--out", str(tmp_path / "x")) == 1


class TestCheck:
    def test_demo_passes(self, tmp_path, data_dir):
        out = tmp_path / "check"
        code = run_cli("check", "--data", str(data_dir / "data.csv"),
                       "--horizon", "15", "--window", "2", "--order-bound", "4",
                       "--setpoint", "1,1:0.65,0.77", "--out", str(out))
        assert code == 0
        report = json.loads((out / "check.json").read_text())
        assert report["pe_ok"] and report["z_full_row_rank"]
        assert report["pl_equals_n"] and report["equilibrium"]
        orders = [entry["order"] for entry in report["pe_orders"]]
        assert orders == list(range(1, 22))

    def test_constant_input_fails(self, tmp_path):
        import hankelmpc as hm
        sys = hm.four_tank_system()
        u = np.ones((40, 2))
        _, y = hm.simulate(sys, np.zeros(4), u)
        data = tmp_path / "flat.csv"
        ser.save_trajectory_csv(data, hm.IoTrajectory(u, y))
        out = tmp_path / "check"
        code = run_cli("check", "--data", str(data), "--horizon", "5",
                       "--window", "2", "--out", str(out))
        assert code == 2
        report = json.loads((out / "check.json").read_text())
        assert not report["pe_ok"]

    def test_non_equilibrium_setpoint_fails(self, tmp_path, data_dir):
        out = tmp_path / "check"
        code = run_cli("check", "--data", str(data_dir / "data.csv"),
                       "--horizon", "15", "--window", "2",
                       "--setpoint", "1,1:0.4,0.9", "--out", str(out))
        assert code == 2
        report = json.loads((out / "check.json").read_text())
        assert report["equilibrium"] is False
        assert report["pe_ok"]  # only the equilibrium verdict fails

    def test_malformed_csv_names_row(self, tmp_path, capsys):
        data = tmp_path / "broken.csv"
        data.write_text("k,u_1,y_1\n0,0.1,0.2\n1,0.3,0.4,0.5\n")
        code = run_cli("check", "--data", str(data), "--horizon", "2",
                       "--window", "1", "--out", str(tmp_path / "out"))
        assert code == 1
        assert "row 3" in capsys.readouterr().err


class TestDesign:
    def test_certificate_written_and_verified(self, cert_dir):
        cert = json.loads((cert_dir / "certificate.json").read_text())
        assert cert["format"] == ser.CERTIFICATE_FORMAT
        assert cert["verification"]["passed"]
        assert cert["gamma"] > 0

    def test_bounds_file(self, tmp_path, data_dir):
        bounds = tmp_path / "bounds.json"
        bounds.write_text(json.dumps({
            "u_box": {"lower": [-2.0, -2.0], "upper": [2.0, 2.0]},
            "y_box": {"lower": [None, None], "upper": [None, None]},
        }))
        out = tmp_path / "cert"
        code = run_cli("design", "--data", str(data_dir / "data.csv"),
                       "--horizon", "15", "--window", "2",
                       "--q-scale", "1.0", "--r-scale", "0.005",
                       "--bounds", str(bounds), "--setpoint", "1,1:0.65,0.77",
                       "--zero-controller", "--out", str(out))
        assert code == 0
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["y_box"]["upper"] == [None, None]
        assert cert["u_box"]["upper"] == [2.0, 2.0]

    def test_rank_deficient_data_exit_2(self, tmp_path):
        import hankelmpc as hm
        sys = hm.four_tank_system()
        u = np.ones((40, 2))
        _, y = hm.simulate(sys, np.zeros(4), u)
        data = tmp_path / "flat.csv"
        ser.save_trajectory_csv(data, hm.IoTrajectory(u, y))
        code = run_cli("design", "--data", str(data), "--horizon", "5",
                       "--window", "2", "--setpoint", "1,1:0.65,0.77",
                       "--u-bound", "2.0", "--out", str(tmp_path / "cert"))
        assert code == 2


class TestRun:
    def test_equilibrium_start_flat(self, tmp_path, data_dir, cert_dir):
        import hankelmpc as hm
        out = tmp_path / "run"
        # start the plant at the setpoint's steady state
        u_s, y_s = hm.FOUR_TANK_SETPOINT
        plant = hm.four_tank_system()
        x_s, _ = hm.steady_state(plant, u_s)
        x0 = ",".join("%.17g" % v for v in x_s)
        code = run_cli("run", "--data", str(data_dir / "data.csv"),
                       "--cert", str(cert_dir / "certificate.json"),
                       "--plant", "four-tank", "--x0", x0, "--steps", "12",
                       "--horizon", "15", "--terminal-mode", "cost-only",
                       "--warmup-input", "1,1", "--out", str(out))
        assert code == 0
        trace = (out / "trace.csv").read_text().splitlines()
        row = trace[1].split(",")
        assert abs(float(row[1]) - 1.0) < 1e-4 and abs(float(row[2]) - 1.0) < 1e-4
        summary = json.loads((out / "summary.json").read_text())
        assert summary["outcome"] == "converged"
        assert (out / "inputs.svg").exists() and (out / "outputs.svg").exists()

    def test_ablation_fails_convergence(self, tmp_path, data_dir, cert_dir):
        out = tmp_path / "ablation"
        code = run_cli("run", "--data", str(data_dir / "data.csv"),
                       "--cert", str(cert_dir / "certificate.json"),
                       "--plant", "four-tank", "--x0", "0.1,0.1,0.2,0.2",
                       "--steps", "80", "--horizon", str(cli.ABLATION_HORIZON),
                       "--lambda-alpha", "1e-4", "--terminal-mode", "none",
                       "--out", str(out))
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["outcome"] != "converged"


class TestUsage:
    def test_unknown_command(self):
        assert run_cli("frobnicate") == 1

    def test_missing_required_flag(self):
        assert run_cli("gen-data") == 1
