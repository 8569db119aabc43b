import json
import subprocess
import sys

import numpy as np
import pytest

from phmultibody.cli import InputError, main, parse_effort, parse_init, parse_params


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def summary(out):
    return dict(line.split("=", 1) for line in out.splitlines() if "=" in line)


class TestSimulate:
    def test_gyroscope_csv(self, capsys, tmp_path):
        path = tmp_path / "traj.csv"
        code, out, _ = run(capsys, "simulate", "--model", "gyroscope", "--init", "omega=10,0,0",
                           "--t-end", "10", "--dt", "1e-3", "--out", str(path))
        assert code == 0
        lines = path.read_text().splitlines()
        assert len(lines) == 10001 + 1
        assert lines[0].startswith("t,zeta_0,zeta_1,zeta_2,omega_0,omega_1,omega_2,H,")
        assert summary(out)["steps"] == "10000"
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert np.max(np.abs(data[:, 4] - 10.0)) < 1e-9

    def test_gimbal_lock_input(self, capsys):
        code, _, err = run(capsys, "simulate", "--model", "gyroscope", "--init", "zeta=0,1.57,0;omega=0,1,0")
        assert code == 3
        assert "gimbal lock" in err

    def test_slider_crank(self, capsys):
        code, out, _ = run(capsys, "simulate", "--model", "slider-crank", "--init", "omega1=5",
                           "--t-end", "0.5", "--dt", "1e-3")
        assert code == 0
        s = summary(out)
        assert float(s["max_constraint_residual"]) <= 1e-8
        assert float(s["max_coupling_power_residual"]) <= 1e-10
        assert s["rank_drops"] == "0"

    def test_projection_distance_reported(self, capsys):
        code, out, _ = run(capsys, "simulate", "--model", "diff-drive", "--init", "omega=1,0.1,0.2",
                           "--t-end", "0.01", "--dt", "1e-3")
        assert code == 0
        assert float(summary(out)["projection_distance"]) == pytest.approx(0.1)

    def test_effort_and_params(self, capsys, tmp_path):
        path = tmp_path / "t.csv"
        code, _, _ = run(capsys, "simulate", "--model", "diff-drive", "--param", "m=2", "--effort", "constant:-1,-1",
                         "--t-end", "1", "--dt", "1e-2", "--out", str(path))
        assert code == 0
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        # two unit pushes on a 2 kg robot
        np.testing.assert_allclose(data[:, 4], data[:, 0], atol=1e-12)

    @pytest.mark.parametrize("argv", [
        ["simulate", "--model", "unicycle"],
        ["simulate"],
        ["simulate", "--model", "gyroscope", "--dt", "0"],
        ["simulate", "--model", "gyroscope", "--init", "omega=1,2"],
        ["simulate", "--model", "gyroscope", "--param", "m=-1"],
        ["simulate", "--model", "gyroscope", "--effort", "ramp:1"],
        ["simulate", "--model", "gyroscope", "--scheme", "euler"],
        ["simulate", "--model", "remark-a1-counterexample"],
        ["frobnicate"],
    ])
    def test_invalid_input(self, capsys, argv):
        assert run(capsys, *argv)[0] == 3

    def test_solver_failure(self, capsys):
        code, _, err = run(capsys, "simulate", "--model", "gyroscope", "--init", "omega=10,5,3",
                           "--t-end", "0.01", "--dt", "1e-3", "--newton-max-iter", "1", "--newton-tol", "1e-300")
        assert code == 2
        assert "solver failure" in err


class TestVerify:
    def test_diff_drive(self, capsys, tmp_path):
        path = tmp_path / "r.json"
        code, out, _ = run(capsys, "verify", "--model", "diff-drive", "--samples", "200", "--seed", "42",
                           "--report", str(path))
        assert code == 0
        assert summary(out)["overall"] == "pass"
        report = json.loads(path.read_text())
        assert report["samples"]["count"] == 200

    def test_counterexample(self, capsys):
        code, out, _ = run(capsys, "verify", "--model", "remark-a1-counterexample")
        assert code == 1
        assert summary(out)["dirac_dimension_constancy"] == "fail witness=0.0"

    @pytest.mark.parametrize("n", ["0", "-3"])
    def test_bad_sample_count(self, capsys, n):
        assert run(capsys, "verify", "--model", "gyroscope", "--samples", n)[0] == 3

    def test_report_is_deterministic(self, capsys, tmp_path):
        texts = []
        for i in range(2):
            p = tmp_path / f"r{i}.json"
            run(capsys, "verify", "--model", "slider-crank", "--samples", "30", "--report", str(p))
            texts.append(p.read_text())
        assert texts[0] == texts[1]


class TestCouple:
    def test_equals_builtin(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        common = ["--init", "omega1=5", "--t-end", "0.05", "--dt", "1e-3"]
        code, out, _ = run(capsys, "couple", "--a", "crank", "--b", "rod-slider", "--pair", "0,1:0,1",
                           "--simulate", "--out", str(a), *common)
        assert code == 0
        assert summary(out)["interconnection_rank"] == "pass"
        assert summary(out)["rank"] == "2"
        assert run(capsys, "simulate", "--model", "slider-crank", "--out", str(b), *common)[0] == 0
        assert a.read_text() == b.read_text()

    @pytest.mark.parametrize("pair", ["0,1:0", "0,5:0,1", "x"])
    def test_bad_pairing(self, capsys, pair):
        assert run(capsys, "couple", "--a", "crank", "--b", "rod-slider", "--pair", pair)[0] == 3

    def test_rank_drop(self, capsys):
        code, out, err = run(capsys, "couple", "--a", "rank-drop-a", "--b", "rank-drop-b", "--pair", "0:0")
        assert code == 1
        s = summary(out)
        assert s["interconnection_rank"] == "fail"
        assert s["witness"].split(",")[0] == "0.0"
        assert "--force" in err

    def test_rank_drop_forced(self, capsys):
        code, out, _ = run(capsys, "couple", "--a", "rank-drop-a", "--b", "rank-drop-b", "--pair", "0:0", "--force")
        assert code == 0
        assert summary(out)["guaranteed_class"] == "no (forced)"

    def test_prefixed_params(self, capsys):
        code, _, _ = run(capsys, "couple", "--a", "cart", "--b", "cart", "--pair", "0:0",
                         "--param", "a.m=2", "--param", "b.m=3", "--verify", "--samples", "20")
        assert code == 0
        assert run(capsys, "couple", "--a", "cart", "--b", "cart", "--pair", "0:0", "--param", "m=2")[0] == 3


class TestConfig:
    def test_flags_override_file(self, capsys, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "model": "gyroscope",
            "init": "omega=1,0,0",
            "sim": {"dt": 0.1, "t_end": 1.0},
        }))
        code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--t-end", "0.5")
        assert code == 0
        s = summary(out)
        assert s["steps"] == "5" and float(s["dt"]) == 0.1

    def test_structured_effort_in_file(self, capsys, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"model": "gyroscope", "effort": {"type": "constant", "value": [0.5]},
                                   "t_end": 0.1, "dt": 0.01}))
        assert run(capsys, "simulate", "--config", str(cfg))[0] == 0

    def test_unreadable_file(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(capsys, "simulate", "--config", str(bad))[0] == 3
        assert run(capsys, "simulate", "--config", str(tmp_path / "none.json"))[0] == 3


class TestParsing:
    def test_init(self):
        assert parse_init("zeta=0,1.5,0; omega=1,2,3") == {"zeta": [0.0, 1.5, 0.0], "omega": [1.0, 2.0, 3.0]}
        with pytest.raises(InputError):
            parse_init("zeta")

    def test_params(self):
        assert parse_params(["m=2", "b=0.3"]) == {"m": 2.0, "b": 0.3}
        with pytest.raises(InputError):
            parse_params(["m"])

    def test_effort_forms(self):
        f = parse_effort("sine:amplitude=2;frequency=0.25;offset=1", 1)
        assert f(1.0)[0] == pytest.approx(3.0)
        g = parse_effort("table:0=1,2;0.5=3,4", 2)
        np.testing.assert_array_equal(g(0.2), [1, 2])
        np.testing.assert_array_equal(g(0.5), [3, 4])
        np.testing.assert_array_equal(parse_effort("constant:2", 2)(0.0), [2, 2])
        np.testing.assert_array_equal(parse_effort(None, 2)(0.0), [0, 0])
        with pytest.raises(InputError):
            parse_effort("constant:1,2,3", 2)
        with pytest.raises(InputError):
            parse_effort("table:1=0;0=1", 1)


class TestEntryPoint:
    def test_module_runs(self):
        p = subprocess.run([sys.executable, "-m", "phmultibody", "models"], capture_output=True, text=True)
        assert p.returncode == 0
        names = [line.split("\t")[0] for line in p.stdout.splitlines()]
        for n in ("diff-drive", "diff-drive-reduced", "gyroscope", "crank", "rod-slider", "slider-crank"):
            assert n in names
