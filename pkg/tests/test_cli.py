import json
import math
import subprocess
import sys

import numpy as np
import pytest

from lipnnm.cli import EXIT_CONFIG, EXIT_SOLVER, dumps, main
from lipnnm.model import broken_supports_model, oscillator_1dof
from lipnnm.periodic import exact_period_piecewise_1dof


def run(tmp_path, *args, sub="out"):
    out = tmp_path / sub
    code = main([*args, "--out", str(out)])
    return code, out


class TestCommands:
    def test_periodic_matches_oracle(self, tmp_path, capsys):
        code, out = run(tmp_path, "periodic", "--model", "oscillator_1dof", "--eps", "0.1")
        assert code == 0
        record = json.loads((out / "periodic.json").read_text())
        exact = 2 * math.pi / exact_period_piecewise_1dof(1.0, 0.1)
        assert abs(record["omega_eps"] - exact) / record["omega_eps"] <= 1e-6
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "theta,x1,v1"
        assert json.loads(capsys.readouterr().out) == record

    def test_static_natural_singular(self, tmp_path, capsys):
        model = tmp_path / "broken.json"
        broken_supports_model(5, epsilon=0.1).save(model)
        code, out = run(tmp_path, "static", "--model", str(model), "--method", "natural")
        assert code == EXIT_SOLVER
        assert "singular" in capsys.readouterr().err
        report = json.loads((out / "error.json").read_text())
        assert report["code"] == "singular_matrix" and "singular" in report["message"]

    def test_static_quasi(self, tmp_path):
        code, out = run(tmp_path, "static", "--model", "broken5", "--force", "1,-2,1.5,-1,0.5")
        assert code == 0
        record = json.loads((out / "static.json").read_text())
        assert record["converged"] and record["residual"] <= 1e-9
        rows = (out / "solution.csv").read_text().splitlines()
        assert rows[0] == "dof,u" and len(rows) == 6

    def test_modes_diag(self, tmp_path):
        code, out = run(tmp_path, "modes", "--model", "diag2")
        assert code == 0
        rows = [r.split(",") for r in (out / "modes.csv").read_text().splitlines()]
        assert rows[0][:3] == ["mode", "omega2", "omega"]
        assert [float(r[1]) for r in rows[1:]] == pytest.approx([1.0, 4.0])

    def test_sweep(self, tmp_path):
        code, out = run(tmp_path, "sweep", "--model", "oscillator_1dof", "--eps", "0.05",
                        "--eps-to", "0.2", "--eps-steps", "4", "--grid", "1024")
        assert code == 0
        lines = (out / "summary.csv").read_text().splitlines()
        assert lines[0] == "eps,eta,omega_eps,residual,iterations"
        assert len(lines) == 5
        assert sorted(p.name for p in out.glob("stage_*.json")) == [
            f"stage_{k:03d}.json" for k in range(4)]
        for line in lines[1:]:
            eps, _, w, *_ = map(float, line.split(","))
            assert w == pytest.approx(2 * math.pi / exact_period_piecewise_1dof(1.0, eps), rel=1e-6)

    def test_sweep_cold_start(self, tmp_path):
        code, out = run(tmp_path, "sweep", "--model", "oscillator_1dof", "--eps", "0.05",
                        "--eps-to", "0.1", "--eps-steps", "2", "--cold-start", "--grid", "512")
        assert code == 0

    def test_oracle(self, tmp_path):
        code, out = run(tmp_path, "oracle", "--omega", "1", "--eps", "3")
        assert code == 0
        assert json.loads((out / "oracle.json").read_text())["period"] == pytest.approx(1.5 * math.pi)

    def test_model_file(self, tmp_path):
        model = tmp_path / "osc.json"
        oscillator_1dof(epsilon=0.2).save(model)
        code, out = run(tmp_path, "periodic", "--model", str(model), "--grid", "512")
        assert code == 0
        assert json.loads((out / "periodic.json").read_text())["eps"] == 0.2


class TestDeterminism:
    @pytest.mark.parametrize("args", [
        ("periodic", "--model", "chain3", "--eps", "0.05", "--grid", "512"),
        ("static", "--model", "broken5", "--seed", "7"),
    ])
    def test_byte_identical(self, tmp_path, args):
        _, a = run(tmp_path, *args, sub="a")
        _, b = run(tmp_path, *args, sub="b")
        for f in a.iterdir():
            assert f.read_bytes() == (b / f.name).read_bytes()

    def test_float_format(self):
        assert dumps({"x": 0.1, "n": 3, "v": np.array([1.0, float("nan")])}) == \
            '{"x": 0.10000000000000001, "n": 3, "v": [1, null]}\n'


class TestErrors:
    @pytest.mark.parametrize("args", [
        ("periodic", "--model", "oscillator_1dof", "--grid", "1000"),
        ("periodic", "--model", "oscillator_1dof", "--tol", "-1"),
        ("periodic", "--model", "no_such_model"),
        ("sweep", "--model", "oscillator_1dof", "--eps", "0.2", "--eps-to", "0.1"),
        ("sweep", "--model", "oscillator_1dof", "--eps", "0.1", "--eps-to", "0.2",
         "--eps-steps", "1"),
        ("static", "--model", "broken5", "--force", "1,x"),
        ("static", "--model", "broken5", "--force", "1,2"),
        ("periodic", "--model", "oscillator_1dof", "--alpha", "0.5"),
        ("periodic",),
    ])
    def test_config_errors(self, tmp_path, args):
        code, out = run(tmp_path, *args)
        assert code == EXIT_CONFIG
        assert json.loads((out / "error.json").read_text())["code"] == "invalid_argument"

    def test_bad_model_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        code, _ = run(tmp_path, "modes", "--model", str(bad))
        assert code == EXIT_CONFIG

    def test_resonance_code(self, tmp_path):
        model = tmp_path / "res.json"
        model.write_text(json.dumps({
            "n_dof": 2, "masses": [1.0, 1.0], "epsilon": 0.1,
            "springs": [{"dofs": [0], "E": 1.0, "Eprime": 1.0},
                        {"dofs": [1], "E": 4.0, "Eprime": 1.0}]}))
        code, out = run(tmp_path, "periodic", "--model", str(model))
        assert code == EXIT_SOLVER
        assert json.loads((out / "error.json").read_text())["code"] == "resonance"

    def test_distinct_codes(self):
        from lipnnm import errors

        classes = [c for c in vars(errors).values()
                   if isinstance(c, type) and issubclass(c, errors.LipNNMError)]
        codes = [c.code for c in classes]
        assert len(codes) == len(set(codes))


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lipnnm", "oracle", "--eps", "0"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["period"] == pytest.approx(2 * math.pi)
