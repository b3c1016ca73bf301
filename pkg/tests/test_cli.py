import json
import subprocess
import sys

import numpy as np
import pytest

from biascomp.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, exit_code, main, output_dir
from biascomp.errors import ConfigError, NumericalFailure
from biascomp.harness import StageError


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps({"name": "small", "cell": "cell1_25c", "profile": {"cycles": 1},
                             "bias": [[0, 0.01]], "seed": 3}))
    return p


def write_csv(path, cols):
    names = list(cols)
    rows = [",".join(names)] + [",".join(repr(float(v)) for v in r)
                                for r in zip(*(cols[n] for n in names))]
    path.write_text("\n".join(rows) + "\n")


class TestExitCodes:
    def test_mapping(self):
        assert exit_code(ConfigError("x")) == EXIT_VALIDATION
        assert exit_code(NumericalFailure("x")) == EXIT_NUMERICAL
        assert exit_code(StageError("estimate", NumericalFailure("x"))) == EXIT_NUMERICAL
        assert exit_code(StageError("param_id", ConfigError("x"))) == EXIT_VALIDATION

    def test_missing_scenario(self, tmp_path, capsys):
        assert main(["simulate", str(tmp_path / "none.json"), "-o", str(tmp_path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_scenario(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"cell": "cell1_25c", "profile": {"soc_top": 2}}))
        assert main(["run", str(p), "-o", str(tmp_path)]) == EXIT_VALIDATION

    def test_numerical_failure(self, small, tmp_path, monkeypatch):
        import biascomp.harness as h

        def boom(*a, **k):
            raise NumericalFailure("singular innovation")

        monkeypatch.setattr(h, "run", boom)
        assert main(["run", str(small), "-o", str(tmp_path / "o")]) == EXIT_NUMERICAL

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["nonsense"])
        assert info.value.code == 2


class TestOutputDir:
    def test_precedence(self, monkeypatch):
        monkeypatch.delenv("BIASCOMP_OUTPUT_DIR", raising=False)
        assert str(output_dir(None)) == "out"
        monkeypatch.setenv("BIASCOMP_OUTPUT_DIR", "/tmp/elsewhere")
        assert str(output_dir(None)) == "/tmp/elsewhere"
        assert str(output_dir("given")) == "given"

    def test_env_var_used(self, small, tmp_path, monkeypatch):
        monkeypatch.setenv("BIASCOMP_OUTPUT_DIR", str(tmp_path / "env"))
        assert main(["simulate", str(small)]) == EXIT_OK
        assert (tmp_path / "env" / "measurements.csv").exists()


class TestCommands:
    def test_simulate(self, small, tmp_path):
        assert main(["simulate", str(small), "-o", str(tmp_path)]) == EXIT_OK
        header = (tmp_path / "measurements.csv").read_text().splitlines()[0]
        assert header.startswith("t_s,i_a,v_v")
        assert (tmp_path / "injection_hf.csv").exists() and (tmp_path / "injection_mf.csv").exists()

    def test_run_and_metrics(self, small, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["run", str(small), "--compare", "-o", str(out)]) == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert "comparison" in rep
        capsys.readouterr()
        traj = out / "trajectory.csv"
        assert main(["metrics", str(traj), str(traj)]) == EXIT_OK
        m = json.loads(capsys.readouterr().out)
        cols = np.genfromtxt(traj, delimiter=",", names=True, dtype=None, encoding=None)
        err = cols["soc_hat"] - cols["soc_true"]
        assert m["rmse_soc_pct"] == pytest.approx(100 * np.sqrt(np.mean(err**2)), rel=1e-12)
        assert m["qb_re_pct"] == pytest.approx(abs(rep["params_hat"]["qb_ah"] / 1.935 - 1) * 100)

    def test_baseline(self, small, tmp_path):
        assert main(["baseline", str(small), "-o", str(tmp_path)]) == EXIT_OK
        lines = (tmp_path / "baseline_cycle_metrics.csv").read_text().splitlines()
        assert lines[0] == "cycle,rmse_soc_pct,qb_re_pct" and len(lines) == 3

    def test_metrics_values(self, tmp_path, capsys):
        t = np.arange(4.0)
        write_csv(tmp_path / "e.csv", {"t_s": t, "soc_hat": [0.01, -0.01, 0.02, 0.0]})
        write_csv(tmp_path / "t.csv", {"t_s": t, "soc": np.zeros(4)})
        assert main(["metrics", str(tmp_path / "e.csv"), str(tmp_path / "t.csv")]) == EXIT_OK
        m = json.loads(capsys.readouterr().out)
        assert m == {"rmse_soc_pct": pytest.approx(1.2247, abs=1e-4)}

    def test_metrics_misaligned(self, tmp_path):
        write_csv(tmp_path / "e.csv", {"t_s": np.arange(4.0), "soc_hat": np.zeros(4)})
        write_csv(tmp_path / "t.csv", {"t_s": np.arange(4.0) + 1, "soc": np.zeros(4)})
        assert main(["metrics", str(tmp_path / "e.csv"), str(tmp_path / "t.csv")]) == 1
        write_csv(tmp_path / "t.csv", {"t_s": np.arange(4.0), "x": np.zeros(4)})
        assert main(["metrics", str(tmp_path / "e.csv"), str(tmp_path / "t.csv")]) == 1

    def test_fit_ocv(self, tmp_path, ocv):
        grid = np.linspace(0, 1, 41)
        write_csv(tmp_path / "a.csv", {"soc": grid, "v_ocv": ocv.eval(grid)})
        out = tmp_path / "curve.json"
        assert main(["fit-ocv", str(tmp_path / "a.csv"), "-o", str(out)]) == EXIT_OK
        assert len(json.loads(out.read_text())["coeffs"]) == 13

    def test_fit_ocv_too_few_anchors(self, tmp_path):
        grid = np.linspace(0, 1, 5)
        write_csv(tmp_path / "a.csv", {"soc": grid, "v_ocv": 3 + 0.5 * grid})
        assert main(["fit-ocv", str(tmp_path / "a.csv"), "-o", str(tmp_path / "c.json")]) == 1

    def test_module_entry_point(self):
        r = subprocess.run([sys.executable, "-m", "biascomp", "--help"], capture_output=True,
                           text=True)
        assert r.returncode == 0 and "fit-ocv" in r.stdout
