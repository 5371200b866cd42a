import io as _io
import json

import numpy as np
import pytest

from esindy import cli
from esindy.io import read_data_csv


def run(*argv):
    out, err = _io.StringIO(), _io.StringIO()
    code = cli.main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def lorenz_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "lorenz.csv"
    code, _, _ = run("simulate", "--system", "lorenz", "--T", "5", "--output", str(path))
    assert code == 0
    return path


class TestSimulate:
    @pytest.mark.parametrize("system", ["lorenz", "lotka_volterra", "forced_lorenz"])
    def test_ode_systems(self, tmp_path, system):
        path = tmp_path / "d.csv"
        assert run("simulate", "--system", system, "--T", "1", "--output", str(path))[0] == 0
        data, ctrl = read_data_csv(path, ("u",) if system == "forced_lorenz" else ())
        assert data.m == 101 and (ctrl is not None) == (system == "forced_lorenz")

    def test_noise_is_seeded(self, tmp_path):
        for name in ("a", "b"):
            run("simulate", "--T", "1", "--noise", "0.05", "--seed", "3", "--output", str(tmp_path / f"{name}.csv"))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestDiscover:
    def test_recovers_lorenz(self, lorenz_csv, tmp_path):
        from esindy.regression import CoefficientMatrix
        from esindy.systems import lorenz

        path = tmp_path / "m.json"
        code, out, _ = run("discover", "--input", str(lorenz_csv), "--output", str(path))
        assert code == 0 and len(out.strip().splitlines()) == 3
        xi = CoefficientMatrix.from_dict(json.loads(path.read_text())["model"]).xi
        true = lorenz().true_coefficients.xi
        assert np.array_equal(xi != 0, true != 0)
        np.testing.assert_allclose(xi, true, rtol=0.03)

    def test_bundled_default_input(self):
        code, out, _ = run("discover")
        assert code == 0 and "dx/dt" in out

    def test_output_echoes_config(self, lorenz_csv, tmp_path):
        path = tmp_path / "m.json"
        run("discover", "--input", str(lorenz_csv), "--lambda1", "0.3", "--output", str(path))
        body = json.loads(path.read_text())
        assert body["config"]["lambda1"] == 0.3 and "output" not in body["config"]


class TestEnsemble:
    @pytest.mark.parametrize("method,tol", [("bagging", 0.6), ("bragging", 0.6), ("library-bagging", 0.4)])
    def test_default_thresholds(self, lorenz_csv, tmp_path, method, tol):
        path = tmp_path / "e.json"
        code, _, _ = run("ensemble", "--input", str(lorenz_csv), "--method", method, "--q", "10",
                         "--output", str(path))
        assert code == 0
        assert json.loads(path.read_text())["ensemble"]["ip_threshold"] == tol

    def test_precedence_flag_over_config(self, lorenz_csv, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"q": 7, "tol": 0.3, "seed": 5}))
        path = tmp_path / "e.json"
        run("ensemble", "--input", str(lorenz_csv), "--config", str(conf), "--tol", "0.5", "--output", str(path))
        ens = json.loads(path.read_text())["ensemble"]
        assert ens["n_models"] == 7 and ens["ip_threshold"] == 0.5 and ens["seed"] == 5

    def test_threads_do_not_change_output(self, lorenz_csv, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run("ensemble", "--input", str(lorenz_csv), "--q", "8", "--output", str(a))
        run("--threads", "3", "ensemble", "--input", str(lorenz_csv), "--q", "8", "--output", str(b))
        assert a.read_bytes() == b.read_bytes()


class TestErrors:
    def test_missing_input_file(self, tmp_path):
        code, _, err = run("discover", "--input", str(tmp_path / "missing.csv"))
        assert code == 1 and "missing.csv" in err

    def test_unknown_config_key(self, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"lambda_one": 0.1}))
        code, _, err = run("discover", "--config", str(conf))
        assert code == 1 and "lambda_one" in err

    @pytest.mark.parametrize("argv", [["frobnicate"], ["discover", "--lambda1", "abc"],
                                      ["ensemble", "--method", "boosting"]])
    def test_bad_arguments(self, argv):
        assert run(*argv)[0] == 1

    def test_bad_parameter_value(self, lorenz_csv):
        assert run("forecast", "--input", str(lorenz_csv), "--coverage", "1.5", "--n-draws", "2")[0] == 1


class TestOtherCommands:
    def test_weak(self, tmp_path):
        code, out, _ = run("weak", "--system", "burgers", "--q", "10", "--output", str(tmp_path / "w.json"))
        assert code == 0 and out.startswith("u_t = ")

    def test_forecast(self, lorenz_csv, tmp_path):
        path = tmp_path / "f.csv"
        code, _, _ = run("forecast", "--input", str(lorenz_csv), "--q", "10", "--n-draws", "20", "--T", "0.5",
                         "--output", str(path))
        assert code == 0
        header = path.read_text().splitlines()[0].split(",")
        assert header[0] == "t" and len(header) > 4

    def test_hudson_bay(self, tmp_path):
        path = tmp_path / "hb.json"
        code, out, _ = run("hudson-bay", "--n-draws", "20", "--output", str(path))
        assert code == 0 and "hare" in out

    def test_sweep(self, tmp_path):
        code, _, _ = run("sweep", "--n-realizations", "1", "--durations", "1", "--methods", "sindy",
                         "--output", str(tmp_path / "s"))
        assert code == 0 and (tmp_path / "s.csv").exists()

    def test_active(self, tmp_path):
        path = tmp_path / "a.json"
        code, _, _ = run("active", "--n-iterations", "1", "--n-candidates", "5", "--initial-budget", "30",
                         "--output", str(path))
        assert code == 0 and len(json.loads(path.read_text())["history"]) == 2

    def test_mpc(self, tmp_path):
        code, _, _ = run("mpc", "--total-steps", "3", "--method", "sindy", "--output", str(tmp_path / "m"))
        assert code == 0
        assert np.isfinite(json.loads((tmp_path / "m.json").read_text())["mean_cost"])
