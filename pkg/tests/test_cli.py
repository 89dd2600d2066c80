import json

import numpy as np
import pytest

from aimer import dataio
from aimer.cli import main


def write_xy(tmp_path, seed=0, n=30, p=6, signal=2):
    gen = np.random.default_rng(seed)
    x = gen.standard_normal((n, p))
    y = x[:, :signal] @ gen.uniform(0.8, 1.5, signal) + 0.3 * gen.standard_normal(n)
    x_path = tmp_path / "x.csv"
    y_path = tmp_path / "y.csv"
    header = ",".join(f"g{j}" for j in range(p))
    rows = "\n".join(",".join(repr(float(v)) for v in row) for row in x)
    x_path.write_text(header + "\n" + rows + "\n")
    y_path.write_text("response\n" + "\n".join(repr(float(v)) for v in y) + "\n")
    return x_path, y_path, x, y


class TestFitAndPredict:
    def test_fit_writes_model_with_config_echo(self, tmp_path, capsys):
        x_path, y_path, x, _ = write_xy(tmp_path)
        out = tmp_path / "fit.json"
        code = main([
            "fit", "--method", "aimer", "--x", str(x_path), "--y", str(y_path),
            "--ell", "3", "--d", "2", "--b", "0.0", "--seed", "5",
            "--out", str(out),
        ])
        assert code == 0
        payload = dataio.read_json(out)
        assert payload["method"] == "aimer"
        assert payload["config"]["root_seed"] == 5
        assert payload["config"]["command"] == "fit"
        assert payload["hyperparams"]["d"] == 2
        assert len(payload["columnMeans"]) == x.shape[1]
        shown = capsys.readouterr().out
        assert "selected genes" in shown

    def test_predict_at_column_means_returns_intercept(self, tmp_path, capsys):
        x_path, y_path, x, y = write_xy(tmp_path, seed=1)
        model = tmp_path / "fit.json"
        main(["fit", "--method", "ridge", "--x", str(x_path), "--y", str(y_path),
              "--lambda", "1.0", "--out", str(model)])
        means = x.mean(axis=0)
        new = tmp_path / "new.csv"
        header = ",".join(f"g{j}" for j in range(x.shape[1]))
        new.write_text(header + "\n" + ",".join(repr(float(v)) for v in means) + "\n")
        pred_path = tmp_path / "pred.csv"
        code = main(["predict", "--model", str(model), "--x", str(new),
                     "--out", str(pred_path)])
        assert code == 0
        rows = dataio.read_rows_csv(pred_path)
        assert rows[0]["prediction"] == pytest.approx(float(y.mean()), abs=1e-10)

    def test_fit_all_methods_run(self, tmp_path):
        x_path, y_path, _, _ = write_xy(tmp_path, seed=2, n=40, p=8)
        flags = {
            "aimer": ["--ell", "4", "--d", "2"],
            "spc": ["--ell", "4", "--d", "1"],
            "spc-lasso": ["--ell", "4", "--lambda", "0.05"],
            "pcr": ["--d", "2"],
            "ridge": ["--lambda", "1.0"],
            "lasso": ["--lambda", "0.05"],
        }
        for method, extra in flags.items():
            out = tmp_path / f"{method}.json"
            code = main(["fit", "--method", method, "--x", str(x_path),
                         "--y", str(y_path), "--out", str(out)] + extra)
            assert code == 0, method
            assert dataio.read_json(out)["method"] == method.replace("-", "_")

    def test_selection_flags_are_exclusive(self, tmp_path, capsys):
        x_path, y_path, _, _ = write_xy(tmp_path, seed=3)
        code = main(["fit", "--method", "aimer", "--x", str(x_path),
                     "--y", str(y_path), "--ell", "3", "--tstar", "0.2"])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("validation-error:")
        assert err.count("\n") == 1


class TestCvCommand:
    def test_cv_aimer_auto_grids(self, tmp_path):
        x_path, y_path, _, _ = write_xy(tmp_path, seed=4, n=40, p=8)
        out = tmp_path / "cv.json"
        code = main([
            "cv", "--method", "aimer", "--x", str(x_path), "--y", str(y_path),
            "--ell-grid", "3,5", "--d-grid", "1,2", "--b-grid", "auto",
            "--cv-k", "4", "--seed", "9", "--out", str(out),
        ])
        assert code == 0
        payload = dataio.read_json(out)
        assert payload["best_params"]["ell"] in (3, 5)
        assert payload["best_params"]["d"] in (1, 2)
        assert payload["fit"]["method"] == "aimer"
        assert payload["config"]["root_seed"] == 9
        assert len(payload["surface"]) > 4

    def test_cv_lasso_explicit_grid(self, tmp_path):
        x_path, y_path, _, _ = write_xy(tmp_path, seed=5)
        out = tmp_path / "cv.json"
        code = main(["cv", "--method", "lasso", "--x", str(x_path),
                     "--y", str(y_path), "--lambda-grid", "0.01,0.1,1.0",
                     "--cv-k", "3", "--out", str(out)])
        assert code == 0
        payload = dataio.read_json(out)
        assert payload["best_params"]["lam"] in (0.01, 0.1, 1.0)


class TestAuditCommand:
    def test_independent_columns_give_zero_fnr(self, tmp_path, capsys):
        gen = np.random.default_rng(6)
        n, p = 120, 5
        x = gen.standard_normal((n, p))
        y = x[:, 0] + 0.5 * gen.standard_normal(n)
        x_path = tmp_path / "x.csv"
        y_path = tmp_path / "y.csv"
        x_path.write_text(
            ",".join(f"g{j}" for j in range(p)) + "\n"
            + "\n".join(",".join(repr(float(v)) for v in row) for row in x) + "\n")
        y_path.write_text("y\n" + "\n".join(repr(float(v)) for v in y) + "\n")
        out = tmp_path / "audit.json"
        code = main(["audit", "--x", str(x_path), "--y", str(y_path),
                     "--lambda", "5.0", "--topk", "2", "--out", str(out)])
        assert code == 0
        payload = dataio.read_json(out)
        col = payload["columns"][0]
        # a huge penalty gives a diagonal precision: nothing can be missed
        assert col["sparsity"] == 1.0
        assert col["fnr"] == 0.0
        assert col["pct_nonzero_beta"] == pytest.approx(2 / 5)
        shown = capsys.readouterr().out
        assert "sparsity" in shown and "false neg. rate" in shown

    def test_multiple_lambdas_make_table_columns(self, tmp_path):
        gen = np.random.default_rng(7)
        x = gen.standard_normal((80, 4))
        y = x[:, 0] + gen.standard_normal(80)
        x_path = tmp_path / "x.csv"
        y_path = tmp_path / "y.csv"
        x_path.write_text(
            "a,b,c,d\n"
            + "\n".join(",".join(repr(float(v)) for v in row) for row in x) + "\n")
        y_path.write_text("y\n" + "\n".join(repr(float(v)) for v in y) + "\n")
        out = tmp_path / "audit.json"
        code = main(["audit", "--x", str(x_path), "--y", str(y_path),
                     "--lambda", "5.0", "0.01", "--topk", "1",
                     "--out", str(out)])
        assert code == 0
        payload = dataio.read_json(out)
        assert len(payload["columns"]) == 2
        assert payload["columns"][0]["lam"] == 5.0
        assert payload["columns"][1]["lam"] == 0.01
        # sparsity can only drop as the penalty shrinks
        assert payload["columns"][1]["sparsity"] <= payload["columns"][0]["sparsity"]


class TestSimulateCommand:
    def test_simulate_writes_report_dir(self, tmp_path, capsys):
        out = tmp_path / "sim"
        code = main(["simulate", "--sim", "2", "--reps", "1", "--seed", "3",
                     "--out", str(out)])
        assert code == 0
        payload = dataio.read_json(out / "report.json")
        assert payload["config"]["sim"] == 2
        assert payload["config"]["seed"] == 3
        assert (out / "replications.csv").exists()
        assert (out / "roc.csv").exists()
        assert "aimer" in capsys.readouterr().out


class TestRealDataCommand:
    def test_protocol_on_standin(self, tmp_path):
        gen = np.random.default_rng(8)
        n, p = 60, 20
        x = gen.standard_normal((n, p))
        times = np.exp(gen.standard_normal(n))       # positive survival times
        x_path = tmp_path / "x.csv"
        y_path = tmp_path / "y.csv"
        x_path.write_text(
            ",".join(f"g{j}" for j in range(p)) + "\n"
            + "\n".join(",".join(repr(float(v)) for v in row) for row in x) + "\n")
        y_path.write_text("time\n" + "\n".join(repr(float(v)) for v in times) + "\n")
        out = tmp_path / "real"
        code = main(["real-data", "--x", str(x_path), "--y", str(y_path),
                     "--splits", "2", "--cv-k", "3", "--d-max", "2",
                     "--ell-grid", "5,10", "--log-survival",
                     "--seed", "4", "--out", str(out)])
        assert code == 0
        payload = dataio.read_json(out / "report.json")
        methods = {row["method"] for row in payload["method_rows"]}
        assert methods == {"lasso", "ridge", "spc", "spc_lasso",
                           "aimer_b0", "aimer"}
        assert payload["config"]["preprocessing"]["log_survival"] is True


class TestBenchCommand:
    def test_bench_smoke(self, tmp_path, capsys):
        out = tmp_path / "bench.json"
        code = main(["bench", "--p-list", "40,80", "--n", "25", "--ell", "5",
                     "--d", "1", "--repeats", "1", "--out", str(out)])
        assert code == 0
        payload = dataio.read_json(out)
        assert [row["p"] for row in payload["method_rows"]] == [40, 80]
        assert "aimer=" in capsys.readouterr().out


class TestErrorSurface:
    def test_missing_file_is_io_error(self, tmp_path, capsys):
        code = main(["fit", "--method", "ridge", "--x", str(tmp_path / "no.csv"),
                     "--y", str(tmp_path / "no.csv"), "--lambda", "1"])
        assert code == 1
        assert capsys.readouterr().err.startswith("io-error:")

    def test_parse_error_class(self, tmp_path, capsys):
        x_path = tmp_path / "x.csv"
        x_path.write_text("a,b\n1,oops\n")
        y_path = tmp_path / "y.csv"
        y_path.write_text("y\n1\n2\n")
        code = main(["fit", "--method", "ridge", "--x", str(x_path),
                     "--y", str(y_path), "--lambda", "1"])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("parse-error:")
        assert "line 2, column 2" in err

    def test_transpose_flag(self, tmp_path):
        gen = np.random.default_rng(9)
        x = gen.standard_normal((4, 30))              # genes as rows
        x_path = tmp_path / "x.csv"
        x_path.write_text(
            ",".join(f"s{j}" for j in range(30)) + "\n"
            + "\n".join(",".join(repr(float(v)) for v in row) for row in x) + "\n")
        y = gen.standard_normal(30)
        y_path = tmp_path / "y.csv"
        y_path.write_text("y\n" + "\n".join(repr(float(v)) for v in y) + "\n")
        out = tmp_path / "fit.json"
        code = main(["fit", "--method", "ridge", "--x", str(x_path),
                     "--y", str(y_path), "--lambda", "1.0", "--transpose",
                     "--out", str(out)])
        assert code == 0
        assert len(dataio.read_json(out)["columnMeans"]) == 4
