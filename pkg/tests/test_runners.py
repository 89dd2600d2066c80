import json

import numpy as np
import pytest

from aimer import dataio
from aimer.errors import ParseError, ValidationError
from aimer.estimators import fit_ridge
from aimer.runners import (
    REAL_DATA_METHODS,
    RealDataProtocol,
    run_real_data,
    run_scaling_bench,
    run_simulation_suite,
    simulation_spec,
)
from aimer.screening import center
from aimer.simulation import LatentFactorConfig, simulate


def standin_dataset(seed=0, n=80, p=40):
    """Small latent-factor dataset standing in for an expression study."""
    spec = simulation_spec(2)
    config = LatentFactorConfig(
        n=n, p=p, n_factors=2, n_response_factors=2,
        strengths=spec.config.strengths, weights=spec.config.weights,
        feature_noise=spec.config.feature_noise,
        response_noise=spec.config.response_noise,
        blocks=spec.config.blocks, seed=seed,
    )
    inst = simulate(config)
    return inst.raw_x, inst.raw_y


class TestSimulationSpecs:
    def test_sim1_support_structure(self):
        from aimer.simulation import population_beta, population_marginal_cov

        config = simulation_spec(1).config
        beta = population_beta(config)
        sxy = population_marginal_cov(config)
        assert list(np.flatnonzero(np.abs(beta) > 1e-12)) == list(range(15))
        assert list(np.flatnonzero(np.abs(sxy) > 1e-12)) == list(range(10))

    def test_sims_2_3_supports_coincide(self):
        from aimer.simulation import population_beta, population_marginal_cov

        for sim in (2, 3):
            config = simulation_spec(sim).config
            a = set(np.flatnonzero(np.abs(population_beta(config)) > 1e-12))
            b = set(np.flatnonzero(np.abs(population_marginal_cov(config)) > 1e-12))
            assert a == b == set(range(10))

    def test_sim4_marginals_cancel_on_second_run(self):
        from aimer.simulation import population_beta, population_marginal_cov

        config = simulation_spec(4, strength1=25.0).config
        beta = population_beta(config)
        sxy = population_marginal_cov(config)
        assert list(np.flatnonzero(np.abs(beta) > 1e-12)) == list(range(10))
        assert list(np.flatnonzero(np.abs(sxy) > 1e-12)) == list(range(5))

    def test_unknown_sim_rejected(self):
        with pytest.raises(ValidationError):
            simulation_spec(6)

    def test_single_response_factor_variant_has_equal_supports(self):
        # sanity variant of the second study: with one response factor the
        # two population supports coincide in every replication
        from aimer.simulation import population_beta, population_marginal_cov

        base = simulation_spec(2).config
        for seed in range(5):
            config = LatentFactorConfig(
                n=base.n, p=base.p, n_factors=2, n_response_factors=1,
                strengths=base.strengths, weights=(1.0,),
                feature_noise=base.feature_noise,
                response_noise=base.response_noise,
                blocks=base.blocks, seed=seed,
            )
            inst = simulate(config)
            assert np.array_equal(inst.beta_support, inst.marginal_support)


class TestSimulationSuite:
    @pytest.fixture(scope="class")
    def sim2_report(self):
        return run_simulation_suite(2, replications=2, seed=123)

    def test_method_rows_schema(self, sim2_report):
        methods = {row["method"] for row in sim2_report.method_rows}
        assert methods == {"spc", "spc_lasso", "aimer_b0", "aimer"}
        for row in sim2_report.method_rows:
            assert row["prediction_mse"] > 0
            assert row["estimation_mse"] > 0
            assert row["n_replications"] == 2

    def test_aggregates_equal_recomputation(self, sim2_report):
        assert sim2_report.method_rows == sim2_report.recompute_method_rows()

    def test_raw_rows_cover_every_arm(self, sim2_report):
        assert len(sim2_report.replication_rows) == 2 * 4
        reps = {row["replication"] for row in sim2_report.replication_rows}
        assert reps == {0, 1}

    def test_roc_rows_present_and_anchored(self, sim2_report):
        rows = sim2_report.roc_rows
        assert {r["method"] for r in rows} >= {"aimer", "spc_lasso", "spc"}
        curve = [r for r in rows
                 if r["method"] == "aimer" and r["replication"] == 0]
        assert curve[0]["fpr"] == 0.0 and curve[0]["tpr"] == 0.0
        assert curve[-1]["fpr"] == 1.0 and curve[-1]["tpr"] == 1.0
        spc_rows = [r for r in rows
                    if r["method"] == "spc" and r["replication"] == 0]
        assert [r["kind"] for r in spc_rows] == ["point", "best_case", "best_case"]

    def test_coefficient_rows_group_means(self, sim2_report):
        rows = sim2_report.coefficient_rows
        groups = {r["group"] for r in rows}
        assert groups == {1, 2}
        assert all(np.isfinite(r["mean_beta"]) for r in rows)

    def test_config_echo_carries_seed(self, sim2_report):
        assert sim2_report.config["seed"] == 123
        assert sim2_report.config["sim"] == 2
        assert sim2_report.config["replications"] == 2

    def test_deterministic_across_runs_and_jobs(self):
        a = run_simulation_suite(2, replications=2, seed=7)
        b = run_simulation_suite(2, replications=2, seed=7)
        c = run_simulation_suite(2, replications=2, seed=7, jobs=2)
        sa = json.dumps(dataio.jsonable(a.to_dict()), sort_keys=True)
        sb = json.dumps(dataio.jsonable(b.to_dict()), sort_keys=True)
        sc = json.dumps(dataio.jsonable(c.to_dict()), sort_keys=True)
        assert sa == sb == sc

    def test_sim4_rows_keyed_by_cell(self):
        report = run_simulation_suite(4, replications=1, seed=5)
        keys = {(r["method"], r["d"], r["strength1"])
                for r in report.method_rows}
        assert len(keys) == 3 * 3 * 4
        assert report.method_rows == report.recompute_method_rows()

    def test_sim5_runs_and_selects_below_patient_count(self):
        report = run_simulation_suite(5, replications=1, seed=5)
        for row in report.replication_rows:
            assert row["hyperparams"]["ell"] < 100


class TestRealDataRunner:
    @pytest.fixture(scope="class")
    def report(self):
        x, y = standin_dataset()
        protocol = RealDataProtocol(
            n_splits=2, train_fraction=0.5, cv_k=4,
            d_grid=(1, 2), ell_grid=(5, 10),
        )
        return run_real_data(x, y, protocol=protocol, seed=11)

    def test_schema_covers_all_methods(self, report):
        methods = [row["method"] for row in report.method_rows]
        assert sorted(methods) == sorted(REAL_DATA_METHODS)
        for row in report.method_rows:
            assert row["prediction_mse"] > 0
            assert row["selected_count"] >= 0
            assert row["estimation_mse"] is None

    def test_aggregates_equal_recomputation(self, report):
        assert report.method_rows == report.recompute_method_rows()

    def test_deterministic(self):
        x, y = standin_dataset(seed=3)
        protocol = RealDataProtocol(n_splits=2, train_fraction=0.5, cv_k=3,
                                    d_grid=(1,), ell_grid=(5,))
        a = run_real_data(x, y, protocol=protocol, seed=2)
        b = run_real_data(x, y, protocol=protocol, seed=2)
        assert json.dumps(dataio.jsonable(a.to_dict()), sort_keys=True) == \
            json.dumps(dataio.jsonable(b.to_dict()), sort_keys=True)

    def test_unusable_screening_grid_rejected(self):
        x, y = standin_dataset(n=20)
        protocol = RealDataProtocol(n_splits=2, ell_grid=(500,))
        with pytest.raises(ValidationError):
            run_real_data(x, y, protocol=protocol, seed=0)


class TestBench:
    def test_scaling_rows(self):
        report = run_scaling_bench([50, 100], n=30, ell=5, d=1, repeats=1, seed=0)
        assert [row["p"] for row in report.method_rows] == [50, 100]
        assert all(row["aimer_seconds"] > 0 for row in report.method_rows)


class TestDataIO:
    def test_load_matrix_csv(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("g1,g2\n1.0,2.0\n3.0,4.5\n")
        matrix, labels, row_ids = dataio.load_matrix(path)
        assert matrix.shape == (2, 2)
        assert labels == ["g1", "g2"]
        assert row_ids is None
        assert matrix[1, 1] == 4.5

    def test_tsv_equivalent(self, tmp_path):
        c = tmp_path / "m.csv"
        t = tmp_path / "m.tsv"
        c.write_text("a,b\n1,2\n3,4\n")
        t.write_text("a\tb\n1\t2\n3\t4\n")
        mc, _, _ = dataio.load_matrix(c)
        mt, _, _ = dataio.load_matrix(t)
        assert np.array_equal(mc, mt)

    def test_row_id_detection_variants(self, tmp_path):
        r_style = tmp_path / "r.csv"
        r_style.write_text("g1,g2\ns1,1,2\ns2,3,4\n")
        m, labels, ids = dataio.load_matrix(r_style)
        assert labels == ["g1", "g2"] and ids == ["s1", "s2"]
        blank = tmp_path / "b.csv"
        blank.write_text(",g1,g2\ns1,1,2\ns2,3,4\n")
        m2, labels2, ids2 = dataio.load_matrix(blank)
        assert labels2 == ["g1", "g2"] and ids2 == ["s1", "s2"]
        named = tmp_path / "n.csv"
        named.write_text("sample,g1,g2\ns1,1,2\ns2,3,4\n")
        m3, labels3, ids3 = dataio.load_matrix(named)
        assert labels3 == ["g1", "g2"] and ids3 == ["s1", "s2"]
        assert np.array_equal(m, m2) and np.array_equal(m, m3)

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(ParseError, match="line 3"):
            dataio.load_matrix(path)

    def test_non_numeric_names_coordinates(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(ParseError, match="line 3, column 2"):
            dataio.load_matrix(path)

    def test_duplicate_labels_rejected(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("a,a\n1,2\n")
        with pytest.raises(ValidationError):
            dataio.load_matrix(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ParseError):
            dataio.load_matrix(path)

    def test_fit_json_roundtrip(self, tmp_path):
        gen = np.random.default_rng(0)
        data = center(gen.standard_normal((20, 5)), gen.standard_normal(20))
        fit = fit_ridge(data, 1.0)
        payload = dataio.fit_to_dict(fit, config={"command": "fit", "seed": 3},
                                     labels=data.column_labels)
        path = dataio.write_json(payload, tmp_path / "fit.json")
        loaded, labels = dataio.fit_from_dict(dataio.read_json(path))
        assert np.array_equal(loaded.beta, fit.beta)      # bitwise round trip
        assert loaded.intercept == fit.intercept
        assert np.array_equal(loaded.column_means, fit.column_means)
        assert labels == list(data.column_labels)
        assert dataio.read_json(path)["config"]["seed"] == 3

    def test_report_csv_roundtrip(self, tmp_path):
        report = run_scaling_bench([30], n=20, ell=4, d=1, repeats=1, seed=0)
        rows = report.method_rows
        path = dataio.write_rows_csv(tmp_path / "rows.csv", rows,
                                     list(rows[0].keys()), config=report.config)
        back = dataio.read_rows_csv(path)
        assert len(back) == len(rows)
        for a, b in zip(rows, back):
            for key, value in a.items():
                if isinstance(value, float):
                    assert b[key] == value                # 17 digits round-trip
        text = path.read_text()
        assert text.startswith("# config:")

    def test_write_report_files(self, tmp_path):
        report = run_simulation_suite(2, replications=1, seed=0)
        paths = dataio.write_report(report, tmp_path / "out")
        names = {p.name for p in paths}
        assert "report.json" in names
        assert "replications.csv" in names
        assert "roc.csv" in names
        payload = dataio.read_json(tmp_path / "out" / "report.json")
        assert payload["config"]["seed"] == 0

    def test_emit_report_dispatch(self, tmp_path):
        gen = np.random.default_rng(1)
        data = center(gen.standard_normal((15, 4)), gen.standard_normal(15))
        fit = fit_ridge(data, 2.0)
        (json_path,) = dataio.emit_report(fit, tmp_path / "fit.json", "json",
                                          config={"seed": 0})
        assert json_path.exists()
        (csv_path,) = dataio.emit_report(fit, tmp_path / "fit.csv", "csv",
                                         config={"seed": 0},
                                         labels=data.column_labels)
        rows = dataio.read_rows_csv(csv_path)
        assert len(rows) == fit.selected_genes.size
        with pytest.raises(ValidationError):
            dataio.emit_report(fit, tmp_path / "x", "yaml")
