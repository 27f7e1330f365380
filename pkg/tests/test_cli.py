import io
import json
import logging

import pandas as pd
import pytest

from src.cli.main import EXIT_BUDGET, EXIT_INVALID, EXIT_OK, parse_and_dispatch

SPARSE = '{"kind": "sparse_rademacher_tensor", "params": {"n": 12, "k": 3}}'
CLUSTERING = '{"kind": "sparse_clustering", "params": {"n": 8, "p": 8, "s": 4, "delta": 1.0}}'


@pytest.fixture(autouse=True)
def keep_root_logging():
    root = logging.getLogger()
    saved, level = list(root.handlers), root.level
    yield
    for handler in list(root.handlers):
        root.removeHandler(handler)
    for handler in saved:
        root.addHandler(handler)
    root.setLevel(level)


def run(capsys, *argv):
    code = parse_and_dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def read_table(text):
    return pd.read_csv(io.StringIO(text), comment="#")


class TestQuantiles:
    def test_exact_model(self, capsys, out_dir):
        code, out, _ = run(capsys, "quantiles", "--model", SPARSE, "--d-grid", "1:4", "--out-dir", str(out_dir))
        assert code == EXIT_OK
        assert out.startswith("# manifest_hash=")
        table = read_table(out)
        assert list(table.columns) == ["D", "q_of_D", "saturated"]
        assert len(table) == 4
        assert table["q_of_D"].is_monotonic_increasing
        assert len(list(out_dir.iterdir())) == 2

    def test_reruns_are_identical(self, capsys, out_dir):
        argv = ["quantiles", "--model", SPARSE, "--out-dir", str(out_dir)]
        first = run(capsys, *argv)
        second = run(capsys, *argv)
        assert first[:2] == second[:2]

    def test_sampled_model_needs_seed(self, capsys, out_dir):
        code, _, err = run(capsys, "quantiles", "--model", CLUSTERING, "--out-dir", str(out_dir))
        assert code == EXIT_INVALID
        assert "/seed" in err

    def test_sampled_model_with_seed(self, capsys, out_dir):
        argv = ["quantiles", "--model", CLUSTERING, "--d-grid", "1:2", "--seed", "3", "--mc-samples", "2000"]
        code, out, _ = run(capsys, *argv, "--out-dir", str(out_dir))
        assert code == EXIT_OK
        assert len(read_table(out)) == 2


class TestInputErrors:
    def test_invalid_model(self, capsys, out_dir):
        bad = '{"kind": "sparse_rademacher_tensor", "params": {"n": 2, "k": 3}}'
        code, _, err = run(capsys, "quantiles", "--model", bad, "--out-dir", str(out_dir))
        assert code == EXIT_INVALID
        assert "invalid input at /params" in err

    def test_malformed_grid(self, capsys, out_dir):
        code, _, err = run(capsys, "quantiles", "--model", SPARSE, "--d-grid", "4:1", "--out-dir", str(out_dir))
        assert code == EXIT_INVALID
        assert "/grid" in err

    def test_unknown_option(self, capsys):
        code, _, _ = run(capsys, "quantiles", "--frobnicate")
        assert code == EXIT_INVALID

    def test_bessel_needs_an_order(self, capsys, out_dir):
        code, _, _ = run(capsys, "bessel", "--out-dir", str(out_dir))
        assert code == EXIT_INVALID


def test_budget_exit_code(capsys, out_dir):
    model = '{"kind": "sparse_rademacher_tensor", "params": {"n": 10, "k": 2, "r": 2}}'
    argv = ["cumulant-bound", "--model", model, "--d", "3", "--lambda-grid", "1", "--enum-budget", "10"]
    code, _, err = run(capsys, *argv, "--out-dir", str(out_dir))
    assert code == EXIT_BUDGET
    assert "budget exceeded" in err


def test_oracle_json_output(capsys, out_dir):
    model = '{"kind": "sparse_rademacher_tensor", "params": {"n": 4, "k": 2}}'
    argv = ["oracle-mmse", "--model", model, "--d", "2", "--lambda-grid", "1", "--format", "json"]
    code, out, _ = run(capsys, *argv, "--out-dir", str(out_dir))
    assert code == EXIT_OK
    document = json.loads(out)
    assert document["manifest"]["subcommand"] == "oracle-mmse"
    assert document["manifest"]["model"]["kind"] == "sparse_rademacher_tensor"
    (report,) = document["results"]["reports"]
    assert report["corr_sq_total"] + report["mmse"] == pytest.approx(2.0)


def test_bessel_recurrence(capsys, out_dir):
    argv = ["bessel", "--nu", "0.5", "--nu", "2.0", "--x-grid", "0.5:20:8", "--out-dir", str(out_dir)]
    code, out, _ = run(capsys, *argv)
    assert code == EXIT_OK
    table = read_table(out)
    assert len(table) == 16
    assert table["recurrence_residual"].max() < 1e-6


def test_density(capsys, out_dir):
    code, out, _ = run(capsys, "density", "--dim", "3", "--x-grid", "0.5:2:4", "--out-dir", str(out_dir))
    assert code == EXIT_OK
    assert (read_table(out)["density"] > 0).all()


def test_threshold_reproducible(capsys, out_dir):
    argv = ["diag-threshold", "--n", "20", "--k", "2", "--trials", "200", "--seed", "11", "--out-dir", str(out_dir)]
    first = run(capsys, *argv)
    second = run(capsys, *argv, "--threads", "2")
    assert first[0] == EXIT_OK
    assert read_table(first[1])["failure_rate"].iloc[0] == read_table(second[1])["failure_rate"].iloc[0]


def test_json_logging_option(capsys, out_dir):
    code, _, _ = run(capsys, "--log-format", "json", "density", "--dim", "2", "--out-dir", str(out_dir))
    assert code == EXIT_OK


def test_selftest_command(capsys, out_dir):
    code, out, _ = run(capsys, "selftest", "--out-dir", str(out_dir))
    assert code == EXIT_OK
    assert read_table(out)["passed"].all()
