import io
import json
import math

import numpy as np
import pandas as pd
import pytest

from src.core.exceptions import ModelValidationError
from src.core.priors import SparseRademacherTensorPrior
from src.reporting.manifest import (
    RunOutput,
    build_manifest,
    canonical_json,
    format_float,
    manifest_hash,
    table_to_csv,
    to_jsonable,
    validate_document,
)


def _manifest(**overrides):
    kwargs = {"subcommand": "quantiles", "parameters": {"d_grid": "1:4"}, "seed": 7, "budgets": {"mc_samples": 100}}
    kwargs.update(overrides)
    return build_manifest(**kwargs)


class TestJson:
    def test_numpy_and_non_finite_values(self):
        value = {"a": np.int64(3), "b": np.array([1.5, np.nan]), "c": np.bool_(True), 4: math.inf}
        assert to_jsonable(value) == {"a": 3, "b": [1.5, None], "c": True, "4": None}

    def test_canonical_form(self):
        assert canonical_json({"b": 1, "a": [0.1, 2]}) == '{"a":[0.1,2],"b":1}'

    def test_hash_is_stable_and_sensitive(self):
        first, second = _manifest(), _manifest()
        assert manifest_hash(first) == manifest_hash(second)
        assert len(manifest_hash(first)) == 16
        assert manifest_hash(_manifest(seed=8)) != manifest_hash(first)

    def test_hash_ignores_key_order(self):
        a = {"x": 1, "y": {"p": 2, "q": 3}}
        b = {"y": {"q": 3, "p": 2}, "x": 1}
        assert manifest_hash(a) == manifest_hash(b)


class TestValidation:
    def test_unknown_subcommand(self):
        with pytest.raises(ModelValidationError) as info:
            _manifest(subcommand="train")
        assert info.value.pointer == "/subcommand"

    def test_non_positive_budget(self):
        with pytest.raises(ModelValidationError) as info:
            _manifest(budgets={"mc_samples": 0})
        assert info.value.pointer == "/budgets/mc_samples"

    def test_seed_range(self):
        with pytest.raises(ModelValidationError):
            _manifest(seed=-1)
        assert _manifest(seed=None)["seed"] is None

    def test_oracle_report_schema(self):
        good = {"basis_size": 3, "cond_number": 1.0, "corr_sq_per_coord": [0.5], "corr_sq_total": 0.5, "mmse": 0.5}
        validate_document(good, "oracle_report.v1")
        with pytest.raises(ModelValidationError) as info:
            validate_document({**good, "cond_number": 0.5}, "oracle_report.v1")
        assert info.value.pointer == "/cond_number"


class TestCsv:
    def test_format(self):
        table = pd.DataFrame({"D": [1.0, 2.0], "q": [0.1, np.inf], "saturated": [False, True], "tag": ["a", "b"]})
        lines = table_to_csv(table, "abc").splitlines()
        assert lines == ["# manifest_hash=abc", "D,q,saturated,tag", "1.0,0.1,false,a", "2.0,inf,true,b"]

    def test_float_repr(self):
        assert format_float(0.1) == "0.1"
        assert format_float(float("nan")) == "nan"
        assert format_float(-math.inf) == "-inf"
        assert float(format_float(1 / 3)) == 1 / 3


class TestRunOutput:
    def test_writes_csv_and_json(self, tmp_path):
        output = RunOutput(_manifest(), {"mode": "exact_pmf"}, pd.DataFrame({"D": [1.0], "q": [2.0]}))
        paths = output.write(str(tmp_path), "csv")
        assert [p.name for p in paths] == [f"quantiles-{output.digest}.json", f"quantiles-{output.digest}.csv"]
        document = json.loads(paths[0].read_text())
        assert document["manifest_hash"] == output.digest
        assert document["results"] == {"mode": "exact_pmf"}
        assert paths[1].read_text().startswith(f"# manifest_hash={output.digest}\n")

    def test_json_format_embeds_table(self, tmp_path):
        output = RunOutput(_manifest(), {}, pd.DataFrame({"D": [1.0], "q": [np.nan]}))
        paths = output.write(str(tmp_path), "json")
        assert len(paths) == 1
        assert json.loads(paths[0].read_text())["table"] == {"D": [1.0], "q": [None]}

    def test_identical_runs_overwrite_the_same_files(self, tmp_path):
        a = RunOutput(_manifest(), {"x": 1}).write(str(tmp_path))
        b = RunOutput(_manifest(), {"x": 1}).write(str(tmp_path))
        assert a == b
        assert len(list(tmp_path.iterdir())) == 1


def test_cells_with_commas_are_quoted():
    table = pd.DataFrame({"check": ["a"], "detail": ['x, "y"']})
    text = table_to_csv(table, "h")
    assert text.splitlines()[2] == 'a,"x, ""y"""'
    assert pd.read_csv(io.StringIO(text), comment="#")["detail"].iloc[0] == 'x, "y"'


def test_model_section_uses_prior_schema():
    manifest = _manifest(model=SparseRademacherTensorPrior(10, 2, 1).to_spec())
    assert manifest["model"]["kind"] == "sparse_rademacher_tensor"
    with pytest.raises(ModelValidationError) as info:
        _manifest(model={"kind": "laplace", "params": {}})
    assert info.value.pointer == "/kind"
