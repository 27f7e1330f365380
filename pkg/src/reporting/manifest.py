"""
Run manifests and result files

A manifest records everything a run depends on (subcommand, model, seed,
budgets, parameters, version). Output files are named after a hash of the
canonical manifest JSON, so identical runs produce identical files.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema
import numpy as np
import pandas as pd

from .. import __version__
from ..config import settings
from ..core.exceptions import ModelValidationError

logger = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).resolve().parents[2] / "docs" / "schemas"
HASH_LENGTH = 16


def load_schema(name: str) -> Dict[str, Any]:
    with open(SCHEMA_DIR / f"{name}.json", "r", encoding="utf-8") as f:
        return json.load(f)


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats for JSON output."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def canonical_json(obj: Any) -> str:
    """Sorted keys, no whitespace, shortest round-trip floats."""
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def manifest_hash(manifest: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(manifest).encode("utf-8")).hexdigest()[:HASH_LENGTH]


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else ""


def validate_document(document: Dict[str, Any], schema_name: str) -> None:
    """Validate against a versioned schema; errors carry a JSON pointer."""
    try:
        jsonschema.validate(to_jsonable(document), load_schema(schema_name))
    except jsonschema.ValidationError as e:
        raise ModelValidationError(f"{schema_name}: {e.message}", _pointer(e.absolute_path)) from e


def build_manifest(
    subcommand: str,
    parameters: Dict[str, Any],
    model: Optional[Dict[str, Any]] = None,
    seed: Optional[int] = None,
    budgets: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    if model is not None:
        validate_document(model, "prior_spec.v1")
    manifest = {
        "schema": "manifest.v1",
        "version": f"fpld {__version__}",
        "subcommand": subcommand,
        "model": model,
        "seed": seed,
        "budgets": budgets or {},
        "parameters": parameters,
    }
    validate_document(manifest, "manifest.v1")
    return manifest


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _quote(text: str) -> str:
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def table_to_csv(table: pd.DataFrame, digest: str) -> str:
    """CSV text with a leading manifest-hash comment and repr-formatted floats."""
    lines = [f"# manifest_hash={digest}", ",".join(str(c) for c in table.columns)]
    for row in table.itertuples(index=False):
        cells = []
        for value in row:
            if isinstance(value, (bool, np.bool_)):
                cells.append("true" if value else "false")
            elif isinstance(value, (float, np.floating)):
                cells.append(format_float(value))
            else:
                cells.append(_quote(str(value)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


@dataclass
class RunOutput:
    manifest: Dict[str, Any]
    results: Dict[str, Any]
    table: Optional[pd.DataFrame] = None

    @property
    def digest(self) -> str:
        return manifest_hash(self.manifest)

    def document(self) -> Dict[str, Any]:
        return {"manifest": self.manifest, "manifest_hash": self.digest, "results": self.results}

    def write(self, out_dir: Optional[str] = None, fmt: str = "csv") -> List[Path]:
        """
        Write <subcommand>-<hash>.json and, for tabular results in csv format,
        <subcommand>-<hash>.csv.
        """
        directory = Path(out_dir or settings.OUT_DIR)
        directory.mkdir(parents=True, exist_ok=True)
        stem = f"{self.manifest['subcommand']}-{self.digest}"
        paths = []

        json_path = directory / f"{stem}.json"
        document = self.document()
        if self.table is not None and fmt == "json":
            document["table"] = to_jsonable(self.table.to_dict(orient="list"))
        json_path.write_text(json.dumps(to_jsonable(document), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        paths.append(json_path)

        if self.table is not None and fmt == "csv":
            csv_path = directory / f"{stem}.csv"
            csv_path.write_text(table_to_csv(self.table, self.digest), encoding="utf-8")
            paths.append(csv_path)
        logger.info(f"Wrote {', '.join(str(p) for p in paths)}")
        return paths
