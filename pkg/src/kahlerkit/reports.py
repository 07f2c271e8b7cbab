"""Machine-readable JSON reports and their schema."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

SCHEMA_VERSION = "kahlerkit-report/1"


def jsonable(obj):
    """Convert numpy scalars/arrays and complex numbers to plain JSON values.

    Complex numbers become ``[re, im]``; non-finite floats become strings so
    the output stays strict JSON.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [jsonable(float(obj.real)), jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def as_dict(self):
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "pass": bool(self.passed),
                "detail": self.detail}


def check_le(name, value, tol, detail=""):
    value = float(value)
    return Check(name, value, float(tol), bool(math.isfinite(value) and value <= tol), detail)


def check_true(name, ok, detail=""):
    return Check(name, 1.0 if ok else 0.0, 1.0, bool(ok), detail)


@dataclass
class Report:
    command: str
    config: dict
    results: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return jsonable({
            "schema": SCHEMA_VERSION,
            "command": self.command,
            "status": "pass" if self.passed else "fail",
            "config": self.config,
            "results": self.results,
            "checks": [c.as_dict() for c in self.checks],
            "files": sorted(str(f) for f in self.files),
        })

    def to_json(self) -> str:
        doc = self.as_dict()
        validate(doc)
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.command}.json"
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def load_schema() -> dict:
    text = resources.files("kahlerkit").joinpath("schemas/report-v1.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(doc: dict):
    jsonschema.validate(doc, load_schema())
