"""JSON encodings for matrices, records and states.

Complex matrices are nested row-major lists of ``[re, im]`` pairs.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .hilbert import DensityMatrix, Povm
from .likelihood import MeasurementRecord

__all__ = [
    "RecordFormatError",
    "matrix_to_json",
    "matrix_from_json",
    "vector_to_json",
    "vector_from_json",
    "record_to_json",
    "record_from_json",
    "load_record",
    "dump_json",
]


class RecordFormatError(ValueError):
    """Malformed input; ``field`` names the offending JSON key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def vector_to_json(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]


def _pair(z, where: str) -> complex:
    if isinstance(z, (int, float)) and not isinstance(z, bool):
        return complex(z)
    if not isinstance(z, (list, tuple)) or len(z) != 2:
        raise RecordFormatError(where, "expected an [re, im] pair")
    try:
        return complex(float(z[0]), float(z[1]))
    except (TypeError, ValueError) as exc:
        raise RecordFormatError(where, "non-numeric entry") from exc


def matrix_from_json(data, where: str = "matrix") -> np.ndarray:
    if not isinstance(data, list) or not data or not all(isinstance(r, list) for r in data):
        raise RecordFormatError(where, "expected a non-empty list of rows")
    n = len(data[0])
    if any(len(r) != n for r in data):
        raise RecordFormatError(where, "rows have different lengths")
    return np.array([[_pair(z, where) for z in row] for row in data], dtype=complex)


def vector_from_json(data, where: str = "vector") -> np.ndarray:
    if not isinstance(data, list) or not data:
        raise RecordFormatError(where, "expected a non-empty list")
    return np.array([_pair(z, where) for z in data], dtype=complex)


def record_to_json(record: MeasurementRecord) -> dict:
    return {
        "dimension": record.dim,
        "povm": [
            {"label": lab, "matrix": matrix_to_json(e)}
            for lab, e in zip(record.povm.labels, record.povm.elements)
        ],
        "counts": list(record.counts),
    }


def record_from_json(data: Any) -> MeasurementRecord:
    """Parse a record object, raising :class:`RecordFormatError` with the bad field."""
    if not isinstance(data, dict):
        raise RecordFormatError("record", "expected a JSON object")
    for key in ("dimension", "povm", "counts"):
        if key not in data:
            raise RecordFormatError(key, "missing")
    d = data["dimension"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise RecordFormatError("dimension", "must be a positive integer")
    povm = data["povm"]
    if not isinstance(povm, list) or not povm:
        raise RecordFormatError("povm", "must be a non-empty list")
    els, labels = [], []
    for i, item in enumerate(povm):
        if not isinstance(item, dict) or "matrix" not in item:
            raise RecordFormatError(f"povm[{i}]", "expected an object with a 'matrix' key")
        m = matrix_from_json(item["matrix"], f"povm[{i}].matrix")
        if m.shape != (d, d):
            raise RecordFormatError(f"povm[{i}].matrix", f"expected a {d}x{d} matrix, got {m.shape}")
        els.append(m)
        labels.append(str(item.get("label", f"E{i}")))
    counts = data["counts"]
    if not isinstance(counts, list) or not all(
        isinstance(c, int) and not isinstance(c, bool) for c in counts
    ):
        raise RecordFormatError("counts", "must be a list of integers")
    if len(counts) != len(els):
        raise RecordFormatError(
            "counts", f"has length {len(counts)} but povm has {len(els)} elements"
        )
    if any(c < 0 for c in counts):
        raise RecordFormatError("counts", "must be non-negative")
    if sum(counts) < 1:
        raise RecordFormatError("counts", "must sum to at least 1")
    try:
        p = Povm(np.array(els), tuple(labels))
    except ValueError as exc:
        raise RecordFormatError("povm", str(exc)) from exc
    return MeasurementRecord(p, tuple(counts))


def load_record(path) -> MeasurementRecord:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RecordFormatError("record", f"invalid JSON ({exc})") from exc
    return record_from_json(data)


def state_to_json(sigma: DensityMatrix) -> list:
    return matrix_to_json(sigma.matrix)


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
