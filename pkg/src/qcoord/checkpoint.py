"""Self-describing JSON checkpoints shared by all policy kinds.

Arrays are stored as flat lists (complex ones as interleaved real/imag
pairs); floats round-trip bit-exactly through repr-based JSON encoding.
"""

from __future__ import annotations

import json
from typing import IO

import numpy as np

from . import quantum as qt

SCHEMA_VERSION = 1


def array_to_json(a: np.ndarray) -> dict:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        flat = np.empty(2 * a.size)
        flat[0::2] = a.real.reshape(-1)
        flat[1::2] = a.imag.reshape(-1)
        return {"dtype": "complex", "shape": list(a.shape), "data": flat.tolist()}
    if a.dtype.kind in "iub":
        return {"dtype": "int", "shape": list(a.shape), "data": a.reshape(-1).tolist()}
    return {"dtype": "float", "shape": list(a.shape), "data": a.astype(float).reshape(-1).tolist()}


def array_from_json(spec: dict) -> np.ndarray:
    shape = tuple(spec["shape"])
    data = spec["data"]
    if spec["dtype"] == "complex":
        flat = np.asarray(data, dtype=float)
        return (flat[0::2] + 1j * flat[1::2]).reshape(shape)
    if spec["dtype"] == "int":
        return np.asarray(data, dtype=np.int64).reshape(shape)
    return np.asarray(data, dtype=float).reshape(shape)


def params_to_json(params: dict) -> dict:
    return {name: array_to_json(value) for name, value in params.items()}


def params_from_json(spec: dict) -> dict:
    return {name: array_from_json(value) for name, value in spec.items()}


def povm_to_json(povm: qt.Povm) -> dict:
    return {"dim": povm.dim, "outcomes": povm.outcomes, "elements": array_to_json(povm.elements)}


def povm_from_json(spec: dict) -> qt.Povm:
    return qt.Povm(array_from_json(spec["elements"]))


def density_to_json(rho: qt.DensityMatrix) -> dict:
    return {"dim": rho.dim, "matrix": array_to_json(rho.matrix)}


def density_from_json(spec: dict) -> qt.DensityMatrix:
    return qt.DensityMatrix(array_from_json(spec["matrix"]))


def make_checkpoint(kind: str, params: dict, config: dict | None = None,
                    seed: int | None = None, step: int | None = None,
                    extra: dict | None = None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "params": params_to_json(params),
        "config": config or {},
        "seed": seed,
        "step": step,
    }
    if extra:
        doc["extra"] = extra
    return doc


def save_checkpoint(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema version {version}")
    return doc


def dump_checkpoint(doc: dict, fh: IO[str]) -> None:
    json.dump(doc, fh)
