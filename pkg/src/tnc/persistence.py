"""JSON model/circuit files.

Floats are written with Python's shortest round-trip ``repr`` so a reload
reproduces every double bit for bit. Keys are emitted in a fixed order to
keep files byte-identical across identical runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .compiler import ORTHO_TOL, CompiledCircuit
from .errors import PersistenceError, TncError
from .features import RescaleStats
from .mps import MpsModel, expected_shape

VERSION = 1
FEATURE_ORDER = "antidiagonal-desc"


@dataclass(frozen=True)
class ModelFile:
    """Parsed file: ``model`` is always set; ``circuit`` only for ``kind == "circuit"``."""

    kind: str
    model: MpsModel
    circuit: Optional[CompiledCircuit] = None


def _tensor_json(t: np.ndarray) -> dict:
    return {"shape": list(t.shape), "data": [float(v) for v in t.ravel()]}


def _matrix_list(m: np.ndarray) -> list:
    return [float(v) for v in np.asarray(m).ravel()]


def to_document(model: MpsModel, circuit: Optional[CompiledCircuit] = None) -> dict:
    doc = {
        "version": VERSION,
        "kind": "circuit" if circuit is not None else "mps",
        "n_sites": model.n_sites,
        "feature_order": FEATURE_ORDER,
        "selected_features": list(model.selected) if model.selected is not None else None,
        "rescale": model.rescale.to_dict() if model.rescale is not None else None,
        "tensors": [_tensor_json(t) for t in model.tensors],
        "gates": None,
        "train_meta": dict(model.train_meta),
    }
    if circuit is not None:
        doc["gates"] = {"u1": _matrix_list(circuit.u1), "u": [_matrix_list(g) for g in circuit.gates]}
    return doc


def dumps(model: MpsModel, circuit: Optional[CompiledCircuit] = None) -> str:
    return json.dumps(to_document(model, circuit), indent=1, allow_nan=False) + "\n"


def save_model(path, model: MpsModel, circuit: Optional[CompiledCircuit] = None) -> None:
    Path(path).write_text(dumps(model, circuit))


def _parse(doc: dict) -> ModelFile:
    if not isinstance(doc, dict):
        raise PersistenceError("model file must hold a JSON object")
    if doc.get("version") != VERSION:
        raise PersistenceError(f"unsupported model file version {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind not in ("mps", "circuit"):
        raise PersistenceError(f"unknown kind {kind!r}")
    n = doc.get("n_sites")
    entries = doc.get("tensors") or []
    if not isinstance(n, int) or n < 1 or len(entries) != n:
        raise PersistenceError(f"n_sites={n!r} inconsistent with {len(entries)} tensors")
    tensors = []
    for k, entry in enumerate(entries):
        shape = tuple(entry["shape"])
        if shape != expected_shape(k, n):
            raise PersistenceError(f"tensor {k} has shape {shape}, expected {expected_shape(k, n)}")
        data = np.array(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise PersistenceError(f"tensor {k}: {data.size} values for shape {shape}")
        tensors.append(data.reshape(shape))
    rescale = RescaleStats.from_dict(doc["rescale"]) if doc.get("rescale") else None
    meta = doc.get("train_meta") or {}
    from .mps import is_canonical

    model = MpsModel(tensors, doc.get("selected_features"), rescale, False, meta)
    model = model.with_tensors(model.tensors, canonical=is_canonical(model))
    circuit = None
    if kind == "circuit":
        gates = doc.get("gates") or {}
        u1 = np.array(gates.get("u1", []), dtype=np.float64)
        us = [np.array(g, dtype=np.float64) for g in gates.get("u", [])]
        if u1.size != 4 or len(us) != n - 1 or any(g.size != 16 for g in us):
            raise PersistenceError(f"gate list does not match {n} layers")
        u1 = u1.reshape(2, 2)
        us = [g.reshape(4, 4) for g in us]
        for name, g in [("u1", u1)] + [(f"u{j + 2}", g) for j, g in enumerate(us)]:
            resid = np.abs(g.T @ g - np.eye(len(g))).max()
            if resid > ORTHO_TOL:
                raise PersistenceError(f"gate {name} is not orthogonal (residual {resid:.3e})")
        circuit = CompiledCircuit(u1, us, model.selected, rescale)
    return ModelFile(kind, model, circuit)


def loads(text: str) -> ModelFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"invalid JSON: {exc}") from exc
    try:
        return _parse(doc)
    except PersistenceError:
        raise
    except (KeyError, TypeError, ValueError, TncError) as exc:
        raise PersistenceError(f"malformed model file: {exc}") from exc


def load_model(path) -> ModelFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc
    return loads(text)
