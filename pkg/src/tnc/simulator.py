"""Density-matrix simulation of the two-qubit sequential classifier circuit.

Two-qubit density matrices are ``(..., 4, 4)`` complex arrays on
``classifier (x) operational`` (index ``2*classifier + operational``); all
routines broadcast over leading batch axes so a whole test set can be run
at once. Post-selection is kept unnormalized until readout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .compiler import CompiledCircuit
from .errors import GateError, PostSelectionError, ShapeError
from .features import ProductState

CLASSIFIER = "classifier"
OPERATIONAL = "operational"
UNITARY_TOL = 1e-8
EXTINCTION = 1e-14

Channel = Callable[[np.ndarray], np.ndarray]

_EYE2 = np.eye(2)


@dataclass(frozen=True)
class SchemeOutput:
    """Result of classifying one product state."""

    p0: float
    p1: float
    p0_raw: float
    p1_raw: float
    success_prob: float
    decision: int
    bloch: Optional[tuple] = None


@dataclass(frozen=True)
class BatchOutput:
    """Batched readout: ``raw`` is ``(B, 2)`` unnormalized class weights."""

    raw: np.ndarray
    classifier_rho: Optional[np.ndarray] = None

    @property
    def success_prob(self) -> np.ndarray:
        return self.raw.sum(axis=-1)

    @property
    def probs(self) -> np.ndarray:
        return self.raw / self.success_prob[..., None]

    @property
    def decisions(self) -> np.ndarray:
        return decide(self.raw)


def decide(raw: np.ndarray) -> np.ndarray:
    """argmax over the last axis; exact ties give -1."""
    raw = np.asarray(raw)
    return np.where(raw[..., 0] > raw[..., 1], 0, np.where(raw[..., 1] > raw[..., 0], 1, -1))


def ket_to_dm(ket: np.ndarray) -> np.ndarray:
    ket = np.asarray(ket)
    return ket[..., :, None] * ket[..., None, :].conj()


def kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched Kronecker product of 2x2 operators, classifier first."""
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(out.shape[:-4] + (4, 4))


def partial_trace_operational(rho: np.ndarray) -> np.ndarray:
    return np.einsum("...iaja->...ij", rho.reshape(rho.shape[:-2] + (2, 2, 2, 2)))


def check_unitary(gate: np.ndarray, tol: float = UNITARY_TOL) -> None:
    g = np.asarray(gate)
    eye = np.eye(g.shape[-1])
    resid = np.abs(np.swapaxes(g, -1, -2).conj() @ g - eye).max()
    if resid > tol:
        raise GateError(f"gate is not unitary (residual {resid:.3e})")


def apply_gate(rho: np.ndarray, gate: np.ndarray, which: str = "two", check: bool = True) -> np.ndarray:
    """``rho -> U rho U^dagger``; a 2x2 gate with ``which="classifier"`` acts as ``U (x) 1``."""
    gate = np.asarray(gate)
    if check:
        check_unitary(gate)
    if which == CLASSIFIER:
        if rho.shape[-1] == 2:
            full = gate
        else:
            full = kron2(gate, np.broadcast_to(_EYE2, gate.shape))
    elif which == "two":
        if gate.shape[-2:] != (4, 4):
            raise ShapeError("two-qubit gate must be 4x4")
        full = gate
    else:
        raise ValueError(f"unknown gate target {which!r}")
    return full @ rho @ np.swapaxes(full, -1, -2).conj()


def _projector(qubit: str, ket: np.ndarray) -> np.ndarray:
    p = ket_to_dm(np.asarray(ket, dtype=np.complex128))
    eye = np.broadcast_to(_EYE2, p.shape)
    if qubit == OPERATIONAL:
        return kron2(eye, p)
    if qubit == CLASSIFIER:
        return kron2(p, eye)
    raise ValueError(f"unknown qubit {qubit!r}")


def project(rho: np.ndarray, qubit: str, ket: np.ndarray) -> np.ndarray:
    """Unnormalized projection ``P rho P`` onto ``ket`` of one qubit; trace drops to the outcome weight."""
    proj = _projector(qubit, ket)
    return proj @ rho @ proj


def reset_operational(rho: np.ndarray, ket: np.ndarray) -> np.ndarray:
    """Discard the operational qubit and re-prepare it in ``ket``."""
    return kron2(partial_trace_operational(rho), ket_to_dm(np.asarray(ket, dtype=np.complex128)))


def _as_batch(circuit_or_gates, qubits):
    if isinstance(circuit_or_gates, CompiledCircuit):
        u1 = circuit_or_gates.u1
        gates = np.array(circuit_or_gates.gates).reshape(-1, 4, 4)
    else:
        u1, gates = circuit_or_gates
    qubits = qubits.qubits if isinstance(qubits, ProductState) else np.asarray(qubits, dtype=np.float64)
    n_layers = np.shape(gates)[-3] + 1
    if qubits.shape[-2:] != (n_layers, 2):
        raise ShapeError(f"product state shape {qubits.shape} does not match {n_layers} layers")
    return np.asarray(u1), np.asarray(gates), qubits


def _gate_at(gates: np.ndarray, n: int) -> np.ndarray:
    return gates[..., n, :, :]


def run_scheme_a_batch(circuit, qubits, channel: Optional[Channel] = None, check: bool = True) -> BatchOutput:
    """Forward pass: features in via the operational qubit, sigma_z readout on the classifier.

    ``circuit`` is a :class:`CompiledCircuit` or a ``(u1, gates)`` pair whose
    arrays may carry a leading batch axis (one circuit per image).
    ``channel`` is applied to the two-qubit state after every two-qubit gate.
    """
    u1, gates, qubits = _as_batch(circuit, qubits)
    zero = np.array([1.0, 0.0])
    rho_c = ket_to_dm(qubits[..., 0, :].astype(np.complex128))
    rho_c = apply_gate(rho_c, u1, CLASSIFIER, check)
    for n in range(gates.shape[-3]):
        rho = kron2(rho_c, ket_to_dm(qubits[..., n + 1, :].astype(np.complex128)))
        rho = apply_gate(rho, _gate_at(gates, n), "two", check)
        if channel is not None:
            rho = channel(rho)
        rho_c = partial_trace_operational(project(rho, OPERATIONAL, zero))
    raw = np.real(np.diagonal(rho_c, axis1=-2, axis2=-1)).copy()
    return BatchOutput(raw, rho_c)


def run_scheme_b_batch(circuit, qubits, channel: Optional[Channel] = None, check: bool = True) -> BatchOutput:
    """Reversed pass: start in ``|c 0>``, apply adjoint gates, project onto the feature states."""
    u1, gates, qubits = _as_batch(circuit, qubits)
    zero = np.array([1.0, 0.0], dtype=np.complex128)
    batch = qubits.shape[:-2]
    raw = np.empty(batch + (2,))
    u1_dag = np.swapaxes(u1, -1, -2).conj()
    gates_dag = np.swapaxes(gates, -1, -2).conj()
    for c in (0, 1):
        ket = np.zeros(4, dtype=np.complex128)
        ket[2 * c] = 1.0
        rho = np.broadcast_to(ket_to_dm(ket), batch + (4, 4)).copy()
        for n in range(gates.shape[-3] - 1, -1, -1):
            rho = apply_gate(rho, _gate_at(gates_dag, n), "two", check)
            if channel is not None:
                rho = channel(rho)
            rho = project(rho, OPERATIONAL, qubits[..., n + 1, :])
            rho = reset_operational(rho, zero)
        rho_c = apply_gate(partial_trace_operational(rho), u1_dag, CLASSIFIER, check)
        psi = qubits[..., 0, :]
        raw[..., c] = np.real(np.einsum("...i,...ij,...j->...", psi, rho_c, psi))
    return BatchOutput(raw)


def bloch_xz(rho_c: np.ndarray) -> tuple:
    """``(<sigma_x>, <sigma_z>)`` of the normalized classifier state."""
    tr = np.real(np.trace(rho_c, axis1=-2, axis2=-1))
    x = 2 * np.real(rho_c[..., 0, 1]) / tr
    z = np.real(rho_c[..., 0, 0] - rho_c[..., 1, 1]) / tr
    return x, z


def _single(out: BatchOutput, with_bloch: bool) -> SchemeOutput:
    raw = out.raw
    total = float(raw.sum())
    if not total > EXTINCTION:
        raise PostSelectionError(f"post-selection weight {total:.3e} is numerically zero")
    bloch = None
    if with_bloch and out.classifier_rho is not None:
        x, z = bloch_xz(out.classifier_rho)
        bloch = (float(x), float(z))
    return SchemeOutput(
        p0=float(raw[0] / total),
        p1=float(raw[1] / total),
        p0_raw=float(raw[0]),
        p1_raw=float(raw[1]),
        success_prob=total,
        decision=int(decide(raw)),
        bloch=bloch,
    )


def run_scheme_a(circuit, state, channel: Optional[Channel] = None) -> SchemeOutput:
    out = run_scheme_a_batch(circuit, state, channel)
    return _single(out, with_bloch=True)


def run_scheme_b(circuit, state, channel: Optional[Channel] = None) -> SchemeOutput:
    return _single(run_scheme_b_batch(circuit, state, channel), with_bloch=False)


def adjoint_circuit(circuit: CompiledCircuit) -> CompiledCircuit:
    u1, gates = circuit.adjoint_gates()
    return CompiledCircuit(u1, gates, circuit.selected, circuit.rescale)
