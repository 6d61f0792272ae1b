"""Compile a canonical MPS into the two-qubit sequential circuit.

Two-qubit gates act on ``classifier (x) operational`` with basis order
``|00>, |01>, |10>, |11>`` (index ``2*classifier + operational``). For a
site tensor ``A[i, out, in]`` the gate rows with operational output 0 are
fixed by ``<out, 0| U |in, i> = A[i, out, in]``; the other two rows are an
orthonormal completion. The single-qubit gate is ``<a_1| U_1 |i_1> = A[i_1, a_1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import cossin

from .errors import DecompositionError, PreconditionError
from .features import RescaleStats
from .mps import MpsModel, is_canonical

ORTHO_TOL = 1e-10
# operational-qubit partition: rows/cols with operational 0 first
_PERM = np.array([0, 2, 1, 3])
CONSTRAINED_ROWS = (0, 2)


@dataclass(frozen=True)
class CompiledCircuit:
    u1: np.ndarray
    gates: List[np.ndarray]
    selected: Optional[List[int]] = None
    rescale: Optional[RescaleStats] = None

    @property
    def n_layers(self) -> int:
        return 1 + len(self.gates)

    def adjoint_gates(self):
        return self.u1.conj().T, [g.conj().T for g in self.gates]


def complete_unitary(
    rows: np.ndarray,
    row_indices: Optional[Sequence[int]] = None,
    seeds: Optional[np.ndarray] = None,
    tol: float = ORTHO_TOL,
) -> np.ndarray:
    """Extend ``k`` orthonormal rows of length ``m`` to an ``m x m`` orthogonal matrix.

    ``rows[j]`` is placed at ``row_indices[j]`` (default: the first ``k`` rows).
    Remaining rows are filled in order by modified Gram-Schmidt over the
    candidate vectors ``seeds`` (default: canonical basis vectors
    ``e_1, ..., e_m``), skipping candidates that are numerically dependent.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    k, m = rows.shape
    gram = rows @ rows.T
    resid = float(np.abs(gram - np.eye(k)).max())
    if resid > tol:
        raise PreconditionError(f"constrained rows are not orthonormal (Gram residual {resid:.3e})")
    idx = list(range(k)) if row_indices is None else [int(i) for i in row_indices]
    if len(idx) != k or len(set(idx)) != k or not all(0 <= i < m for i in idx):
        raise PreconditionError(f"bad row indices {idx} for {k} rows of a {m}x{m} matrix")
    basis = [r for r in rows]
    extra = []
    candidates = np.eye(m) if seeds is None else np.asarray(seeds, dtype=np.float64)
    for v in candidates:
        if len(basis) == m:
            break
        v = v.astype(np.float64).copy()
        for _ in range(2):  # second pass re-orthogonalizes
            for b in basis:
                v -= (b @ v) * b
        nrm = np.linalg.norm(v)
        if nrm > 1e-6:
            v /= nrm
            basis.append(v)
            extra.append(v)
    if len(basis) < m:
        raise PreconditionError("completion seeds do not span the complement")
    out = np.empty((m, m))
    free = [i for i in range(m) if i not in idx]
    out[idx] = rows
    if extra:
        out[free] = np.array(extra)
    return out


def _check_orthogonal(u: np.ndarray, tol: float = ORTHO_TOL) -> float:
    resid = float(np.abs(u.T @ u - np.eye(len(u))).max())
    if resid > tol:
        raise PreconditionError(f"matrix is not orthogonal (residual {resid:.3e})")
    return resid


def constrained_rows(core: np.ndarray) -> np.ndarray:
    """The two fixed rows of a two-qubit gate from a ``(i, out, in)`` core."""
    # row out: entries over columns 2*in + i
    return core.transpose(1, 2, 0).reshape(2, 4)


def compile_model(model: MpsModel, completion_seeds: Optional[Sequence[np.ndarray]] = None) -> CompiledCircuit:
    """Translate a canonical MPS into ``U_1`` plus ``n_sites - 1`` two-qubit gates.

    ``completion_seeds`` optionally gives one seed matrix per two-qubit gate,
    to pick a different (equally valid) orthogonal completion.
    """
    if not is_canonical(model):
        raise PreconditionError("compile needs a canonical MPS")
    u1 = model.tensors[0].T.copy()
    gates = []
    for n, core in enumerate(model.tensors[1:]):
        seeds = None if completion_seeds is None else completion_seeds[n]
        gates.append(complete_unitary(constrained_rows(core), CONSTRAINED_ROWS, seeds))
    return CompiledCircuit(u1, gates, model.selected, model.rescale)


@dataclass(frozen=True)
class CsdFactors:
    """``U = L @ S @ R`` with ``L``, ``R`` controlled by the operational qubit.

    ``left``/``right`` hold the two 2x2 blocks acting on the classifier qubit
    for operational value 0 and 1; ``theta`` are the two cosine-sine angles.
    """

    left: tuple
    right: tuple
    theta: np.ndarray

    @property
    def L(self) -> np.ndarray:
        return _from_partition(_block_diag(*self.left))

    @property
    def R(self) -> np.ndarray:
        return _from_partition(_block_diag(*self.right))

    @property
    def S(self) -> np.ndarray:
        return _from_partition(cs_matrix(self.theta))

    def matrix(self) -> np.ndarray:
        return self.L @ self.S @ self.R


def _block_diag(a, b):
    out = np.zeros((4, 4), dtype=np.result_type(a, b))
    out[:2, :2] = a
    out[2:, 2:] = b
    return out


def _to_partition(u):
    return u[np.ix_(_PERM, _PERM)]


def _from_partition(v):
    inv = np.argsort(_PERM)
    return v[np.ix_(inv, inv)]


def cs_matrix(theta) -> np.ndarray:
    """``[[C, -S], [S, C]]`` in the partitioned (operational-major) basis."""
    theta = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape[:-1] + (4, 4))
    out[..., [0, 1], [0, 1]] = c
    out[..., [2, 3], [2, 3]] = c
    out[..., [0, 1], [2, 3]] = -s
    out[..., [2, 3], [0, 1]] = s
    return out


def csd_decompose(u: np.ndarray, tol: float = ORTHO_TOL) -> CsdFactors:
    """Cosine-sine decomposition of a real orthogonal 4x4 gate."""
    u = np.asarray(u, dtype=np.float64)
    _check_orthogonal(u)
    v = _to_partition(u)
    lw, cs, rw = cossin(v, p=2, q=2)
    c = np.clip(np.diag(cs)[:2], -1.0, 1.0)
    s = cs[2:, :2].diagonal()
    theta = np.arctan2(s, c)
    fac = CsdFactors((lw[:2, :2], lw[2:, 2:]), (rw[:2, :2], rw[2:, 2:]), theta)
    err = np.linalg.norm(fac.matrix() - u)
    if err > tol:
        raise DecompositionError(f"CSD reconstruction error {err:.3e}")
    return fac


def rotation(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def orthogonal_angle(q: np.ndarray):
    """Split a 2x2 orthogonal matrix into ``rotation(phi) @ diag(1, sign)``."""
    sign = 1.0 if np.linalg.det(q) > 0 else -1.0
    return float(np.arctan2(q[1, 0], q[0, 0])), sign


def orthogonal_from_angle(phi, sign) -> np.ndarray:
    """Inverse of :func:`orthogonal_angle`; ``phi`` may carry batch axes."""
    r = rotation(phi)
    sign = np.asarray(sign, dtype=np.float64)
    cols = np.stack(np.broadcast_arrays(np.ones_like(sign), sign), -1)
    return r * cols[..., None, :]


@dataclass
class AngleSet:
    """Rotation angles (radians) and reflection signs describing a circuit.

    Per two-qubit gate the angle vector is
    ``[theta_1, theta_2, L_0, L_1, R_0, R_1]``.
    """

    u1_angle: float
    u1_sign: float
    gate_angles: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))
    gate_signs: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    def flat(self) -> np.ndarray:
        return np.concatenate([[self.u1_angle], self.gate_angles.ravel()])

    def __len__(self) -> int:
        return 1 + self.gate_angles.size


def extract_angles(circuit: CompiledCircuit) -> AngleSet:
    phi1, s1 = orthogonal_angle(circuit.u1)
    angles = np.zeros((len(circuit.gates), 6))
    signs = np.zeros((len(circuit.gates), 4))
    for n, g in enumerate(circuit.gates):
        f = csd_decompose(g)
        angles[n, :2] = f.theta
        for j, blk in enumerate(f.left + f.right):
            angles[n, 2 + j], signs[n, j] = orthogonal_angle(blk)
    return AngleSet(phi1, s1, angles, signs)


def gates_from_angles(u1_angle, gate_angles, u1_sign, gate_signs):
    """Rebuild gates from (possibly batched) angles.

    ``u1_angle`` has shape ``batch``; ``gate_angles`` has shape
    ``batch + (n_gates, 6)``. Returns ``(u1, gates)`` with shapes
    ``batch + (2, 2)`` and ``batch + (n_gates, 4, 4)``.
    """
    u1 = orthogonal_from_angle(u1_angle, u1_sign)
    gate_angles = np.asarray(gate_angles, dtype=np.float64)
    blocks = [orthogonal_from_angle(gate_angles[..., 2 + j], np.asarray(gate_signs)[..., j])
              for j in range(4)]
    shape = gate_angles.shape[:-1]
    left = np.zeros(shape + (4, 4))
    right = np.zeros(shape + (4, 4))
    left[..., :2, :2], left[..., 2:, 2:] = blocks[0], blocks[1]
    right[..., :2, :2], right[..., 2:, 2:] = blocks[2], blocks[3]
    part = left @ cs_matrix(gate_angles[..., :2]) @ right
    inv = np.argsort(_PERM)
    gates = part[..., inv, :][..., :, inv]
    return u1, gates


def circuit_from_angles(circuit: CompiledCircuit, angles: AngleSet) -> CompiledCircuit:
    u1, gates = gates_from_angles(angles.u1_angle, angles.gate_angles, angles.u1_sign, angles.gate_signs)
    return CompiledCircuit(u1, list(gates), circuit.selected, circuit.rescale)
