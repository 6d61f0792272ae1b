"""Matrix-product-state classifier with a label index on the last tensor.

Storage follows the index order ``(physical, out-bond, in-bond)``:

* ``tensors[0]``: ``(i_1, a_1)``
* ``tensors[n]``: ``(i_n, a_n, a_{n-1})`` for interior sites
* ``tensors[-1]``: ``(i_N, c, a_{N-1})``

A one-site model is a single ``(i_1, c)`` matrix. In canonical form every
tensor, read as a map from ``(physical, in-bond)`` to ``out-bond``, has
orthonormal columns, so contracting from site 1 towards the label yields
identities on every bond and ``<Psi|Psi> = N_c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .errors import NormalizationError, NumericalRankError, ShapeError
from .features import ProductState, RescaleStats

PHYS_DIM = 2
BOND_DIM = 2
N_CLASSES = 2
CANONICAL_TOL = 1e-10
PROB_FLOOR = 1e-12
EIG_FLOOR = 1e-15


@dataclass(frozen=True)
class MpsModel:
    tensors: List[np.ndarray]
    selected: Optional[List[int]] = None
    rescale: Optional[RescaleStats] = None
    canonical: bool = False
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        tensors = [np.array(t, dtype=np.float64) for t in self.tensors]
        if not tensors:
            raise ShapeError("an MPS needs at least one site")
        for n, t in enumerate(tensors):
            want = expected_shape(n, len(tensors))
            if t.shape != want:
                raise ShapeError(f"site {n}: shape {t.shape}, expected {want}")
            t.setflags(write=False)
        object.__setattr__(self, "tensors", tensors)
        if self.selected is not None:
            sel = [int(s) for s in self.selected]
            if len(sel) != len(tensors):
                raise ShapeError(f"{len(sel)} selected features for {len(tensors)} sites")
            object.__setattr__(self, "selected", sel)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dim(self) -> int:
        return BOND_DIM

    @property
    def n_classes(self) -> int:
        return N_CLASSES

    def cores(self) -> List[np.ndarray]:
        """Uniform ``(phys, out, in)`` view; the first site gets a trivial in-bond."""
        return [t[:, :, None] if t.ndim == 2 else t for t in self.tensors]

    def with_tensors(self, tensors, canonical: Optional[bool] = None) -> "MpsModel":
        return replace(
            self, tensors=list(tensors), canonical=self.canonical if canonical is None else canonical
        )


def expected_shape(site: int, n_sites: int) -> tuple:
    if site == 0:
        return (PHYS_DIM, N_CLASSES if n_sites == 1 else BOND_DIM)
    if site == n_sites - 1:
        return (PHYS_DIM, N_CLASSES, BOND_DIM)
    return (PHYS_DIM, BOND_DIM, BOND_DIM)


def from_cores(cores: Sequence[np.ndarray]) -> List[np.ndarray]:
    return [c[:, :, 0] if k == 0 else c for k, c in enumerate(cores)]


def as_matrix(core: np.ndarray) -> np.ndarray:
    """``(phys, out, in)`` core as a ``(phys*in, out)`` matrix."""
    p, o, i = core.shape
    return core.transpose(0, 2, 1).reshape(p * i, o)


def from_matrix(mat: np.ndarray, in_dim: int) -> np.ndarray:
    out = mat.shape[1]
    return mat.reshape(PHYS_DIM, in_dim, out).transpose(0, 2, 1)


def isometry_residual(model: MpsModel) -> float:
    """Largest deviation from the canonical conditions over all sites."""
    worst = 0.0
    for core in model.cores():
        m = as_matrix(core)
        worst = max(worst, float(np.abs(m.T @ m - np.eye(m.shape[1])).max()))
    return worst


def is_canonical(model: MpsModel, tol: float = CANONICAL_TOL) -> bool:
    return isometry_residual(model) <= tol


def fix_column_signs(q: np.ndarray, r: Optional[np.ndarray] = None):
    """Make the largest-magnitude entry of every column of ``q`` positive."""
    idx = np.argmax(np.abs(q), axis=0)
    signs = np.sign(q[idx, np.arange(q.shape[1])])
    signs[signs == 0] = 1.0
    q = q * signs
    if r is not None:
        r = r * signs[:, None]
    return q, r


def polar_isometry(mat: np.ndarray) -> np.ndarray:
    """Closest matrix with orthonormal columns (polar factor of a tall matrix)."""
    u, _, vt = np.linalg.svd(mat, full_matrices=False)
    return u @ vt


def canonicalize(model: MpsModel, rank_tol: float = 1e-12) -> MpsModel:
    """Bring ``model`` into canonical form with a QR sweep towards the label.

    Bond transformations are exact. The residual 2x2 factor left on the label
    index cannot be absorbed by a gauge change, so its orthogonal polar part is
    kept and its positive part dropped: class amplitudes become
    ``G^{-1/2} M`` with ``G`` the label-space Gram matrix of the input state,
    which is a global scale exactly when ``G`` is proportional to the identity.
    """
    cores = [c.copy() for c in model.cores()]
    out = []
    carry = None
    for n, core in enumerate(cores):
        if carry is not None:
            core = np.einsum("poa,ka->pok", core, carry)
        mat = as_matrix(core)
        q, r = np.linalg.qr(mat)
        scale = max(np.abs(mat).max(), 1e-300)
        if np.abs(np.diag(r)).min() <= rank_tol * scale or not np.all(np.isfinite(r)):
            raise NumericalRankError(f"rank-deficient tensor at site {n}", site=n)
        q, r = fix_column_signs(q, r)
        if n == len(cores) - 1:
            # r^T = P U with P > 0; keep U on the label index
            u, _, vt = np.linalg.svd(r.T)
            q = q @ (u @ vt).T
        else:
            carry = r
        out.append(from_matrix(q, core.shape[2]))
    return model.with_tensors(from_cores(out), canonical=True)


def init_random(n_sites: int, seed: int = 0, scale: Optional[float] = None, **meta) -> MpsModel:
    """Random tensors, then canonicalized. Deterministic in ``seed``.

    With ``scale=None`` every entry is standard normal. Otherwise each bond
    map starts at ``I/sqrt(2)`` per physical index and gets Gaussian noise of
    standard deviation ``scale``; on long chains this keeps the initial
    amplitudes from being dominated by sites far from the label.
    """
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    rng = np.random.default_rng(seed)
    tensors = []
    for n in range(n_sites):
        shape = expected_shape(n, n_sites)
        if scale is None:
            tensors.append(rng.standard_normal(shape))
            continue
        t = scale * rng.standard_normal(shape)
        if n == 0:
            t += 1.0 / np.sqrt(2.0)
        elif n < n_sites - 1:
            t += np.eye(BOND_DIM)[None] / np.sqrt(2.0)
        tensors.append(t)
    return canonicalize(MpsModel(tensors, **meta))


def _qubits(model: MpsModel, state) -> np.ndarray:
    q = state.qubits if isinstance(state, ProductState) else np.asarray(state, dtype=np.float64)
    if q.shape[-2:] != (model.n_sites, PHYS_DIM):
        raise ShapeError(f"product state of shape {q.shape} for a {model.n_sites}-site MPS")
    return q


def contract_batch(model: MpsModel, qubits: np.ndarray, log_scaled: bool = False):
    """Class amplitudes for a batch ``(m, n_sites, 2)`` of product states.

    With ``log_scaled`` the running bond vector is renormalized at every
    site and ``(amplitudes, log_norm)`` is returned with
    ``true = amplitudes * exp(log_norm)``; needed for long chains.
    """
    qubits = _qubits(model, qubits)
    m = qubits.shape[0]
    v = np.ones((m, 1))
    log_norm = np.zeros(m)
    for n, core in enumerate(model.cores()):
        v = np.einsum("mp,poa,ma->mo", qubits[:, n], core, v)
        if log_scaled:
            nrm = np.linalg.norm(v, axis=1)
            nrm = np.where(nrm > 0, nrm, 1.0)
            v = v / nrm[:, None]
            log_norm += np.log(nrm)
    if log_scaled:
        return v, log_norm
    return v


def class_amplitudes(model: MpsModel, state) -> np.ndarray:
    """``M_c = <Psi| (phi (x) |c>)`` for one product state; length ``N_c``."""
    q = _qubits(model, state)
    return contract_batch(model, q[None])[0]


def probability(model: MpsModel, state, c: Optional[int] = None):
    """Unnormalized class probabilities ``|M_c|^2`` (all classes if ``c`` is None)."""
    p = class_amplitudes(model, state) ** 2
    return p if c is None else float(p[c])


def log_probabilities(model: MpsModel, qubits: np.ndarray) -> np.ndarray:
    """``ln |M_c|^2`` for a batch, computed without underflow; shape ``(m, N_c)``."""
    amp, log_norm = contract_batch(model, qubits, log_scaled=True)
    with np.errstate(divide="ignore"):
        return 2.0 * (np.log(np.abs(amp)) + log_norm[:, None])


def loss(model: MpsModel, qubits: np.ndarray, labels: Sequence[int], floor: float = PROB_FLOOR) -> float:
    """Negative log-likelihood ``-sum_m ln P_{c_m}`` with ``P`` clamped below at ``floor``."""
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_probabilities(model, qubits)[np.arange(len(labels)), labels]
    return float(-np.maximum(logp, np.log(floor)).sum())


def norm_squared(model: MpsModel) -> float:
    env = np.ones((1, 1))
    for core in model.cores():
        env = np.einsum("poa,pOA,aA->oO", core, core, env)
    return float(np.trace(env))


def site_density_matrices(model: MpsModel) -> np.ndarray:
    """Normalized one-site reduced density matrices, shape ``(n_sites, 2, 2)``."""
    cores = model.cores()
    n = len(cores)
    left = [np.ones((1, 1))]
    for core in cores[:-1]:
        left.append(np.einsum("poa,pOA,aA->oO", core, core, left[-1]))
    right = [None] * n
    right[-1] = np.eye(N_CLASSES)
    for k in range(n - 1, 0, -1):
        right[k - 1] = np.einsum("poa,pOA,oO->aA", cores[k], cores[k], right[k])
    rhos = np.empty((n, PHYS_DIM, PHYS_DIM))
    for k, core in enumerate(cores):
        rho = np.einsum("poa,POA,aA,oO->pP", core, core, left[k], right[k])
        tr = np.trace(rho)
        if not np.isfinite(tr) or tr <= 0:
            raise NormalizationError("MPS has zero or non-finite norm")
        rhos[k] = rho / tr
    return rhos


def von_neumann(rho: np.ndarray) -> float:
    w = np.linalg.eigvalsh(rho)
    w = w[w > EIG_FLOOR]
    return float(-(w * np.log(w)).sum())


def entanglement_entropies(model: MpsModel) -> np.ndarray:
    return np.array([von_neumann(r) for r in site_density_matrices(model)])


def entanglement_entropy(model: MpsModel, site: int) -> float:
    """Von Neumann entropy of the one-site reduced density matrix at ``site``.

    The state is normalized internally, so the result is scale invariant.
    """
    if not 0 <= site < model.n_sites:
        raise IndexError(f"site {site} out of range")
    return von_neumann(site_density_matrices(model)[site])
