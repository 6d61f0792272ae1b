"""Sweeping optimization of an isometric MPS and entanglement-based feature selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from . import mps as mps_mod
from .errors import SelectionError, TrainingError
from .features import encode_batch
from .mps import MpsModel, as_matrix, from_cores, from_matrix, polar_isometry

log = logging.getLogger(__name__)

_TINY = 1e-300


@dataclass
class TrainConfig:
    n_samples: int = 2000
    sweeps: int = 20
    learning_rate: float = 0.1
    seed: int = 0
    stop_tol: float = 1e-4
    loss_tol: float = 1e-5
    patience: int = 3
    max_halvings: int = 10
    steps_per_site: int = 10
    max_step: float = 100.0
    site_tol: float = 1e-7
    init_scale: Optional[float] = 0.3
    retrain_restarts: int = 3

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.n_samples < 1 or self.sweeps < 0:
            raise ValueError("n_samples must be >= 1 and sweeps >= 0")


@dataclass
class SelectionResult:
    entropies: np.ndarray
    chosen: List[int]


@dataclass
class TrainHistory:
    loss: List[float] = field(default_factory=list)
    accuracy: List[float] = field(default_factory=list)


def subsample(n_total: int, n_samples: int, seed: int) -> np.ndarray:
    """Indices of ``n_samples`` items drawn without replacement, in ascending order."""
    if n_samples >= n_total:
        return np.arange(n_total)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_total, size=n_samples, replace=False))


class _Environments:
    """Per-sample left/right contractions around one site, stored log-normalized.

    ``left[k]`` has shape ``(m, D_in)`` and is the contraction of sites
    ``< k``; ``right[k]`` has shape ``(m, D_out, N_c)`` and maps the out-bond
    of site ``k`` to class amplitudes through sites ``> k``.
    """

    def __init__(self, cores: List[np.ndarray], qubits: np.ndarray):
        self.cores = cores
        self.q = qubits
        m, n = qubits.shape[:2]
        self.left: List[Optional[np.ndarray]] = [None] * n
        self.left_log = np.zeros((n, m))
        self.right: List[Optional[np.ndarray]] = [None] * n
        self.right_log = np.zeros((n, m))
        self.steps = np.full(n, np.nan)
        self.left[0] = np.ones((m, 1))
        for k in range(1, n):
            self.update_left(k)
        self.right[n - 1] = np.broadcast_to(np.eye(mps_mod.N_CLASSES), (m, 2, 2)).copy()
        for k in range(n - 1, 0, -1):
            self.update_right(k - 1)

    def update_left(self, k: int) -> None:
        """Recompute ``left[k]`` from site ``k - 1``."""
        core = self.cores[k - 1]
        sl = self.q[:, k - 1, :, None] * self.left[k - 1][:, None, :]
        v = sl.reshape(len(sl), -1) @ core.transpose(0, 2, 1).reshape(-1, core.shape[1])
        nrm = np.linalg.norm(v, axis=1)
        nrm = np.where(nrm > 0, nrm, 1.0)
        self.left[k] = v / nrm[:, None]
        self.left_log[k] = self.left_log[k - 1] + np.log(nrm)

    def update_right(self, k: int) -> None:
        """Recompute ``right[k]`` from site ``k + 1``."""
        core = self.cores[k + 1]
        b = (self.q[:, k + 1] @ core.reshape(2, -1)).reshape(-1, *core.shape[1:])
        r = np.swapaxes(b, 1, 2) @ self.right[k + 1]
        nrm = np.linalg.norm(r, axis=(1, 2))
        nrm = np.where(nrm > 0, nrm, 1.0)
        self.right[k] = r / nrm[:, None, None]
        self.right_log[k] = self.right_log[k + 1] + np.log(nrm)

    def local_amplitudes(self, k: int, core: np.ndarray) -> np.ndarray:
        """Normalized class amplitudes ``(m, N_c)`` with ``core`` placed at site ``k``."""
        return np.einsum("mp,poa,ma,moc->mc", self.q[:, k], core, self.left[k], self.right[k])

    def log_scale(self, k: int) -> np.ndarray:
        return self.left_log[k] + self.right_log[k]


def _design(env: _Environments, k: int, labels: np.ndarray) -> np.ndarray:
    """Rows ``s (x) R[:, c_m] (x) l`` so the label amplitude is ``design @ core.ravel()``."""
    m = len(labels)
    r_c = env.right[k][np.arange(m), :, labels]
    d = env.q[:, k, :, None, None] * r_c[:, None, :, None] * env.left[k][:, None, None, :]
    return d.reshape(m, -1)


def _objective_from(amp: np.ndarray, log_scale: np.ndarray) -> float:
    """Mean ``-ln P_c`` over samples given normalized label amplitudes."""
    return float(-2.0 * np.mean(np.log(np.maximum(np.abs(amp), _TINY)) + log_scale))


def _objective(amp: np.ndarray, labels: np.ndarray, log_scale: np.ndarray) -> float:
    return _objective_from(amp[np.arange(len(labels)), labels], log_scale)


def _gradient_from(design: np.ndarray, core: np.ndarray) -> np.ndarray:
    amp = design @ core.ravel()
    amp = np.where(np.abs(amp) < _TINY, _TINY, amp)
    return (design.T @ (-2.0 / (len(amp) * amp))).reshape(core.shape)


def _gradient(env: _Environments, k: int, core: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Euclidean gradient of the mean loss with respect to the core at site ``k``."""
    return _gradient_from(_design(env, k, labels), core)


def site_gradient(model: MpsModel, qubits: np.ndarray, labels: Sequence[int], site: int) -> np.ndarray:
    """Gradient of the summed loss ``-sum ln P_c`` with respect to ``model.tensors[site]``.

    Returned in the storage shape of that tensor.
    """
    qubits = np.asarray(qubits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    cores = model.cores()
    env = _Environments(cores, qubits)
    g = _gradient(env, site, cores[site], labels) * len(labels)
    return g[:, :, 0] if site == 0 else g


def _retract(core: np.ndarray, direction: np.ndarray, step: float) -> np.ndarray:
    """Step along the tangent part of ``-direction`` and map back to an isometry."""
    x = as_matrix(core)
    g = as_matrix(direction)
    sym = x.T @ g
    g = g - x @ (sym + sym.T) / 2
    return from_matrix(polar_isometry(x - step * g), core.shape[2])


def _optimize_site(env, k, labels, cfg, sweep) -> None:
    """Several projected-gradient steps at site ``k`` with backtracking.

    The step that last succeeded at a site is remembered and doubled on the
    next attempt, so sites whose local problem is easy converge quickly.
    """
    core = env.cores[k]
    scale = env.log_scale(k)
    design = _design(env, k, labels)
    current = _objective_from(design @ core.ravel(), scale)
    step = env.steps[k]
    for _ in range(cfg.steps_per_site):
        grad = _gradient_from(design, core)
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite gradient at site {k}", sweep=sweep)
        for _ in range(cfg.max_halvings + 1):
            trial = _retract(core, grad, step)
            value = _objective_from(design @ trial.ravel(), scale)
            if np.isnan(value):
                raise TrainingError(f"loss became NaN at site {k}", sweep=sweep)
            if value <= current:
                improved = current - value
                core, current = trial, value
                break
            step /= 2
        else:
            step = cfg.learning_rate
            break
        step = min(2 * step, cfg.max_step)
        if improved <= cfg.site_tol * max(abs(current), 1.0):
            break
    env.steps[k] = step
    env.cores[k] = core


def _accuracy_from_amplitudes(amp: np.ndarray, labels: np.ndarray) -> float:
    p = amp**2
    pred = np.where(p[:, 0] > p[:, 1], 0, np.where(p[:, 1] > p[:, 0], 1, -1))
    return float(np.mean(pred == labels))


def train(
    qubits: np.ndarray,
    labels: Sequence[int],
    config: Optional[TrainConfig] = None,
    init: Optional[MpsModel] = None,
    history: Optional[TrainHistory] = None,
    **meta,
) -> MpsModel:
    """Train a canonical MPS on encoded samples ``qubits`` of shape ``(m, n_sites, 2)``.

    Each site update is a projected gradient step on the mean log-loss
    followed by a polar retraction; steps that would increase the loss are
    halved (up to ``max_halvings`` times) and rejected if still uphill.
    Sweeps go from the label end back to site 1 and forward again.
    """
    cfg = config or TrainConfig()
    qubits = np.asarray(qubits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise TrainingError("empty training set")
    n = qubits.shape[1]
    model = init if init is not None else mps_mod.init_random(n, cfg.seed, cfg.init_scale)
    if not model.canonical:
        model = mps_mod.canonicalize(model)
    env = _Environments([c.copy() for c in model.cores()], qubits)
    env.steps[:] = cfg.learning_rate
    accs: List[float] = []
    losses: List[float] = []
    for sweep in range(cfg.sweeps):
        for k in range(n - 1, -1, -1):
            _optimize_site(env, k, labels, cfg, sweep)
            if k > 0:
                env.update_right(k - 1)
        for k in range(1, n):
            env.update_left(k)
            _optimize_site(env, k, labels, cfg, sweep)
        amp = env.local_amplitudes(n - 1, env.cores[n - 1])
        acc = _accuracy_from_amplitudes(amp, labels)
        value = _objective(amp, labels, env.log_scale(n - 1)) * len(labels)
        if not np.isfinite(value):
            raise TrainingError("training loss diverged", sweep=sweep)
        if history is not None:
            history.loss.append(value)
            history.accuracy.append(acc)
        log.debug("sweep %d: loss %.6g train acc %.5f", sweep, value, acc)
        accs.append(acc)
        losses.append(value)
        if len(accs) > cfg.patience and all(
            abs(accs[-j] - accs[-j - 1]) < cfg.stop_tol
            and losses[-j - 1] - losses[-j] <= cfg.loss_tol * abs(losses[-j])
            for j in range(1, cfg.patience + 1)
        ):
            break
    meta.setdefault("train_meta", {"seed": cfg.seed, "sweeps": len(accs), "n_samples": len(labels)})
    return replace(model, tensors=from_cores(env.cores), canonical=True, **meta)


def select_features(model: MpsModel, n_keep: int) -> SelectionResult:
    """Pick the ``n_keep`` sites of largest one-site entanglement entropy.

    Ties go to the lower site index; the chosen sites are returned ascending.
    """
    if not 1 <= n_keep <= model.n_sites:
        raise SelectionError(f"cannot keep {n_keep} of {model.n_sites} sites")
    ent = mps_mod.entanglement_entropies(model)
    # stable sort on -S keeps lower indices first among equal entropies
    order = np.argsort(-ent, kind="stable")
    return SelectionResult(entropies=ent, chosen=sorted(int(i) for i in order[:n_keep]))


def predict(model: MpsModel, qubits: np.ndarray) -> np.ndarray:
    """Class decisions ``argmax_c P_c``; exact ties give -1."""
    logp = mps_mod.log_probabilities(model, qubits)
    return np.where(logp[:, 0] > logp[:, 1], 0, np.where(logp[:, 1] > logp[:, 0], 1, -1))


def accuracy(model: MpsModel, qubits: np.ndarray, labels: Sequence[int]) -> float:
    """Fraction of samples whose most probable class is the true label (ties fail)."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        return 0.0
    return float(np.mean(predict(model, qubits) == labels))


def reduce_and_retrain(
    features: np.ndarray,
    labels: Sequence[int],
    selection: Sequence[int],
    config: Optional[TrainConfig] = None,
    rescale=None,
) -> MpsModel:
    """Train a fresh MPS on the selected feature columns only.

    ``config.retrain_restarts`` independent initializations are trained and
    the one with the lowest training loss is kept; small chains otherwise
    sometimes settle in a minimum with the classes swapped.
    """
    cfg = config or TrainConfig()
    sel = list(selection)
    qubits = encode_batch(features, sel)
    best, best_loss = None, np.inf
    for r in range(max(1, cfg.retrain_restarts)):
        init = mps_mod.init_random(len(sel), cfg.seed + 1 + r, cfg.init_scale)
        model = train(qubits, labels, cfg, init=init, selected=sel, rescale=rescale)
        value = mps_mod.loss(model, qubits, labels)
        if value < best_loss:
            best, best_loss = model, value
    return best
