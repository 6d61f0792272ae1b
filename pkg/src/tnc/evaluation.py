"""Scoring, the probability distance, failure breakdowns and the feature-count sweep."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from . import simulator
from .compiler import CompiledCircuit, compile_model
from .dataset import Dataset
from .errors import DomainError
from .features import encode_batch
from .mps import MpsModel, contract_batch, log_probabilities
from .pipeline import PreparedData, prepare, reduce, train_full
from .training import TrainConfig, accuracy

log = logging.getLogger(__name__)

MODES = ("mps", "schemeA", "schemeB")
SWEEP_COLUMNS = ("ntilde", "rep", "train_acc", "test_acc", "train_acc_all")


def distance(p, p_th) -> float:
    """Root-mean-square gap between two class distributions, in ``[0, 1]``."""
    p = np.asarray(p, dtype=np.float64)
    p_th = np.asarray(p_th, dtype=np.float64)
    if p.shape != p_th.shape:
        raise DomainError(f"distributions of shapes {p.shape} and {p_th.shape}")
    if np.any((p < 0) | (p > 1)) or np.any((p_th < 0) | (p_th > 1)):
        raise DomainError("probabilities must lie in [0, 1]")
    return float(np.sqrt(np.mean((p - p_th) ** 2)))


@dataclass
class Failure:
    index: int
    label: int
    p0: float
    p1: float


@dataclass
class EvalReport:
    mode: str
    total: int
    failures: List[Failure]
    failures_by_class: dict
    mean_success_prob: float
    bloch: Optional[np.ndarray] = None

    @property
    def accuracy(self) -> float:
        return 1.0 - len(self.failures) / self.total if self.total else 0.0

    def to_dict(self, with_bloch: bool = False) -> dict:
        out = {
            "mode": self.mode,
            "total": self.total,
            "accuracy": self.accuracy,
            "n_failures": len(self.failures),
            "failures_by_class": {str(k): v for k, v in self.failures_by_class.items()},
            "mean_success_prob": self.mean_success_prob,
            "failures": [vars(f) for f in self.failures],
        }
        if with_bloch and self.bloch is not None:
            out["bloch_xz"] = self.bloch.tolist()
        return out


def _raw_weights(target, qubits: np.ndarray, mode: str):
    """Unnormalized class weights ``(B, 2)`` and, for Scheme A, the classifier states."""
    if mode == "mps":
        if not isinstance(target, MpsModel):
            raise TypeError("mode 'mps' needs an MpsModel")
        if target.n_sites > 64:
            # long chains underflow; only the normalized probabilities are meaningful
            logp = log_probabilities(target, qubits)
            return np.exp(logp - logp.max(axis=1, keepdims=True)), None
        return contract_batch(target, qubits) ** 2, None
    circuit = target if isinstance(target, CompiledCircuit) else compile_model(target)
    if mode == "schemeA":
        out = simulator.run_scheme_a_batch(circuit, qubits)
        return out.raw, out.classifier_rho
    return simulator.run_scheme_b_batch(circuit, qubits).raw, None


def evaluate(target: Union[MpsModel, CompiledCircuit], features: np.ndarray, labels: Sequence[int], mode: str = "schemeA") -> EvalReport:
    """Classify every row of ``features`` (already rescaled, site order) and tabulate failures.

    An :class:`MpsModel` passed with a circuit mode is compiled first. For
    MPS mode on chains longer than 64 sites the mean success probability is
    reported as NaN since only normalized probabilities are computed.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    selected = target.selected
    qubits = encode_batch(features, selected)
    labels = np.asarray(labels, dtype=np.int64)
    raw, rho_c = _raw_weights(target, qubits, mode)
    total_w = raw.sum(axis=1)
    probs = raw / np.where(total_w > 0, total_w, 1.0)[:, None]
    decisions = simulator.decide(raw)
    wrong = np.flatnonzero(decisions != labels)
    failures = [Failure(int(i), int(labels[i]), float(probs[i, 0]), float(probs[i, 1])) for i in wrong]
    by_class = {c: int(np.sum(labels[wrong] == c)) for c in (0, 1)}
    bloch = None
    if rho_c is not None:
        bloch = np.stack(simulator.bloch_xz(rho_c), axis=1)
    mean_sp = float(np.mean(total_w)) if len(labels) else 0.0
    if mode == "mps" and target.n_sites > 64:
        mean_sp = float("nan")  # weights were rescaled per image
    return EvalReport(mode, len(labels), failures, by_class, mean_sp, bloch)


@dataclass
class SweepTable:
    rows: List[dict] = field(default_factory=list)

    def summary(self) -> dict:
        """Mean and sample standard deviation per feature count."""
        out = {}
        for k in sorted({r["ntilde"] for r in self.rows}):
            sub = [r for r in self.rows if r["ntilde"] == k]
            entry = {}
            for key in ("train_acc", "test_acc", "train_acc_all"):
                vals = np.array([r[key] for r in sub])
                entry[key] = (float(vals.mean()), float(vals.std(ddof=1)) if len(vals) > 1 else 0.0)
            out[k] = entry
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow(r)


def sweep_rep(data: PreparedData, full: MpsModel, ntildes: Iterable[int], config: TrainConfig, rep: int = 0):
    """One repetition of the feature-count sweep on an already trained full model.

    Returns ``(rows, models)`` with one CSV row and one retrained model per
    feature count.
    """
    rows, models = [], {}
    for k in ntildes:
        _, model = reduce(data, full, k, config)
        row = {
            "ntilde": k,
            "rep": rep,
            "train_acc": accuracy(model, encode_batch(data.subset_features, model.selected), data.subset_labels),
            "test_acc": accuracy(model, encode_batch(data.test_features, model.selected), data.test_labels),
            "train_acc_all": accuracy(model, encode_batch(data.train_features, model.selected), data.train_labels),
        }
        log.info("rep %d ntilde %d: test %.4f", rep, k, row["test_acc"])
        rows.append(row)
        models[k] = model
    return rows, models


def ntilde_sweep(
    train: Dataset,
    test: Dataset,
    ntildes: Iterable[int],
    config: Optional[TrainConfig] = None,
    reps: int = 20,
    base_seed: Optional[int] = None,
) -> SweepTable:
    """Train, select and retrain from scratch for each feature count, ``reps`` times.

    Repetition ``r`` uses seed ``base_seed + r`` for both the training
    subset and the initial tensors. ``train_acc`` is measured on the
    training subset, ``train_acc_all`` on the whole training split.
    """
    ntildes = list(ntildes)
    if any(k < 1 for k in ntildes):
        raise ValueError("feature counts must be >= 1")
    cfg = config or TrainConfig()
    base = cfg.seed if base_seed is None else base_seed
    table = SweepTable()
    for rep in range(reps):
        rcfg = replace(cfg, seed=base + rep)
        data = prepare(train, test, rcfg)
        rows, _ = sweep_rep(data, train_full(data, rcfg), ntildes, rcfg, rep)
        table.rows.extend(rows)
    return table
