"""Experimental noise model and Monte Carlo estimate of the success rate.

Three imperfections are simulated: uniform jitter on every rotation angle
of the compiled gates, a dephasing channel on the classifier qubit after
each two-qubit gate, and Poissonian photon counting at readout.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from . import simulator
from .compiler import AngleSet, CompiledCircuit, circuit_from_angles, extract_angles, gates_from_angles
from .errors import DomainError

_Z = np.diag([1.0, -1.0])
_ZI = np.kron(_Z, np.eye(2))


@dataclass
class NoiseConfig:
    angle_halfwidth: float = 0.0  # degrees
    eta: float = 1.0
    photon_total: Optional[float] = 1e4  # None disables count sampling
    runs: int = 100
    seed: int = 0
    redraw: str = "image"  # jitter drawn per "image" or once per "run"

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"eta must lie in [0, 1], got {self.eta}")
        if self.angle_halfwidth < 0:
            raise DomainError("angle_halfwidth must be >= 0")
        if self.photon_total is not None and self.photon_total < 1:
            raise DomainError("photon_total must be >= 1")
        if self.runs < 1:
            raise DomainError("runs must be >= 1")
        if self.redraw not in ("image", "run"):
            raise DomainError(f"unknown redraw mode {self.redraw!r}")


@dataclass
class McReport:
    rates: List[float]
    scheme: str
    config: dict
    mean_success_prob: float = float("nan")
    min_rate: float = field(init=False)
    mean_rate: float = field(init=False)

    def __post_init__(self):
        self.min_rate = float(min(self.rates))
        self.mean_rate = float(np.mean(self.rates))

    def to_dict(self) -> dict:
        return asdict(self)


def apply_dephasing(rho: np.ndarray, eta: float) -> np.ndarray:
    """``eta * rho + (1 - eta) * Z rho Z`` with ``Z`` on the classifier qubit.

    Accepts classifier-only ``(..., 2, 2)`` or two-qubit ``(..., 4, 4)`` states.
    """
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    rho = np.asarray(rho)
    z = _Z if rho.shape[-1] == 2 else _ZI
    return eta * rho + (1.0 - eta) * (z @ rho @ z)


def dephasing_channel(eta: float):
    if eta == 1.0:
        return None
    return lambda rho: apply_dephasing(rho, eta)


def jitter_angles(angles: AngleSet, halfwidth_deg: float, rng: np.random.Generator, batch=()):
    """Draw ``theta + delta`` for every angle, ``delta ~ U[-w, w]`` (degrees in, radians out)."""
    w = np.deg2rad(halfwidth_deg)
    shape = tuple(np.atleast_1d(batch)) if batch != () else ()
    u1 = angles.u1_angle + rng.uniform(-w, w, size=shape)
    gates = angles.gate_angles + rng.uniform(-w, w, size=shape + angles.gate_angles.shape)
    return u1, gates


def perturb_circuit(circuit: CompiledCircuit, angle_halfwidth: float, rng: np.random.Generator) -> CompiledCircuit:
    """One jittered copy of ``circuit``; reflection signs are left untouched."""
    angles = extract_angles(circuit)
    u1, gates = jitter_angles(angles, angle_halfwidth, rng)
    return circuit_from_angles(circuit, AngleSet(float(u1), angles.u1_sign, gates, angles.gate_signs))


def sample_counts(p0, p1, photon_total: float, rng: np.random.Generator):
    """Poisson photon counts for outcome probabilities ``p0``, ``p1`` (arrays allowed)."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    n0 = rng.poisson(photon_total * p0)
    n1 = rng.poisson(photon_total * p1)
    empty = (n0 + n1) == 0
    while np.any(empty):
        n0 = np.where(empty, rng.poisson(photon_total * p0), n0)
        n1 = np.where(empty, rng.poisson(photon_total * p1), n1)
        empty = (n0 + n1) == 0
    return n0, n1


def _batched_gates(angles: AngleSet, cfg: NoiseConfig, rng, n_images: int):
    if cfg.angle_halfwidth == 0.0:
        u1, gates = angles.u1_angle, angles.gate_angles
    elif cfg.redraw == "image":
        u1, gates = jitter_angles(angles, cfg.angle_halfwidth, rng, n_images)
    else:
        u1, gates = jitter_angles(angles, cfg.angle_halfwidth, rng)
    return gates_from_angles(u1, gates, angles.u1_sign, angles.gate_signs)


def noisy_run(circuit, qubits, labels, cfg: NoiseConfig, scheme: str, rng) -> tuple:
    """One Monte Carlo pass over the data set. Returns ``(success_rate, mean_post_selection)``."""
    angles = extract_angles(circuit)
    u1, gates = _batched_gates(angles, cfg, rng, len(labels))
    run = simulator.run_scheme_a_batch if scheme == "A" else simulator.run_scheme_b_batch
    out = run((u1, gates), qubits, channel=dephasing_channel(cfg.eta), check=False)
    if cfg.photon_total is None:
        dec = out.decisions
    else:
        p = out.probs
        n0, n1 = sample_counts(p[:, 0], p[:, 1], cfg.photon_total, rng)
        dec = np.where(n0 > n1, 0, np.where(n1 > n0, 1, -1))
    return float(np.mean(dec == labels)), float(np.mean(out.success_prob))


def monte_carlo_success(circuit: CompiledCircuit, qubits, labels, config: NoiseConfig, scheme: str = "A") -> McReport:
    """Repeat the noisy classification of the whole set ``config.runs`` times.

    Every run draws from its own child stream of ``config.seed`` so results
    do not depend on execution order.
    """
    scheme = scheme.upper()
    if scheme not in ("A", "B"):
        raise ValueError(f"unknown scheme {scheme!r}")
    labels = np.asarray(labels, dtype=np.int64)
    qubits = np.asarray(qubits, dtype=np.float64)
    streams = np.random.SeedSequence(config.seed).spawn(config.runs)
    rates, post = [], []
    for ss in streams:
        rate, ps = noisy_run(circuit, qubits, labels, config, scheme, np.random.default_rng(ss))
        rates.append(rate)
        post.append(ps)
    return McReport(rates, scheme, asdict(config), float(np.mean(post)))
