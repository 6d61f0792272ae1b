"""DCT frequency features and the single-qubit feature map.

Images are moved to frequency space with a 2-D type-II DCT, the signed
coefficients are affinely squashed into [0, 1] using min/max statistics of
the training split, and each value ``x`` becomes the qubit
``cos(x*pi/2)|0> + sin(x*pi/2)|1>``.

Feature vectors list the ``H*H`` frequency components in *site order*:
anti-diagonals ``p + q`` from the highest frequency down to the DC term, so
the low frequencies that carry most of the signal sit next to the label
index at the end of the MPS. :func:`frequency_order` gives the mapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .dataset import Image
from .errors import DegenerateStatsError, DomainError, SelectionError, ShapeError


@lru_cache(maxsize=8)
def _dct_matrix(h: int) -> np.ndarray:
    # row p: sqrt(2/H) * alpha(p) * cos((2i+1) p pi / 2H), 0-based p, i
    p = np.arange(h)[:, None]
    i = np.arange(h)[None, :]
    c = np.sqrt(2.0 / h) * np.cos((2 * i + 1) * p * np.pi / (2 * h))
    c[0] /= np.sqrt(2.0)
    c.setflags(write=False)
    return c


def dct2(image) -> np.ndarray:
    """2-D DCT of one square image (``Image`` or array). Returns an ``(H, H)`` array."""
    x = image.pixels if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ShapeError(f"dct2 needs a square image, got shape {x.shape}")
    c = _dct_matrix(x.shape[0])
    return c @ x @ c.T


@lru_cache(maxsize=8)
def frequency_order(h: int) -> np.ndarray:
    """Row-major DCT index of every feature position (DC component last)."""
    p, q = np.divmod(np.arange(h * h), h)
    order = np.lexsort((p, p + q))[::-1].copy()
    order.setflags(write=False)
    return order


def frequency_of(index: int, h: int = 28) -> tuple:
    """``(p, q)`` (0-based) DCT frequency behind feature position ``index``."""
    return tuple(int(v) for v in divmod(int(frequency_order(h)[index]), h))


def to_site_order(raw: np.ndarray) -> np.ndarray:
    """Flatten ``(..., H, H)`` DCT matrices into ``(..., H*H)`` feature order."""
    h = raw.shape[-1]
    return raw.reshape(raw.shape[:-2] + (h * h,))[..., frequency_order(h)]


def dct2_batch(images: np.ndarray) -> np.ndarray:
    """DCT of a stack ``(n, H, H)`` of images."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[1] != images.shape[2]:
        raise ShapeError(f"expected (n, H, H), got {images.shape}")
    c = _dct_matrix(images.shape[1])
    return np.einsum("pi,nij,qj->npq", c, images, c, optimize=True)


@dataclass(frozen=True)
class RescaleStats:
    """Min/max of raw DCT values over the training split.

    ``min``/``max`` are scalars for the ``global`` policy or length-``N``
    arrays (one pair per frequency component) for ``per_feature``.
    """

    min: object
    max: object

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim > 1:
            raise DegenerateStatsError("min and max must be matching scalars or vectors")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(hi <= lo):
            raise DegenerateStatsError(f"degenerate rescale stats min={self.min} max={self.max}")
        if lo.ndim == 0:
            object.__setattr__(self, "min", float(lo))
            object.__setattr__(self, "max", float(hi))
        else:
            lo.setflags(write=False)
            hi.setflags(write=False)
            object.__setattr__(self, "min", lo)
            object.__setattr__(self, "max", hi)

    @property
    def policy(self) -> str:
        return "global" if np.ndim(self.min) == 0 else "per_feature"

    @classmethod
    def fit(cls, raw: np.ndarray, policy: str = "per_feature") -> "RescaleStats":
        """Fit on raw training DCT values of shape ``(n, N)`` in site order."""
        raw = np.asarray(raw, dtype=np.float64)
        if policy == "global":
            lo, hi = float(raw.min()), float(raw.max())
            if hi <= lo:
                raise DegenerateStatsError(f"all raw values equal {lo}; cannot rescale")
            return cls(lo, hi)
        if policy != "per_feature":
            raise ValueError(f"unknown rescale policy {policy!r}")
        flat = raw.reshape(len(raw), -1)
        lo, hi = flat.min(axis=0), flat.max(axis=0)
        # components that never vary carry no information; give them a unit range
        hi = np.where(hi > lo, hi, lo + 1.0)
        return cls(lo, hi)

    def to_dict(self) -> dict:
        if self.policy == "global":
            return {"min": self.min, "max": self.max}
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RescaleStats":
        return cls(d["min"], d["max"])


@dataclass(frozen=True)
class FeatureVector:
    """Features in [0, 1], in site order (see :func:`frequency_order`)."""

    values: np.ndarray
    stats: RescaleStats

    def __len__(self) -> int:
        return len(self.values)


def rescale_to_unit(raw: np.ndarray, stats: RescaleStats) -> np.ndarray:
    """Map raw values to ``(v - min) / (max - min)`` clipped to [0, 1].

    Per-feature stats broadcast over the last (feature) axis of ``raw``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    return np.clip((raw - stats.min) / (stats.max - stats.min), 0.0, 1.0)


def image_features(image, stats: RescaleStats) -> FeatureVector:
    return FeatureVector(rescale_to_unit(to_site_order(dct2(image)), stats), stats)


def dataset_features(images: np.ndarray, stats: Optional[RescaleStats] = None, policy: str = "per_feature"):
    """Features for a stack of images, shape ``(n, H*H)``.

    When ``stats`` is None they are fitted on ``images`` (use only for the
    training split). Returns ``(features, stats)``.
    """
    raw = to_site_order(dct2_batch(images))
    if stats is None:
        stats = RescaleStats.fit(raw, policy)
    return rescale_to_unit(raw, stats), stats


def feature_map(x) -> np.ndarray:
    """Qubit amplitudes ``(cos(x pi/2), sin(x pi/2))``; vectorized over trailing axis."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
        raise DomainError("feature values must lie in [0, 1]")
    return np.stack([np.cos(x * np.pi / 2), np.sin(x * np.pi / 2)], axis=-1)


@dataclass(frozen=True)
class ProductState:
    """Product of single-qubit states, ``qubits`` has shape ``(n, 2)``."""

    qubits: np.ndarray

    def __len__(self) -> int:
        return len(self.qubits)


def check_selection(selection: Sequence[int], n_features: int) -> np.ndarray:
    sel = np.asarray(selection, dtype=np.int64)
    if sel.ndim != 1:
        raise SelectionError("selection must be a flat list of indices")
    if len(sel) and (sel.min() < 0 or sel.max() >= n_features):
        raise SelectionError(f"selection index out of range [0, {n_features})")
    if np.any(np.diff(sel) <= 0):
        raise SelectionError("selection must be strictly increasing without duplicates")
    return sel


def encode_product(features, selection: Optional[Sequence[int]] = None) -> ProductState:
    values = features.values if isinstance(features, FeatureVector) else np.asarray(features)
    if selection is not None:
        values = values[check_selection(selection, len(values))]
    return ProductState(feature_map(values))


def encode_batch(features: np.ndarray, selection: Optional[Sequence[int]] = None) -> np.ndarray:
    """Batched :func:`encode_product`: ``(m, N)`` features to ``(m, n, 2)`` qubits."""
    features = np.asarray(features, dtype=np.float64)
    if selection is not None:
        features = features[:, check_selection(selection, features.shape[1])]
    return feature_map(features)
