"""End-to-end classical pipeline: features, full training, selection, retraining."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence

import numpy as np

from . import training
from .dataset import Dataset
from .features import RescaleStats, dataset_features, encode_batch
from .mps import MpsModel
from .training import SelectionResult, TrainConfig

log = logging.getLogger(__name__)


@dataclass
class PreparedData:
    """Feature matrices for both splits; ``train_idx`` is the training subset."""

    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    stats: RescaleStats
    train_idx: np.ndarray

    @property
    def subset_features(self) -> np.ndarray:
        return self.train_features[self.train_idx]

    @property
    def subset_labels(self) -> np.ndarray:
        return self.train_labels[self.train_idx]


def prepare(train: Dataset, test: Optional[Dataset], config: TrainConfig, policy: str = "per_feature") -> PreparedData:
    """DCT features with rescale stats fitted on the full training split."""
    ftr, stats = dataset_features(train.images, policy=policy)
    if test is not None:
        fte, _ = dataset_features(test.images, stats)
        yte = np.asarray(test.labels)
    else:
        fte, yte = np.zeros((0, ftr.shape[1])), np.zeros(0, dtype=np.int64)
    idx = training.subsample(len(train), config.n_samples, config.seed)
    return PreparedData(ftr, np.asarray(train.labels), fte, yte, stats, idx)


@dataclass
class PipelineResult:
    full_model: MpsModel
    selection: SelectionResult
    reduced: Dict[int, MpsModel] = field(default_factory=dict)


def train_full(data: PreparedData, config: TrainConfig) -> MpsModel:
    """Step (i): train on all features of the training subset."""
    qubits = encode_batch(data.subset_features)
    model = training.train(qubits, data.subset_labels, config)
    return replace(model, rescale=data.stats, selected=list(range(model.n_sites)))


def reduce(data: PreparedData, full: MpsModel, n_keep: int, config: TrainConfig):
    """Steps (ii)-(iii): keep the most entangled features and retrain on them."""
    sel = training.select_features(full, n_keep)
    model = training.reduce_and_retrain(
        data.subset_features, data.subset_labels, sel.chosen, config, rescale=data.stats
    )
    return sel, model


def run(data: PreparedData, n_keep: Sequence[int], config: TrainConfig) -> PipelineResult:
    full = train_full(data, config)
    result = PipelineResult(full, training.select_features(full, max(n_keep)))
    for k in n_keep:
        _, result.reduced[k] = reduce(data, full, k, config)
        log.info("ntilde=%d features=%s", k, result.reduced[k].selected)
    return result


def test_qubits(data: PreparedData, model: MpsModel) -> np.ndarray:
    return encode_batch(data.test_features, model.selected)


def train_qubits(data: PreparedData, model: MpsModel) -> np.ndarray:
    return encode_batch(data.subset_features, model.selected)
