import os
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tnc import dataset

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def mnist_dir():
    """MNIST IDX directory from TNC_DATA_DIR, else the conventional locations."""
    candidates = [os.environ.get("TNC_DATA_DIR"), "/root/data/mnist", "data/mnist"]
    for c in candidates:
        if c and (Path(c) / dataset.TEST_IMAGES).exists():
            return Path(c)
    return None


@pytest.fixture(scope="session")
def mnist_path():
    path = mnist_dir()
    if path is None:
        pytest.skip("MNIST IDX files not found (set TNC_DATA_DIR)")
    return path


def write_idx(directory: Path, split: str, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images/labels in IDX format under the standard file names."""
    names = {"train": (dataset.TRAIN_IMAGES, dataset.TRAIN_LABELS),
             "test": (dataset.TEST_IMAGES, dataset.TEST_LABELS)}[split]
    px = np.asarray(images, dtype=np.uint8)
    n, h, w = px.shape
    (directory / names[0]).write_bytes(struct.pack(">4I", 0x803, n, h, w) + px.tobytes())
    lb = np.asarray(labels, dtype=np.uint8)
    (directory / names[1]).write_bytes(struct.pack(">2I", 0x801, len(lb)) + lb.tobytes())


def synthetic_digits(n: int, seed: int):
    """Crude 28x28 zeros (rings) and ones (bars) with jitter, plus a few distractor labels."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:28, 0:28]
    images = np.zeros((n, 28, 28))
    labels = rng.integers(0, 3, size=n)
    for k in range(n):
        cy, cx = 14 + rng.normal(0, 1.5, 2)
        if labels[k] == 0:
            r = np.hypot((yy - cy) / 1.3, xx - cx)
            images[k] = np.clip(1.5 - np.abs(r - 6 - rng.normal(0, 0.5)), 0, 1)
        elif labels[k] == 1:
            slant = rng.normal(0, 0.2)
            images[k] = np.clip(2.0 - np.abs(xx - cx - slant * (yy - cy)), 0, 1) * (np.abs(yy - cy) < 9)
        else:
            images[k] = np.clip(2.0 - np.abs(yy - cy), 0, 1) * (np.abs(xx - cx) < 8)
    labels = np.where(labels == 2, 7, labels)
    return np.rint(images * 255).astype(np.uint8), labels


@pytest.fixture(scope="session")
def synthetic_mnist(tmp_path_factory):
    """Small IDX directory with a learnable 0/1 task, usable without the real data."""
    root = tmp_path_factory.mktemp("synthetic_mnist")
    for split, n, seed in (("train", 450, 0), ("test", 150, 1)):
        images, labels = synthetic_digits(n, seed)
        write_idx(root, split, images, labels)
    return root
