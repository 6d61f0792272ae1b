"""MNIST IDX and PGM ingestion, plus filtering down to the 0-vs-1 task."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DataFormatError, ShapeError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIZE = 28

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


@dataclass(frozen=True)
class Image:
    """Square grayscale image with intensities in [0, 1], shape ``(H, H)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise ShapeError(f"image must be square, got shape {px.shape}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("pixel intensities must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Images stacked as an ``(n, H, H)`` array with aligned integer labels."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim == 2 and images.shape[0] == 0:
            images = images.reshape(0, IMAGE_SIZE, IMAGE_SIZE)
        if images.ndim != 3:
            raise ShapeError(f"expected (n, H, H) images, got {images.shape}")
        if len(images) != len(labels):
            raise ShapeError(f"{len(images)} images but {len(labels)} labels")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, idx: int) -> Image:
        return Image(self.images[idx])

    def __iter__(self) -> Iterator[Image]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.split)


def _read_header(data: bytes, n_ints: int, path) -> tuple:
    need = 4 * n_ints
    if len(data) < need:
        raise DataFormatError(f"{path}: truncated header", offset=len(data))
    return struct.unpack(f">{n_ints}I", data[:need])


def load_idx_images(path) -> np.ndarray:
    """Read an IDX3 image file into an ``(n, 28, 28)`` float array of ``b / 255``."""
    data = Path(path).read_bytes()
    magic, count, rows, cols = _read_header(data, 4, path)
    if magic != IMAGE_MAGIC:
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}", offset=0)
    if rows != IMAGE_SIZE or cols != IMAGE_SIZE:
        raise DataFormatError(f"{path}: image dims {rows}x{cols}, expected 28x28", offset=8)
    expected = 16 + count * rows * cols
    if len(data) < expected:
        raise DataFormatError(
            f"{path}: truncated pixel data, {len(data)} of {expected} bytes", offset=len(data)
        )
    raw = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16)
    return raw.reshape(count, rows, cols).astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, count = _read_header(data, 2, path)
    if magic != LABEL_MAGIC:
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}", offset=0)
    if len(data) < 8 + count:
        raise DataFormatError(f"{path}: truncated label data", offset=len(data))
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8).astype(np.int64)


def filter_binary(images, labels, split: str = "train") -> Dataset:
    """Keep only digits 0 and 1, preserving order."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) != len(labels):
        raise ShapeError(f"{len(images)} images but {len(labels)} labels")
    keep = (labels == 0) | (labels == 1)
    imgs = images[keep]
    if imgs.size == 0:
        imgs = np.zeros((0, IMAGE_SIZE, IMAGE_SIZE))
    return Dataset(imgs, labels[keep], split)


def default_data_dir() -> Path:
    return Path(os.environ.get("TNC_DATA_DIR", "data/mnist"))


def load_mnist_binary(data_dir=None, split: str = "train") -> Dataset:
    """Load the 0/1 subset of the standard MNIST ``train`` or ``test`` split."""
    root = Path(data_dir) if data_dir is not None else default_data_dir()
    if split == "train":
        names = (TRAIN_IMAGES, TRAIN_LABELS)
    elif split == "test":
        names = (TEST_IMAGES, TEST_LABELS)
    else:
        raise ValueError(f"unknown split {split!r}")
    images = load_idx_images(root / names[0])
    labels = load_idx_labels(root / names[1])
    if len(images) != len(labels):
        raise DataFormatError(f"{root}: {len(images)} images vs {len(labels)} labels")
    return filter_binary(images, labels, split)


def _pgm_tokens(data: bytes, n: int) -> tuple[list[bytes], int]:
    """Split the first ``n`` whitespace-separated header tokens, skipping comments."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < n:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise DataFormatError("truncated PGM header", offset=pos)
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def resample_nearest(pixels: np.ndarray, size: int = IMAGE_SIZE) -> np.ndarray:
    src = pixels.shape[0]
    if src == size:
        return pixels
    idx = (np.arange(size) * src) // size
    return pixels[np.ix_(idx, idx)]


def load_pgm(path) -> Image:
    """Read a P2 or P5 PGM, resampled to 28x28 by nearest neighbour."""
    data = Path(path).read_bytes()
    tokens, pos = _pgm_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise DataFormatError(f"{path}: unsupported PGM magic {magic!r}", offset=0)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise DataFormatError(f"{path}: malformed PGM header") from exc
    if not 0 < maxval <= 255:
        raise DataFormatError(f"{path}: maxval {maxval} outside 1..255")
    if width != height:
        raise ShapeError(f"{path}: PGM is {width}x{height}, expected square")
    n = width * height
    if magic == b"P5":
        body = data[pos + 1 :]
        if len(body) < n:
            raise DataFormatError(f"{path}: truncated raster", offset=len(data))
        values = np.frombuffer(body, dtype=np.uint8, count=n).astype(np.float64)
    else:
        try:
            values = np.array(data[pos:].split()[:n], dtype=np.float64)
        except ValueError as exc:
            raise DataFormatError(f"{path}: non-numeric P2 raster") from exc
        if len(values) < n:
            raise DataFormatError(f"{path}: truncated raster", offset=len(data))
    if values.max(initial=0) > maxval:
        raise DataFormatError(f"{path}: sample exceeds maxval {maxval}")
    pixels = values.reshape(height, width) / maxval
    return Image(resample_nearest(pixels))


def write_pgm(image: Image, path) -> None:
    """Write ``image`` as plain (P2) PGM, quantized to 8 bits."""
    q = np.rint(image.pixels * 255).astype(int)
    lines = [f"P2\n{image.width} {image.height}\n255"]
    lines += [" ".join(str(v) for v in row) for row in q]
    Path(path).write_text("\n".join(lines) + "\n")
