"""CIFAR-10 binary ingestion, normalization, batching and synthetic datasets."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from edgecompress.config import defaults
from edgecompress.errors import DataError, InputError

RECORD_BYTES = 1 + 3 * 32 * 32
RECORDS_PER_FILE = 10_000
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
CLASSES = ("airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck")


@dataclass
class Dataset:
    images: np.ndarray  # uint8 [n, 3, 32, 32]
    labels: np.ndarray  # uint8 [n]
    split: str = "train"
    num_classes: int = 10

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            raise DataError(f"labels must be < {self.num_classes}")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n], self.split, self.num_classes)


# -------------------------------------------------------------------- binary io
def read_batch_file(path: str | Path, expected_records: int | None = RECORDS_PER_FILE) -> tuple[np.ndarray, np.ndarray]:
    """Parse one CIFAR-10 binary batch: per record one label byte, then the R, G and B planes."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing CIFAR-10 batch file: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % RECORD_BYTES:
        raise DataError(f"{path}: size {raw.size} is not a multiple of the {RECORD_BYTES}-byte record")
    records = raw.reshape(-1, RECORD_BYTES)
    if expected_records is not None and records.shape[0] != expected_records:
        raise DataError(f"{path}: expected {expected_records} records, found {records.shape[0]}")
    labels = records[:, 0].copy()
    if labels.size and labels.max() >= 10:
        raise DataError(f"{path}: label byte {labels.max()} out of range")
    images = records[:, 1:].reshape(-1, 3, 32, 32).copy()
    return images, labels


def write_batch_file(path: str | Path, images: np.ndarray, labels: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8).reshape(-1, 3 * 32 * 32)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    Path(path).write_bytes(np.concatenate([labels, images], axis=1).tobytes())


def _resolve_dir(directory: Path) -> Path:
    nested = directory / "cifar-10-batches-bin"
    return nested if not (directory / TEST_FILE).exists() and nested.is_dir() else directory


def load_cifar10(directory: str | Path, expected_records: int | None = RECORDS_PER_FILE) -> tuple[Dataset, Dataset]:
    directory = _resolve_dir(Path(directory))
    parts = [read_batch_file(directory / name, expected_records) for name in TRAIN_FILES]
    train = Dataset(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]), "train")
    test_images, test_labels = read_batch_file(directory / TEST_FILE, expected_records)
    return train, Dataset(test_images, test_labels, "test")


# ---------------------------------------------------------------- normalization
def _stats(mean=None, std=None) -> tuple[np.ndarray, np.ndarray]:
    cfg = defaults()["normalization"]
    mean = np.asarray(cfg["mean"] if mean is None else mean, dtype=np.float32)
    std = np.asarray(cfg["std"] if std is None else std, dtype=np.float32)
    return mean.reshape(1, -1, 1, 1), std.reshape(1, -1, 1, 1)


def normalize(images: np.ndarray, mean=None, std=None) -> np.ndarray:
    """uint8 NCHW -> float32, x / 255 standardized per channel."""
    m, s = _stats(mean, std)
    return ((np.asarray(images, dtype=np.float32) / np.float32(255.0)) - m) / s


def denormalize(x: np.ndarray, mean=None, std=None) -> np.ndarray:
    m, s = _stats(mean, std)
    return (np.asarray(x, dtype=np.float32) * s + m) * np.float32(255.0)


# --------------------------------------------------------------------- batching
def _augment(images: np.ndarray, rng: np.random.Generator, pad: int) -> np.ndarray:
    n, c, h, w = images.shape
    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.empty_like(images)
    offsets = rng.integers(0, 2 * pad + 1, size=(n, 2))
    flips = rng.random(n) < defaults()["augmentation"]["flip_probability"]
    for i in range(n):
        dy, dx = offsets[i]
        crop = padded[i, :, dy : dy + h, dx : dx + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out


def batches(
    ds: Dataset, batch_size: int, shuffle_seed: int | None = 0, augment: bool = False
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield normalized (images, labels) batches; the last partial batch is kept.

    ``shuffle_seed=None`` iterates in stored order.
    """
    if batch_size < 1:
        raise InputError("batch_size must be positive")
    n = len(ds)
    rng = np.random.default_rng(shuffle_seed)
    order = np.arange(n) if shuffle_seed is None else rng.permutation(n)
    pad = defaults()["augmentation"]["pad"]
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        imgs = ds.images[idx]
        if augment:
            imgs = _augment(imgs, rng, pad)
        yield normalize(imgs), ds.labels[idx].astype(np.int64)


# -------------------------------------------------------------------- synthetic
_PROTOTYPE_SEED = 0xC1FA


def _prototypes(num_classes: int):
    # fixed across calls so that every seed samples the same class definitions
    rng = np.random.default_rng([_PROTOTYPE_SEED, num_classes])
    colors = rng.uniform(40, 215, size=(num_classes, 3))
    centers = rng.uniform(8, 24, size=(num_classes, 2))
    return colors, centers


def synthetic(n: int, num_classes: int = 10, seed: int = 0, split: str = "train", noise: float = 24.0) -> Dataset:
    """Class-conditional colored blobs on a noisy background, balanced over classes."""
    rng = np.random.default_rng(seed)
    colors, centers = _prototypes(num_classes)
    labels = rng.permutation(np.arange(n) % num_classes).astype(np.uint8)
    yy, xx = np.mgrid[0:32, 0:32].astype(np.float64)
    jitter = rng.normal(0.0, 2.0, size=(n, 2))
    radius = rng.uniform(5.0, 8.0, size=n)
    cy = centers[labels, 0] + jitter[:, 0]
    cx = centers[labels, 1] + jitter[:, 1]
    dist2 = (yy[None] - cy[:, None, None]) ** 2 + (xx[None] - cx[:, None, None]) ** 2
    blob = np.exp(-dist2 / (2.0 * radius[:, None, None] ** 2))
    background = rng.uniform(60, 190, size=(n, 3, 1, 1))
    img = background * (1 - blob[:, None]) + colors[labels][:, :, None, None] * blob[:, None]
    img += rng.normal(0.0, noise, size=img.shape)
    return Dataset(np.clip(np.rint(img), 0, 255).astype(np.uint8), labels, split, num_classes)
