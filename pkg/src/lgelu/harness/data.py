"""Desk-scale datasets, the IDX file reader, and seeded random streams."""

from __future__ import annotations

import gzip
import struct
from typing import Tuple

import numpy as np

from .config import DatasetConfig, DatasetKind

# Every run seed is expanded into independent PCG64 streams, one per purpose,
# via SeedSequence(seed, spawn_key=(id,)). New purposes get new ids, so adding
# one never shifts the numbers drawn by another.
STREAM_IDS = {"data": 0, "init": 1, "shuffle": 2}

IDX_LABELS_MAGIC = 0x00000801
IDX_IMAGES_MAGIC = 0x00000803
_IDX_UBYTE = 0x08


class IdxFormatError(ValueError):
    pass


def rng_stream(seed: int, purpose: str) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAM_IDS[purpose],))
    return np.random.Generator(np.random.PCG64(ss))


def parse_idx(buf: bytes, name: str = "<bytes>") -> np.ndarray:
    """Decode an unsigned-byte IDX payload into an array of its declared shape."""
    if len(buf) < 4:
        raise IdxFormatError(f"{name}: file too short for an IDX header ({len(buf)} bytes)")
    zero, dtype, ndim = struct.unpack(">HBB", buf[:4])
    if zero != 0 or dtype != _IDX_UBYTE or ndim == 0:
        magic = struct.unpack(">I", buf[:4])[0]
        raise IdxFormatError(f"{name}: bad IDX magic number 0x{magic:08x}")
    header_len = 4 + 4 * ndim
    if len(buf) < header_len:
        raise IdxFormatError(f"{name}: header declares {ndim} dimensions but the file "
                             f"ends after {len(buf)} bytes")
    dims = struct.unpack(f">{ndim}I", buf[4:header_len])
    expected = int(np.prod(dims, dtype=np.int64))
    actual = len(buf) - header_len
    if actual != expected:
        raise IdxFormatError(f"{name}: payload size mismatch, expected {expected} bytes "
                             f"for dims {dims} but found {actual}")
    return np.frombuffer(buf, dtype=np.uint8, offset=header_len).reshape(dims)


def read_idx(path, expect_magic=None) -> np.ndarray:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        buf = fh.read()
    if expect_magic is not None and len(buf) >= 4:
        magic = struct.unpack(">I", buf[:4])[0]
        if magic != expect_magic:
            raise IdxFormatError(f"{path}: expected magic 0x{expect_magic:08x}, found 0x{magic:08x}")
    return parse_idx(buf, str(path))


def load_idx_images(images_path, labels_path):
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if labels.ndim != 1:
        raise IdxFormatError(f"{labels_path}: labels must be 1-dimensional")
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images_path} has {images.shape[0]} images but "
                             f"{labels_path} has {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return x, labels.astype(np.int64)


def make_moons(n_samples: int, noise: float, rng: np.random.Generator):
    n_out = n_samples // 2
    n_in = n_samples - n_out
    theta_out = rng.uniform(0.0, np.pi, n_out)
    theta_in = rng.uniform(0.0, np.pi, n_in)
    outer = np.column_stack([np.cos(theta_out), np.sin(theta_out)])
    inner = np.column_stack([1.0 - np.cos(theta_in), 0.5 - np.sin(theta_in)])
    x = np.vstack([outer, inner]) + rng.normal(0.0, noise, size=(n_samples, 2))
    y = np.concatenate([np.zeros(n_out, dtype=np.int64), np.ones(n_in, dtype=np.int64)])
    return x, y


def make_blobs(n_samples: int, n_classes: int, n_features: int, cluster_std: float,
               rng: np.random.Generator):
    centers = rng.uniform(-10.0, 10.0, size=(n_classes, n_features))
    y = np.arange(n_samples, dtype=np.int64) % n_classes
    x = centers[y] + rng.normal(0.0, cluster_std, size=(n_samples, n_features))
    return x, y


Split = Tuple[np.ndarray, np.ndarray]


def load_dataset(spec: DatasetConfig, seed: int, val_fraction: float) -> Tuple[Split, Split]:
    """Return ``((x_train, y_train), (x_val, y_val))`` for one run seed.

    Synthetic features are standardized with training-split statistics;
    image pixels are scaled to [0, 1].
    """
    rng = rng_stream(seed, "data")
    if spec.kind is DatasetKind.MOONS:
        x, y = make_moons(spec.n_samples, spec.noise, rng)
    elif spec.kind is DatasetKind.BLOBS:
        x, y = make_blobs(spec.n_samples, spec.n_classes, spec.n_features, spec.cluster_std, rng)
    else:
        x, y = load_idx_images(spec.images_path, spec.labels_path)
        if spec.max_samples:
            x, y = x[:spec.max_samples], y[:spec.max_samples]
    n = x.shape[0]
    if n == 0:
        raise ValueError("dataset is empty")
    n_val = int(round(val_fraction * n))
    if not 0 < n_val < n:
        raise ValueError(f"val_fraction {val_fraction} leaves an empty split for {n} samples")
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    x_train, y_train = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]
    if spec.kind is not DatasetKind.IDX:
        mean = x_train.mean(axis=0)
        std = x_train.std(axis=0)
        std[std == 0.0] = 1.0
        x_train = (x_train - mean) / std
        x_val = (x_val - mean) / std
    return (x_train, y_train), (x_val, y_val)
