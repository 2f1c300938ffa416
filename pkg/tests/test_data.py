import gzip
import struct

import numpy as np
import pytest

from lgelu.harness.config import DatasetConfig
from lgelu.harness.data import (
    IdxFormatError,
    load_dataset,
    load_idx_images,
    parse_idx,
    read_idx,
    rng_stream,
)


def idx_bytes(arr, magic=None):
    arr = np.asarray(arr, dtype=np.uint8)
    if magic is None:
        magic = 0x0800 | arr.ndim
    return struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()


@pytest.fixture
def idx_files(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(10, 4, 4), dtype=np.uint8)
    labels = np.arange(10, dtype=np.uint8) % 3
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx.gz"
    ip.write_bytes(idx_bytes(images))
    with gzip.open(lp, "wb") as fh:
        fh.write(idx_bytes(labels))
    return images, labels, ip, lp


def test_idx_header_constants():
    assert idx_bytes(np.zeros((10, 4, 4)))[:4] == b"\x00\x00\x08\x03"
    assert idx_bytes(np.zeros(10))[:4] == b"\x00\x00\x08\x01"


def test_load_idx(idx_files):
    images, labels, ip, lp = idx_files
    x, y = load_idx_images(ip, lp)
    assert x.shape == (10, 16) and x.dtype == np.float64
    assert np.array_equal(x, images.reshape(10, 16) / 255.0)
    assert y.tolist() == labels.tolist()


def test_truncated_payload():
    buf = idx_bytes(np.zeros((10, 4, 4)))[:-5]
    with pytest.raises(IdxFormatError, match="expected 160 bytes .* found 155"):
        parse_idx(buf, "trunc")


@pytest.mark.parametrize("buf, match", [
    (b"\x00\x00", "too short"),
    (b"\x01\x00\x08\x01" + b"\x00" * 8, "magic"),
    (b"\x00\x00\x0d\x01" + b"\x00" * 8, "magic"),
    (b"\x00\x00\x08\x03\x00\x00", "ends after"),
])
def test_bad_headers(buf, match):
    with pytest.raises(IdxFormatError, match=match):
        parse_idx(buf)


def test_swapped_files_rejected(idx_files):
    _, _, ip, lp = idx_files
    with pytest.raises(IdxFormatError, match="expected magic 0x00000803"):
        load_idx_images(lp, ip)
    with pytest.raises(FileNotFoundError):
        read_idx(ip.parent / "nope.idx")


def test_idx_dataset(idx_files):
    _, _, ip, lp = idx_files
    spec = DatasetConfig(kind="idx", images_path=str(ip), labels_path=str(lp), max_samples=9)
    (xt, yt), (xv, yv) = load_dataset(spec, 0, 1 / 3)
    assert xt.shape == (6, 16) and xv.shape == (3, 16)
    assert xt.min() >= 0 and xt.max() <= 1


def test_streams_are_independent_and_reproducible():
    a = rng_stream(5, "data").random(4)
    assert np.array_equal(a, rng_stream(5, "data").random(4))
    assert not np.array_equal(a, rng_stream(5, "init").random(4))
    assert not np.array_equal(a, rng_stream(6, "data").random(4))


@pytest.mark.parametrize("kind", ["moons", "blobs"])
def test_synthetic_determinism_and_split(kind):
    spec = DatasetConfig(kind=kind, n_samples=600, n_classes=3 if kind == "blobs" else 2)
    (xt, yt), (xv, yv) = load_dataset(spec, 3, 1 / 3)
    (xt2, yt2), (xv2, yv2) = load_dataset(spec, 3, 1 / 3)
    assert xt.tobytes() == xt2.tobytes() and yv.tobytes() == yv2.tobytes()
    assert xt.shape == (400, 2) and xv.shape == (200, 2)
    assert np.allclose(xt.mean(axis=0), 0, atol=1e-12) and np.allclose(xt.std(axis=0), 1)
    assert set(np.unique(yt)) == set(range(spec.n_classes))
    (xo, _), _ = load_dataset(spec, 4, 1 / 3)
    assert not np.array_equal(xt, xo)


def test_empty_split_rejected():
    with pytest.raises(ValueError, match="empty split"):
        load_dataset(DatasetConfig(n_samples=2), 0, 0.1)


def test_blobs_seed_seven_bitwise():
    spec = DatasetConfig(kind="blobs", n_classes=2, n_samples=200)
    a = load_dataset(spec, 7, 0.25)
    b = load_dataset(spec, 7, 0.25)
    for (xa, ya), (xb, yb) in zip(a, b):
        assert xa.tobytes() == xb.tobytes() and ya.tobytes() == yb.tobytes()
    assert a[0][0].shape == (150, 2) and a[1][0].shape == (50, 2)
