import struct

import numpy as np
import pytest

from models.schemas import DatasetSpec
from services.datasets import Dataset, dataset_from_spec, load_idx, make_blobs
from utils.errors import DimensionError, SchemaError


def _write_idx(path, array, type_code=0x08):
    header = struct.pack(">BBBB", 0, 0, type_code, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    path.write_bytes(header + array.tobytes())
    return path


def test_blobs_are_balanced_and_seeded():
    data = make_blobs(64, n_features=3, seed=2)
    assert data.inputs.shape == (64, 3)
    assert np.bincount(data.labels).tolist() == [32, 32]
    assert np.array_equal(data.inputs, make_blobs(64, n_features=3, seed=2).inputs)
    assert data.n_classes == 2


def test_blob_classes_sit_on_opposite_sides():
    data = make_blobs(512, n_features=4, separation=2.0, std=0.1, seed=0)
    means = [data.inputs[data.labels == c].mean() for c in (0, 1)]
    assert means[0] == pytest.approx(-2.0, abs=0.05)
    assert means[1] == pytest.approx(2.0, abs=0.05)


def test_train_test_split_partitions_samples():
    train, test = make_blobs(40).train_test_split(0.25, seed=1)
    assert (len(train), len(test)) == (30, 10)
    assert (train.split, test.split) == ("train", "test")


def test_dataset_rejects_mismatched_lengths():
    with pytest.raises(DimensionError):
        Dataset(inputs=np.zeros((3, 2)), labels=np.zeros(2, dtype=np.int64))


def test_idx_pair_is_flattened_and_scaled(workdir):
    images = _write_idx(workdir / "img.idx", np.arange(2 * 2 * 3, dtype=np.uint8).reshape(2, 2, 3) * 10)
    labels = _write_idx(workdir / "lbl.idx", np.array([1, 0], dtype=np.uint8))
    data = load_idx(images, labels)
    assert data.inputs.shape == (2, 6)
    assert data.inputs[0, 1] == pytest.approx(10 / 255)
    assert data.labels.tolist() == [1, 0]

    spec = DatasetSpec(kind="idx", images="img.idx", labels="lbl.idx", limit=1)
    assert len(dataset_from_spec(spec, base_dir=workdir)) == 1


def test_idx_errors(workdir):
    with pytest.raises(FileNotFoundError):
        load_idx(workdir / "none.idx", workdir / "none.idx")
    bad = workdir / "bad.idx"
    bad.write_bytes(b"\x01\x02\x08\x01")
    with pytest.raises(SchemaError):
        load_idx(bad, bad)
    short = _write_idx(workdir / "short.idx", np.zeros(4, dtype=np.uint8))
    short.write_bytes(short.read_bytes()[:-2])
    with pytest.raises(SchemaError, match="truncated"):
        load_idx(short, short)


def test_idx_truncated_header_is_a_schema_error(workdir):
    header_only = workdir / "header.idx"
    header_only.write_bytes(b"\x00\x00\x08\x03\x00\x00\x00\x02")
    with pytest.raises(SchemaError, match="truncated IDX header"):
        load_idx(header_only, header_only)


def test_idx_spec_needs_both_files():
    with pytest.raises(ValueError):
        DatasetSpec(kind="idx", images="img.idx")
