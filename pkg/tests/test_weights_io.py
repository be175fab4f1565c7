import struct

import numpy as np
import pytest

from services.numerics import QuantTensor, quantize
from services.weights_io import dumps, load_weights, loads, save_weights, to_float
from utils.errors import SchemaError, VersionError


def test_container_keeps_float_and_int8_entries(workdir, rng):
    w = rng.standard_normal((3, 4))
    q = quantize(rng.standard_normal((2, 2, 3, 3)))
    save_weights(workdir / "w.rnbw", {"dense": w, "conv": q})
    loaded = load_weights(workdir / "w.rnbw")

    assert list(loaded) == ["dense", "conv"]
    assert loaded["dense"].dtype == np.float64
    assert np.array_equal(loaded["dense"], w.astype(np.float32).astype(np.float64))
    assert isinstance(loaded["conv"], QuantTensor)
    assert np.array_equal(loaded["conv"].codes, q.codes)
    assert loaded["conv"].scale == pytest.approx(q.scale, rel=1e-7)


def test_to_float_dequantizes(rng):
    q = quantize([1.0, -0.5])
    out = to_float({"a": q, "b": np.array([1, 2])})
    assert out["a"].tolist() == pytest.approx([1.0, -64 / 127])
    assert out["b"].dtype == np.float64


def test_bad_magic_and_version():
    with pytest.raises(SchemaError):
        loads(b"NOPE" + b"\x00" * 6)
    with pytest.raises(VersionError):
        loads(b"RNBW" + struct.pack("<HI", 2, 0))


def test_truncated_container():
    blob = dumps({"w": np.ones((4, 4))})
    with pytest.raises(SchemaError, match="Truncated"):
        loads(blob[:-8])


def test_missing_file_message(workdir):
    with pytest.raises(FileNotFoundError, match="weights not found"):
        load_weights(workdir / "missing.rnbw")
