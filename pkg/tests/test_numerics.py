import numpy as np
import pytest

from services.numerics import (
    QuantTensor,
    as_tensor,
    dequantize,
    matmul_reference,
    matvec_reference,
    quantize,
    round_half_away,
    uniform_quantize,
)
from utils.errors import DimensionError, InvalidInputError


def test_quantize_uses_max_abs_scale():
    q = quantize([1.0, 0.5])
    assert q.codes.tolist() == [127, 64]
    assert q.scale == pytest.approx(1.0 / 127)


def test_quantize_never_uses_most_negative_code():
    q = quantize([-1.0, 0.25, 1.0])
    assert q.codes.min() == -127


def test_quantize_all_zero_tensor():
    q = quantize(np.zeros((2, 3)))
    assert q.scale == 1.0
    assert not q.codes.any()


def test_dequantize_error_is_within_half_step(rng):
    t = rng.uniform(-3, 3, size=(16, 16))
    q = quantize(t)
    assert np.max(np.abs(dequantize(q) - t)) <= q.scale / 2 + 1e-12


def test_round_half_away_from_zero():
    assert round_half_away(np.array([2.5, -2.5, 0.49, -0.5])).tolist() == [3.0, -3.0, 0.0, -1.0]


def test_quantize_rejects_unsupported_width():
    with pytest.raises(InvalidInputError):
        quantize([1.0], bits=9)


def test_quant_tensor_rejects_out_of_range_codes():
    with pytest.raises(InvalidInputError):
        QuantTensor(codes=np.array([-128], dtype=np.int8), scale=1.0)


def test_as_tensor_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        as_tensor([1.0, float("nan")])


def test_reference_products_check_shapes():
    with pytest.raises(DimensionError):
        matvec_reference(np.ones((2, 3)), np.ones(2))
    with pytest.raises(DimensionError):
        matmul_reference(np.ones((2, 3)), np.ones((2, 3)))
    assert matvec_reference([[1, 2], [3, 4]], [1, 1]).tolist() == [3.0, 7.0]


def test_uniform_quantize_clips_to_full_scale():
    out = uniform_quantize(np.array([-1.0, 2.0, 9.0]), 4.0, bits=2)
    assert out.tolist() == pytest.approx([0.0, 8.0 / 3.0, 4.0])
    assert uniform_quantize(np.array([1.0]), 0.0).tolist() == [0.0]


def test_matvec_reference_is_linear(rng):
    for _ in range(100):
        w = rng.uniform(-1, 1, size=(8, 8))
        x, y = rng.uniform(-1, 1, size=(2, 8))
        a, b = rng.uniform(-3, 3, size=2)
        combined = matvec_reference(w, a * x + b * y)
        assert np.max(np.abs(combined - (a * matvec_reference(w, x) + b * matvec_reference(w, y)))) <= 1e-12
