"""Dense tensors, symmetric int8 quantization and float oracles.

Tensors are plain float64 numpy arrays; every other service relies on the
validation helpers here so non-finite data is rejected at the boundary.
"""
from dataclasses import dataclass
from typing import Sequence, Union

import logging
import numpy as np
import numpy.typing as npt

from utils.errors import DimensionError, InvalidInputError

logger = logging.getLogger(__name__)

Tensor = npt.NDArray[np.float64]
ArrayLike = Union[Tensor, Sequence, float]

DEFAULT_BITS = 8


def as_tensor(values: ArrayLike, name: str = "tensor") -> Tensor:
    """Convert to a float64 array and reject NaN/Inf."""
    t = np.asarray(values, dtype=np.float64)
    if t.size == 0:
        raise InvalidInputError(f"{name} must not be empty")
    if not np.all(np.isfinite(t)):
        logger.error(f"Non-finite values in {name}")
        raise InvalidInputError(f"{name} contains non-finite values")
    return t


def round_half_away(values: Tensor) -> Tensor:
    """Round to nearest integer, ties away from zero (platform independent)."""
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


@dataclass(frozen=True)
class QuantTensor:
    """Symmetric per-tensor quantized tensor: value = code * scale."""

    codes: npt.NDArray[np.int8]
    scale: float
    bits: int = DEFAULT_BITS

    def __post_init__(self):
        if self.scale <= 0:
            raise InvalidInputError("Quantization scale must be positive")
        qmax = 2 ** (self.bits - 1) - 1
        if self.codes.size and int(np.max(np.abs(self.codes.astype(np.int16)))) > qmax:
            raise InvalidInputError(f"Codes exceed the symmetric range [-{qmax}, {qmax}]")

    @property
    def shape(self) -> tuple:
        return self.codes.shape


def quantize(t: ArrayLike, bits: int = DEFAULT_BITS) -> QuantTensor:
    """Symmetric per-tensor quantization with scale = max|t| / qmax.

    An all-zero tensor gets scale 1. The most negative code is never used.
    """
    if not 2 <= bits <= 8:
        raise InvalidInputError(f"Unsupported bit width {bits}; expected 2..8")
    t = as_tensor(t)
    qmax = 2 ** (bits - 1) - 1
    max_abs = float(np.max(np.abs(t)))
    if max_abs == 0.0:
        return QuantTensor(codes=np.zeros(t.shape, dtype=np.int8), scale=1.0, bits=bits)

    # normalise first so exact halves (0.5 of max -> 63.5) stay exact
    codes = np.clip(round_half_away(t / max_abs * qmax), -qmax, qmax)
    return QuantTensor(codes=codes.astype(np.int8), scale=max_abs / qmax, bits=bits)


def dequantize(q: QuantTensor) -> Tensor:
    return q.codes.astype(np.float64) * q.scale


def matvec_reference(w: ArrayLike, x: ArrayLike) -> Tensor:
    """Float oracle for W @ x, accumulated in double precision."""
    w = as_tensor(w, "W")
    x = as_tensor(x, "x")
    if w.ndim != 2 or x.ndim != 1:
        raise DimensionError(f"Expected rank-2 W and rank-1 x, got ranks {w.ndim} and {x.ndim}")
    if w.shape[1] != x.shape[0]:
        raise DimensionError(f"W has {w.shape[1]} columns but x has length {x.shape[0]}")
    return w @ x


def matmul_reference(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Float oracle for A @ B."""
    a = as_tensor(a, "A")
    b = as_tensor(b, "B")
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"Expected rank-2 operands, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"Inner dimensions differ: {a.shape[1]} vs {b.shape[0]}")
    return a @ b


def uniform_quantize(values: Tensor, full_scale: float, bits: int = DEFAULT_BITS) -> Tensor:
    """Unsigned uniform quantizer on [0, full_scale] (DAC/ADC model)."""
    levels = 2 ** bits - 1
    if full_scale <= 0:
        return np.zeros_like(values)
    clipped = np.clip(values, 0.0, full_scale)
    return np.floor(clipped / full_scale * levels + 0.5) * (full_scale / levels)
