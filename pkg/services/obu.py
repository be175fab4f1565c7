"""Blend-unit transforms applied between uses of a shared weight block.

Shuffles act on activations in the electrical domain after readout; the
transpose of a dense weight is served optically by feeding the programmed
tile from its vertical port, so it never costs a write.

Every activation transform is a bijection on elements and can be expressed
as a flat gather index (``gather_index``), which is what the numpy engines
and the torch training graph both use.
"""
from dataclasses import dataclass
from typing import Iterable, Tuple

import logging
import numpy as np

from models.transforms import (
    ChannelShuffleTransform,
    FlattenedShuffleTransform,
    TransposeTransform,
)
from services.numerics import Tensor, as_tensor
from utils.errors import BlockError, GroupError, MappingError

logger = logging.getLogger(__name__)


def _as_chw(x: np.ndarray) -> np.ndarray:
    if x.ndim == 1:
        return x.reshape(x.shape[0], 1, 1)
    if x.ndim == 2:
        return x.reshape(1, *x.shape)
    if x.ndim == 3:
        return x
    raise MappingError(f"Expected a tensor of rank 1..3, got rank {x.ndim}")


def channel_shuffle(x: Tensor, g: int) -> Tensor:
    """Group-transpose channel shuffle.

    Output channel ``i*(c/g)+j`` holds input channel ``j*g+i``; the inverse is
    ``channel_shuffle(., c // g)``. Rank-1 input is treated as c x 1 x 1.
    """
    x = np.asarray(x)
    chw = _as_chw(x)
    c, h, w = chw.shape
    if g < 1 or c % g != 0:
        raise GroupError(f"Group count {g} does not divide {c} channels")
    shuffled = chw.reshape(c // g, g, h, w).transpose(1, 0, 2, 3).reshape(c, h, w)
    return shuffled.reshape(x.shape)


def block_permutation(n_blocks: int, seed: int) -> np.ndarray:
    """Fisher-Yates permutation driven by raw Philox4x64 output.

    Draws are reduced modulo (i + 1); using the raw bit stream keeps the
    permutation identical across numpy versions and platforms.
    """
    perm = np.arange(n_blocks)
    if n_blocks < 2:
        return perm
    bitgen = np.random.Philox(seed)
    draws = bitgen.random_raw(n_blocks - 1)
    for step, i in enumerate(range(n_blocks - 1, 0, -1)):
        j = int(draws[step] % np.uint64(i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def flattened_shuffle(x: Tensor, block_size: int, seed: int) -> Tensor:
    """Permute contiguous blocks of the flattened tensor; shape is kept."""
    x = np.asarray(x)
    flat = x.reshape(-1)
    if block_size < 1 or flat.size % block_size != 0:
        raise BlockError(f"Block size {block_size} does not divide {flat.size} elements")
    perm = block_permutation(flat.size // block_size, seed)
    return flat.reshape(-1, block_size)[perm].reshape(x.shape)


def inverse_flattened_shuffle(x: Tensor, block_size: int, seed: int) -> Tensor:
    x = np.asarray(x)
    flat = x.reshape(-1)
    if block_size < 1 or flat.size % block_size != 0:
        raise BlockError(f"Block size {block_size} does not divide {flat.size} elements")
    perm = block_permutation(flat.size // block_size, seed)
    restored = np.empty_like(flat.reshape(-1, block_size))
    restored[perm] = flat.reshape(-1, block_size)
    return restored.reshape(x.shape)


def transpose_hw(x: Tensor) -> Tensor:
    """(k, i, j) -> (k, j, i). Rank-2 input is treated as c = 1 and stays rank 2."""
    x = np.asarray(x)
    if x.ndim == 2:
        return x.T.copy()
    if x.ndim != 3:
        raise MappingError(f"transpose_hw expects rank 2 or 3, got rank {x.ndim}")
    return x.transpose(0, 2, 1).copy()


@dataclass(frozen=True)
class WeightView:
    """Effective weight of a use: the programmed matrix read horizontally or vertically."""
    matrix: Tensor
    vertical: bool = False

    @property
    def effective(self) -> Tensor:
        return self.matrix.T if self.vertical else self.matrix

    @property
    def in_features(self) -> int:
        return self.effective.shape[1]

    @property
    def out_features(self) -> int:
        return self.effective.shape[0]

    @property
    def write_events(self) -> int:
        return 0

    def apply(self, x: Tensor) -> Tensor:
        return self.effective @ as_tensor(x, "x")


def weight_view(w: Tensor, t) -> WeightView:
    """Select horizontal (identity) or vertical (transpose) input for a programmed matrix."""
    w = as_tensor(w, "W")
    if w.ndim != 2:
        raise MappingError(f"Weight view needs a rank-2 matrix, got rank {w.ndim}")
    kind = getattr(t, "kind", "identity")
    if kind == "identity":
        return WeightView(matrix=w, vertical=False)
    if kind == "transpose":
        return WeightView(matrix=w, vertical=True)
    raise MappingError(f"Transform '{kind}' acts on activations, not on weights")


def apply_transform(x: Tensor, t) -> Tensor:
    """Apply one activation transform to a single (unbatched) tensor."""
    if t.kind == "identity":
        return np.asarray(x)
    if t.kind == "channel_shuffle":
        return channel_shuffle(x, t.g)
    if t.kind == "flattened_shuffle":
        return flattened_shuffle(x, t.block_size, t.seed)
    if t.kind == "transpose":
        return transpose_hw(x)
    raise MappingError(f"Unknown transform kind '{t.kind}'")


def apply_chain(x: Tensor, chain: Iterable) -> Tensor:
    for t in chain:
        x = apply_transform(x, t)
    return x


def gather_index(shape: Tuple[int, ...], chain: Iterable) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Flat gather index and output shape so that ``out.flat == x.flat[idx]``."""
    probe = np.arange(int(np.prod(shape))).reshape(shape)
    out = apply_chain(probe, chain)
    return out.reshape(-1).astype(np.int64), tuple(out.shape)


def apply_batched(x: np.ndarray, chain: Iterable) -> np.ndarray:
    """Apply a chain to every sample of a batch (leading axis)."""
    chain = tuple(chain)
    if not chain:
        return x
    idx, out_shape = gather_index(x.shape[1:], chain)
    return x.reshape(x.shape[0], -1)[:, idx].reshape(x.shape[0], *out_shape)


def validate_chain(shape: Tuple[int, ...], chain: Iterable) -> None:
    """Raise GroupError/BlockError/MappingError if the chain cannot act on ``shape``."""
    for t in chain:
        numel = int(np.prod(shape))
        if isinstance(t, ChannelShuffleTransform):
            c = shape[0] if len(shape) in (1, 3) else 1
            if c % t.g != 0:
                raise GroupError(f"Group count {t.g} does not divide {c} channels")
        elif isinstance(t, FlattenedShuffleTransform):
            if numel % t.block_size != 0:
                raise BlockError(f"Block size {t.block_size} does not divide {numel} elements")
        elif isinstance(t, TransposeTransform):
            shape = tuple(shape[:-2]) + (shape[-1], shape[-2]) if len(shape) >= 2 else shape
