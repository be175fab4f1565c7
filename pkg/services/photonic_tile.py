"""Functional and write-cost model of one MRR crossbar tile.

Signed weights are carried on the all-positive optical medium with a
uniform offset: W'_b = 0.5 * W_b + 0.5, and W_b x = 2 (W'_b x - W_o x).
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple

import logging
import numpy as np
from scipy.optimize import brentq

from models.params import ComponentParams, TileConfig
from services.numerics import Tensor, as_tensor, uniform_quantize
from utils.errors import (
    DimensionError,
    EncodingError,
    MappingError,
    NormalizationError,
    UnreachableTargetError,
)

logger = logging.getLogger(__name__)

OFFSET_VALUE = 0.5
SOLVER_TOL = 1e-12

# one row per element write; kept columnar so large sessions stay cheap
WRITE_EVENT_DTYPE = np.dtype([
    ("tile_id", np.int64),
    ("matrix_index", np.int32),
    ("tile_row", np.int32),
    ("tile_col", np.int32),
    ("row", np.int32),
    ("col", np.int32),
    ("target", np.float64),
    ("iterations", np.int32),
    ("energy_nj", np.float64),
    ("time_ns", np.float64),
    ("offset", np.bool_),
])


@dataclass(frozen=True)
class WriteEvent:
    tile_id: int
    row: int
    col: int
    target: float
    iterations: int
    energy_nj: float
    time_ns: float
    matrix_index: int = 0
    tile_row: int = 0
    tile_col: int = 0
    offset: bool = False

    @classmethod
    def from_record(cls, record) -> "WriteEvent":
        return cls(
            tile_id=int(record["tile_id"]),
            row=int(record["row"]),
            col=int(record["col"]),
            target=float(record["target"]),
            iterations=int(record["iterations"]),
            energy_nj=float(record["energy_nj"]),
            time_ns=float(record["time_ns"]),
            matrix_index=int(record["matrix_index"]),
            tile_row=int(record["tile_row"]),
            tile_col=int(record["tile_col"]),
            offset=bool(record["offset"]),
        )


@dataclass(frozen=True)
class OffsetDecomposition:
    w_b: Tensor
    w_prime: Tensor
    w_offset_value: float = OFFSET_VALUE

    def reconstruct(self, x: Tensor) -> Tensor:
        """2 (W'_b x - W_o x) in the float path."""
        x = np.asarray(x, dtype=np.float64)
        offset = self.w_offset_value * np.sum(x, axis=0)
        return 2.0 * (self.w_prime @ x - offset)


def decompose_offset(w_b: Tensor) -> OffsetDecomposition:
    w_b = as_tensor(w_b, "W_b")
    if w_b.ndim != 2:
        raise DimensionError(f"W_b must be rank 2, got rank {w_b.ndim}")
    if np.max(np.abs(w_b)) > 1.0:
        logger.error("Weight block is not normalised into [-1, 1]")
        raise NormalizationError(f"W_b entries must lie in [-1, 1]; max |w| = {float(np.max(np.abs(w_b)))}")
    return OffsetDecomposition(w_b=w_b, w_prime=0.5 * w_b + OFFSET_VALUE)


def offset_row_cost(n: int) -> int:
    """Extra MRRs (and first-session writes) for the uniform offset row of an n-column matrix."""
    if n < 1:
        raise DimensionError("Offset row needs at least one column")
    return n


def _identity(v: float) -> float:
    return v


@dataclass(frozen=True)
class CalibrationCurve:
    """Monotone device curves: f maps phase to transmission, phi maps squared voltage to phase.

    Missing inverses are solved numerically on the declared domains.
    """
    f: Callable[[float], float] = _identity
    phi: Callable[[float], float] = _identity
    f_inv: Optional[Callable[[float], float]] = None
    phi_inv: Optional[Callable[[float], float]] = None
    theta_domain: Tuple[float, float] = (0.0, 1.0)
    u_domain: Tuple[float, float] = (0.0, 1.0)
    c_loop: int = 10

    def __post_init__(self):
        if self.c_loop < 1:
            raise ValueError("Calibration loop length must be at least 1")

    def with_loop(self, c_loop: int) -> "CalibrationCurve":
        return replace(self, c_loop=c_loop)


def _invert(fn: Callable[[float], float], y: float, domain: Tuple[float, float], what: str) -> float:
    lo, hi = domain
    f_lo, f_hi = fn(lo), fn(hi)
    low, high = min(f_lo, f_hi), max(f_lo, f_hi)
    if y < low - SOLVER_TOL or y > high + SOLVER_TOL:
        raise UnreachableTargetError(f"Target {y} is outside the range [{low}, {high}] of {what}")
    if abs(f_lo - y) <= SOLVER_TOL:
        return lo
    if abs(f_hi - y) <= SOLVER_TOL:
        return hi
    return brentq(lambda v: fn(v) - y, lo, hi, xtol=SOLVER_TOL, rtol=4 * np.finfo(float).eps)


def voltage_for_target(curve: CalibrationCurve, x: float) -> float:
    """v_x = sqrt(phi^-1(f^-1(x)))."""
    if not 0.0 <= x <= 1.0:
        raise UnreachableTargetError(f"Target transmission {x} is outside [0, 1]")
    theta = curve.f_inv(x) if curve.f_inv else _invert(curve.f, x, curve.theta_domain, "f")
    u = curve.phi_inv(theta) if curve.phi_inv else _invert(curve.phi, theta, curve.u_domain, "phi")
    return float(np.sqrt(max(u, 0.0)))


@dataclass(frozen=True)
class MrrTileState:
    config: TileConfig
    programmed: Tensor
    write_count: np.ndarray
    initialized: np.ndarray
    tile_id: int = 0
    matrix_index: int = 0
    tile_row: int = 0
    tile_col: int = 0
    program_latency_ns: float = field(default=0.0)
    is_offset: bool = False

    @classmethod
    def fresh(cls, config: TileConfig, tile_id: int = 0, matrix_index: int = 0,
              tile_row: int = 0, tile_col: int = 0, shape: Optional[Tuple[int, int]] = None,
              is_offset: bool = False) -> "MrrTileState":
        """Unprogrammed tile; ``shape`` overrides the config geometry (offset rows)."""
        shape = shape or (config.rows, config.cols)
        return cls(
            config=config,
            programmed=np.zeros(shape),
            write_count=np.zeros(shape, dtype=np.int64),
            initialized=np.zeros(shape, dtype=bool),
            tile_id=tile_id,
            matrix_index=matrix_index,
            tile_row=tile_row,
            tile_col=tile_col,
            is_offset=is_offset,
        )

    @property
    def total_writes(self) -> int:
        return int(self.write_count.sum())


def program_tile(state: MrrTileState, target: Tensor, curve: CalibrationCurve,
                 params: ComponentParams) -> Tuple[MrrTileState, np.ndarray]:
    """Run the C-iteration write loop on every cell that is off target.

    Returns the new state and one WRITE_EVENT_DTYPE record per rewritten cell,
    in row-major order. Writes within a row are serial, rows run in parallel.
    """
    target = as_tensor(target, "target")
    if target.shape != state.programmed.shape:
        logger.error(f"Target shape {target.shape} does not match tile {state.programmed.shape}")
        raise MappingError(f"Target shape {target.shape} does not match tile {state.programmed.shape}")
    if np.min(target) < 0.0 or np.max(target) > 1.0:
        raise MappingError("Tile targets must be transmissions in [0, 1]")

    stale = ~state.initialized | (np.abs(target - state.programmed) > state.config.write_tolerance)
    rows, cols = np.nonzero(stale)
    c_loop = curve.c_loop
    per_write_ns = c_loop * params.write_settle_ns
    per_write_nj = c_loop * params.write_iteration_nj

    events = np.zeros(rows.size, dtype=WRITE_EVENT_DTYPE)
    events["tile_id"] = state.tile_id
    events["matrix_index"] = state.matrix_index
    events["tile_row"] = state.tile_row
    events["tile_col"] = state.tile_col
    events["row"] = rows
    events["col"] = cols
    events["target"] = target[rows, cols]
    events["iterations"] = c_loop
    events["energy_nj"] = per_write_nj
    events["time_ns"] = per_write_ns
    events["offset"] = state.is_offset

    if rows.size == 0:
        return replace(state, program_latency_ns=0.0), events

    programmed = np.where(stale, target, state.programmed)
    write_count = state.write_count + stale.astype(np.int64)
    latency = float(np.max(np.bincount(rows))) * per_write_ns
    new_state = replace(
        state,
        programmed=programmed,
        write_count=write_count,
        initialized=state.initialized | stale,
        program_latency_ns=latency,
    )
    return new_state, events


def tile_mvm(state: MrrTileState, x: Tensor, vertical: bool = False,
             adc_bits: Optional[int] = None) -> Tensor:
    """Raw optical dot products of the programmed transmissions, read out through the ADC.

    ``x`` may hold one input vector or several as columns. Horizontal input
    computes programmed @ x, vertical input programmed.T @ x. The ADC full
    scale is the number of summed inputs, the largest possible raw value.
    """
    if not np.all(state.initialized):
        raise MappingError("Tile has unprogrammed cells")
    x = as_tensor(x, "x")
    matrix = state.programmed.T if vertical else state.programmed
    if x.shape[0] != matrix.shape[1]:
        port = "rows" if vertical else "cols"
        raise DimensionError(f"Input length {x.shape[0]} does not match tile {port} ({matrix.shape[1]})")
    if np.min(x) < 0.0 or np.max(x) > 1.0:
        raise EncodingError("Optical inputs must be encoded in [0, 1]")
    raw = matrix @ x
    bits = adc_bits if adc_bits is not None else state.config.adc_bits
    return uniform_quantize(raw, float(matrix.shape[1]), bits)


def adc_step(n_inputs: int, bits: int) -> float:
    return n_inputs / (2 ** bits - 1)
