"""RNBW weights container.

Layout (little-endian): magic ``RNBW``, u16 version, u32 entry count, then
per entry: u16 name length, UTF-8 name, u8 dtype code (0 = f32,
1 = i8 codes preceded by an f32 scale), u8 rank, u32 dims[rank], payload.
"""
from pathlib import Path
from typing import Dict, Union

import io
import logging
import struct
import numpy as np

from services.numerics import QuantTensor, dequantize
from utils.errors import SchemaError, VersionError

logger = logging.getLogger(__name__)

MAGIC = b"RNBW"
VERSION = 1
DTYPE_F32 = 0
DTYPE_I8 = 1

WeightEntry = Union[np.ndarray, QuantTensor]


def dumps(entries: Dict[str, WeightEntry]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(entries)))
    for name, value in entries.items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        if isinstance(value, QuantTensor):
            shape = value.codes.shape
            buf.write(struct.pack("<BB", DTYPE_I8, len(shape)))
            buf.write(struct.pack(f"<{len(shape)}I", *shape))
            buf.write(struct.pack("<f", value.scale))
            buf.write(value.codes.astype("<i1").tobytes())
        else:
            array = np.asarray(value)
            buf.write(struct.pack("<BB", DTYPE_F32, array.ndim))
            buf.write(struct.pack(f"<{array.ndim}I", *array.shape))
            buf.write(array.astype("<f4").tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> Dict[str, WeightEntry]:
    """Parse a container. f32 entries come back as float64 arrays."""
    if blob[:4] != MAGIC:
        raise SchemaError("Not an RNBW weights container (bad magic)")
    view = memoryview(blob)
    version, count = struct.unpack_from("<HI", view, 4)
    if version != VERSION:
        raise VersionError(f"Unsupported RNBW version {version}; expected {VERSION}")
    offset = 10
    entries: Dict[str, WeightEntry] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", view, offset)
            offset += 2
            name = bytes(view[offset:offset + name_len]).decode("utf-8")
            offset += name_len
            dtype_code, rank = struct.unpack_from("<BB", view, offset)
            offset += 2
            shape = struct.unpack_from(f"<{rank}I", view, offset)
            offset += 4 * rank
            numel = int(np.prod(shape)) if rank else 1
            if dtype_code == DTYPE_F32:
                data = np.frombuffer(view, dtype="<f4", count=numel, offset=offset)
                offset += 4 * numel
                entries[name] = data.astype(np.float64).reshape(shape)
            elif dtype_code == DTYPE_I8:
                (scale,) = struct.unpack_from("<f", view, offset)
                offset += 4
                codes = np.frombuffer(view, dtype="<i1", count=numel, offset=offset)
                offset += numel
                entries[name] = QuantTensor(codes=codes.astype(np.int8).reshape(shape), scale=float(scale))
            else:
                raise SchemaError(f"Entry '{name}' has unknown dtype code {dtype_code}")
    except struct.error as e:
        raise SchemaError(f"Truncated RNBW container: {str(e)}")
    except ValueError as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(f"Truncated RNBW container: {str(e)}")
    return entries


def save_weights(path: Union[str, Path], entries: Dict[str, WeightEntry]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(entries))
    logger.info(f"Wrote {len(entries)} weight entries to {path}")


def load_weights(path: Union[str, Path]) -> Dict[str, WeightEntry]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"weights not found: {path}")
    entries = loads(path.read_bytes())
    logger.info(f"Loaded {len(entries)} weight entries from {path}")
    return entries


def to_float(entries: Dict[str, WeightEntry]) -> Dict[str, np.ndarray]:
    """Dequantize int8 entries so every weight is a float64 array."""
    return {name: dequantize(v) if isinstance(v, QuantTensor) else np.asarray(v, dtype=np.float64)
            for name, v in entries.items()}
