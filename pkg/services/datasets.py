from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import logging
import numpy as np

from models.schemas import DatasetSpec
from utils.errors import DimensionError, SchemaError

logger = logging.getLogger(__name__)

IDX_DTYPES = {
    0x08: np.dtype(np.uint8),
    0x09: np.dtype(np.int8),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    split: str = "all"

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise DimensionError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def train_test_split(self, test_fraction: float = 0.25, seed: int = 0) -> Tuple["Dataset", "Dataset"]:
        order = np.random.default_rng(seed).permutation(len(self))
        n_test = int(round(test_fraction * len(self)))
        test, train = order[:n_test], order[n_test:]
        return (
            Dataset(self.inputs[train], self.labels[train], split="train"),
            Dataset(self.inputs[test], self.labels[test], split="test"),
        )


def make_blobs(n_samples: int = 256, n_features: int = 8, separation: float = 1.0,
               std: float = 1.0, seed: int = 0) -> Dataset:
    """Two Gaussian classes centred at -separation and +separation on every feature."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n_samples) % 2
    centres = np.where(labels[:, None] == 1, separation, -separation) * np.ones((1, n_features))
    inputs = centres + std * rng.standard_normal((n_samples, n_features))
    order = rng.permutation(n_samples)
    return Dataset(inputs=inputs[order], labels=labels[order].astype(np.int64))


def _read_idx(path: Path) -> np.ndarray:
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    data = path.read_bytes()
    if len(data) < 4 or data[0] != 0 or data[1] != 0:
        raise SchemaError(f"{path} is not an IDX file")
    dtype = IDX_DTYPES.get(data[2])
    if dtype is None:
        raise SchemaError(f"{path}: unknown IDX type code 0x{data[2]:02x}")
    ndim = data[3]
    if len(data) < 4 + 4 * ndim:
        raise SchemaError(f"{path}: truncated IDX header, {ndim} dimensions need {4 + 4 * ndim} bytes")
    dims = np.frombuffer(data, dtype=">u4", count=ndim, offset=4).astype(np.int64)
    offset = 4 + 4 * ndim
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(data) - offset < expected:
        raise SchemaError(f"{path}: truncated IDX payload")
    return np.frombuffer(data, dtype=dtype, count=int(np.prod(dims)), offset=offset).reshape(tuple(dims))


def load_idx(images: Union[str, Path], labels: Union[str, Path], limit: Optional[int] = None,
             scale: bool = True) -> Dataset:
    """MNIST-style IDX image/label pair; images are flattened and scaled to [0, 1]."""
    x = _read_idx(Path(images))
    y = _read_idx(Path(labels))
    if limit is not None:
        x, y = x[:limit], y[:limit]
    inputs = x.reshape(len(x), -1).astype(np.float64)
    if scale and x.dtype == np.uint8:
        inputs /= 255.0
    logger.info(f"Loaded {len(y)} IDX samples from {images}")
    return Dataset(inputs=inputs, labels=y.astype(np.int64))


def dataset_from_spec(spec: DatasetSpec, seed: int = 0, base_dir: Optional[Path] = None) -> Dataset:
    if spec.kind == "blobs":
        return make_blobs(spec.n_samples, spec.n_features, spec.separation, spec.std,
                          spec.seed if spec.seed is not None else seed)
    base = base_dir or Path(".")
    return load_idx(base / spec.images, base / spec.labels, limit=spec.limit)
