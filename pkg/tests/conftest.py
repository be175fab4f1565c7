import json

import numpy as np
import pytest

from models.params import ComponentParams, TileConfig
from services.netgraph import parse_netdesc
from services.photonic_tile import CalibrationCurve


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    """Run every test inside its own directory so error.log and outputs stay isolated."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return ComponentParams()


@pytest.fixture
def curve():
    return CalibrationCurve(c_loop=10)


@pytest.fixture
def tile8():
    return TileConfig(rows=8, cols=8)


def dense(n_in, n_out, name=None):
    layer = {"kind": "dense", "in": n_in, "out": n_out}
    if name:
        layer["name"] = name
    return layer


@pytest.fixture
def make_net():
    """Build a NetworkDesc from a plain dict (the same shape as the JSON files)."""
    def _make(spec: dict):
        return parse_netdesc(json.dumps(spec))
    return _make


@pytest.fixture
def stacked_dense():
    """n equal dense layers in one block, named l0..l{n-1}."""
    def _spec(n_layers: int, width: int, **extra) -> dict:
        layers = [dense(width, width, f"l{i}") for i in range(n_layers)]
        return {"name": f"stack{n_layers}x{width}", "input_shape": [width], "blocks": [{"layers": layers}], **extra}
    return _spec
