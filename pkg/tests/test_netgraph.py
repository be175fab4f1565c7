import json

import numpy as np
import pytest

from models.params import TileConfig
from services.netgraph import (
    PhotonicEngine,
    deviation_bound,
    evaluate,
    forward,
    init_weights,
    load_netdesc,
    lower_conv_im2col,
    parameter_count,
    parse_netdesc,
    program_network,
    run_photonic,
    unshare,
)
from services.datasets import make_blobs
from services.obu import channel_shuffle
from services.prm_scheduler import PhotonicSession
from utils.errors import DimensionError, SchemaError, SessionError


def _direct_conv(x, w, stride, pad):
    cout, cin, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho = (xp.shape[1] - k) // stride + 1
    wo = (xp.shape[2] - k) // stride + 1
    out = np.zeros((cout, ho, wo))
    for o in range(cout):
        for i in range(ho):
            for j in range(wo):
                patch = xp[:, i * stride:i * stride + k, j * stride:j * stride + k]
                out[o, i, j] = np.sum(patch * w[o])
    return out


MLP = {
    "name": "mlp",
    "input_shape": [8],
    "blocks": [{"layers": [
        {"kind": "dense", "in": 8, "out": 12},
        {"kind": "relu"},
        {"kind": "dense", "in": 12, "out": 8},
        {"kind": "norm", "scale": 0.5, "offset": 0.1},
        {"kind": "relu"},
        {"kind": "dense", "in": 8, "out": 3},
    ]}],
}

CONV = {
    "name": "conv",
    "input_shape": [2, 5, 5],
    "blocks": [
        {"layers": [{"kind": "conv2d", "cin": 2, "cout": 4, "k": 3, "pad": 1}, {"kind": "relu"}]},
        {"layers": [{"kind": "conv2d", "cin": 4, "cout": 4, "k": 3, "pad": 1}, {"kind": "relu"}]},
        {"layers": [{"kind": "conv2d", "cin": 4, "cout": 4, "k": 3, "pad": 1}, {"kind": "relu"}]},
        {"layers": [{"kind": "dense", "in": 100, "out": 3}]},
    ],
    "reuse": [{
        "basic": "b1",
        "members": ["b1", "b2"],
        "granularity": "block",
        "transforms": [{"kind": "identity"}, {"kind": "channel_shuffle", "g": 2}],
    }],
}


def test_parse_minimal_network():
    net = parse_netdesc(json.dumps({"name": "tiny", "input_shape": [3],
                                    "blocks": [{"layers": [{"kind": "dense", "in": 3, "out": 2}]}]}))
    assert net.output_shape == (2,)
    assert len(net.groups) == 1


def test_parse_reports_bad_json_and_unknown_kinds():
    with pytest.raises(SchemaError):
        parse_netdesc("{not json")
    with pytest.raises(SchemaError) as excinfo:
        parse_netdesc(json.dumps({"name": "x", "input_shape": [3],
                                  "blocks": [{"layers": [{"kind": "pool"}]}]}))
    assert any("blocks" in d["field"] for d in excinfo.value.details)


def test_parse_reports_shape_errors_with_field_path():
    with pytest.raises(DimensionError, match=r"blocks\.0\.layers\.1"):
        parse_netdesc(json.dumps({"name": "x", "input_shape": [4], "blocks": [{"layers": [
            {"kind": "dense", "in": 4, "out": 4}, {"kind": "dense", "in": 5, "out": 2}]}]}))
    with pytest.raises(DimensionError, match="kernel"):
        parse_netdesc(json.dumps({"name": "x", "input_shape": [1, 2, 2], "blocks": [{"layers": [
            {"kind": "conv2d", "cin": 1, "cout": 1, "k": 5}]}]}))


def test_duplicate_layer_names_are_rejected():
    with pytest.raises(SchemaError, match="Duplicate"):
        parse_netdesc(json.dumps({"name": "x", "input_shape": [2], "blocks": [{"layers": [
            {"kind": "dense", "in": 2, "out": 2, "name": "a"}, {"kind": "dense", "in": 2, "out": 2, "name": "a"}]}]}))


def test_load_netdesc_missing_file(workdir):
    with pytest.raises(FileNotFoundError, match="network not found"):
        load_netdesc(workdir / "absent.json")


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_im2col_lowering_matches_direct_convolution(rng, stride, pad):
    conv = parse_netdesc(json.dumps({"name": "c", "input_shape": [3, 6, 6], "blocks": [{"layers": [
        {"kind": "conv2d", "cin": 3, "cout": 2, "k": 3, "stride": stride, "pad": pad}]}]})).layers[0].spec
    x = rng.standard_normal((3, 6, 6))
    w = rng.standard_normal((2, 3, 3, 3))
    patches, w_mat = lower_conv_im2col(conv, x, w)
    expected = _direct_conv(x, w, stride, pad)
    assert np.max(np.abs((w_mat @ patches).reshape(expected.shape) - expected)) <= 1e-10


def test_float_forward_of_conv_net_matches_direct_oracle(rng):
    net = parse_netdesc(json.dumps(CONV))
    weights = init_weights(net, seed=5)
    x = rng.standard_normal((2, 5, 5))
    assert set(weights) == {"b0.0", "b1.0", "b3.0"}
    h = np.maximum(_direct_conv(x, weights["b0.0"], 1, 1), 0)
    h = np.maximum(_direct_conv(h, weights["b1.0"], 1, 1), 0)
    h = np.maximum(_direct_conv(channel_shuffle(h, 2), weights["b1.0"], 1, 1), 0)
    assert np.allclose(forward(net, weights, x), weights["b3.0"] @ h.reshape(-1))


@pytest.mark.parametrize("spec", [MLP, CONV], ids=["mlp", "conv"])
def test_photonic_engine_stays_within_readout_bound(spec, rng, curve, params):
    net = parse_netdesc(json.dumps(spec))
    weights = init_weights(net, seed=2)
    _, session = program_network(net, weights, TileConfig(rows=4, cols=4), curve, params)
    x = rng.uniform(-1, 1, size=(5, *net.input_shape))
    expected = forward(net, weights, x)
    actual, engine = run_photonic(net, x, session)
    bound = deviation_bound(engine.readouts)
    assert actual.shape == expected.shape
    assert 0 < bound
    assert np.max(np.abs(actual - expected)) <= bound
    assert engine.workload.mvm_cycles > 0


def test_transposed_use_reads_the_vertical_port(rng, curve, params):
    net = parse_netdesc(json.dumps({
        "name": "tied",
        "input_shape": [6],
        "blocks": [{"layers": [
            {"kind": "dense", "in": 6, "out": 4, "name": "enc"},
            {"kind": "dense", "in": 4, "out": 6, "name": "dec"},
        ]}],
        "reuse": [{"basic": "enc", "members": ["enc", "dec"], "transforms": [{"kind": "identity"}, {"kind": "transpose"}]}],
    }))
    w = rng.uniform(-1, 1, size=(4, 6))
    x = rng.uniform(0, 1, size=6)
    expected = w.T @ (w @ x)
    assert np.allclose(forward(net, {"enc": w}, x), expected)

    trace, session = program_network(net, {"enc": w}, TileConfig(rows=4, cols=4), curve, params)
    assert trace.weight_writes == 4 * 8
    actual, engine = run_photonic(net, x, session)
    assert np.max(np.abs(actual - expected)) <= deviation_bound(engine.readouts)


REUSED_PAIR = {
    "name": "reused_pair",
    "input_shape": [8],
    "blocks": [{"layers": [
        {"kind": "dense", "in": 8, "out": 8, "name": "l0"},
        {"kind": "relu"},
        {"kind": "dense", "in": 8, "out": 8, "name": "l1"},
    ]}],
    "reuse_pattern": {"pattern": "1x2"},
}


@pytest.mark.parametrize("first_seed", range(0, 1000, 100))
def test_reused_pair_matches_oracle_within_bound(first_seed, tile8, curve, params):
    net = parse_netdesc(json.dumps(REUSED_PAIR))
    assert net.basic_keys == ("l0",)
    for seed in range(first_seed, first_seed + 100):
        rng = np.random.default_rng(seed)
        w = rng.uniform(-1, 1, size=(8, 8))
        x = rng.uniform(0, 1, size=8)
        oracle = w @ np.maximum(w @ x, 0.0)
        assert np.allclose(forward(net, {"l0": w}, x), oracle, atol=1e-12)

        _, session = program_network(net, {"l0": w}, tile8, curve, params)
        actual, engine = run_photonic(net, x, session)
        assert np.max(np.abs(actual - oracle)) <= deviation_bound(engine.readouts), f"seed {seed}"


def test_photonic_engine_needs_programmed_session(tile8, curve, params):
    net = parse_netdesc(json.dumps(MLP))
    with pytest.raises(SessionError):
        PhotonicEngine(net, PhotonicSession(tile8, params, curve))
    with pytest.raises(SessionError):
        forward(net, None, np.zeros(8), engine="photonic")


def test_unshared_twin_computes_the_same_function(rng):
    spec = dict(MLP, blocks=[{"layers": [
        {"kind": "dense", "in": 8, "out": 8, "name": "a"},
        {"kind": "relu"},
        {"kind": "dense", "in": 8, "out": 8, "name": "b"},
        {"kind": "dense", "in": 8, "out": 2, "name": "c"},
    ]}], reuse=[{"basic": "a", "members": ["a", "b"],
                 "transforms": [{"kind": "identity"}, [{"kind": "channel_shuffle", "g": 2}, {"kind": "transpose"}]]}])
    net = parse_netdesc(json.dumps(spec))
    weights = init_weights(net, seed=4)
    twin, copies = unshare(net, weights)
    assert parameter_count(net) == 64 + 16
    assert parameter_count(net, shared=False) == parameter_count(twin) == 64 + 64 + 16
    assert np.allclose(copies["b"], weights["a"].T)
    x = rng.standard_normal((3, 8))
    assert np.allclose(forward(twin, copies, x), forward(net, weights, x), atol=1e-12)


def test_init_weights_is_seeded():
    net = parse_netdesc(json.dumps(MLP))
    a, b = init_weights(net, 9), init_weights(net, 9)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    with pytest.raises(DimensionError):
        forward(net, {k: v for k, v in a.items() if k != "b0.0"}, np.zeros(8))


def test_evaluate_needs_classification_head():
    net = parse_netdesc(json.dumps({"name": "reg", "input_shape": [8], "blocks": [{"layers": [
        {"kind": "dense", "in": 8, "out": 1}]}]}))
    with pytest.raises(DimensionError):
        evaluate(net, init_weights(net), make_blobs(8))


def test_evaluate_photonic_matches_float_accuracy_on_easy_data(curve, params):
    net = parse_netdesc(json.dumps({"name": "lin", "input_shape": [8], "blocks": [{"layers": [
        {"kind": "dense", "in": 8, "out": 2}]}]}))
    # class 1 sits on the positive side of every feature
    weights = {"b0.0": np.vstack([-np.ones(8), np.ones(8)]) / 8}
    data = make_blobs(64, separation=3.0, std=0.5, seed=1)
    _, session = program_network(net, weights, TileConfig(rows=8, cols=8), curve, params)
    float_acc = evaluate(net, weights, data)
    assert float_acc == pytest.approx(1.0)
    assert evaluate(net, None, data, engine="photonic", session=session) == float_acc
