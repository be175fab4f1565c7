import json

import numpy as np
import pytest

from models.schemas import TrainConfig
from services.datasets import make_blobs
from services.netgraph import forward, init_weights, parse_netdesc, unshare
from services.training import SharedWeightNet, loss_and_grads, toy_train
from utils.errors import TrainingError


def _three_layer(reuse=True, transforms=None):
    spec = {
        "name": "shared3",
        "input_shape": [4],
        "blocks": [{"layers": [
            {"kind": "dense", "in": 4, "out": 4, "name": "l0"},
            {"kind": "relu"},
            {"kind": "dense", "in": 4, "out": 4, "name": "l1"},
            {"kind": "relu"},
            {"kind": "dense", "in": 4, "out": 3, "name": "l2"},
        ]}],
    }
    if reuse:
        spec["reuse"] = [{"basic": "l0", "members": ["l0", "l1"], "transforms": transforms}]
    return parse_netdesc(json.dumps(spec))


def _mse(net, weights, x, t):
    y = forward(net, weights, x)
    return 0.5 * np.sum((y - t) ** 2) / len(x)


@pytest.mark.parametrize("transforms", [
    None,
    [{"kind": "identity"}, {"kind": "transpose"}],
    [{"kind": "identity"}, {"kind": "channel_shuffle", "g": 2}],
], ids=["plain", "transpose", "shuffle"])
def test_shared_gradient_matches_central_differences(rng, transforms):
    net = _three_layer(transforms=transforms)
    weights = init_weights(net, seed=7)
    x = rng.standard_normal((6, 4))
    t = rng.standard_normal((6, 3))
    value, grads = loss_and_grads(net, weights, x, t, loss="mse")
    assert value == pytest.approx(_mse(net, weights, x, t), rel=1e-12)

    eps = 1e-4
    worst = 0.0
    for key, w in weights.items():
        fd = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            plus = {k: v.copy() for k, v in weights.items()}
            minus = {k: v.copy() for k, v in weights.items()}
            plus[key][idx] += eps
            minus[key][idx] -= eps
            fd[idx] = (_mse(net, plus, x, t) - _mse(net, minus, x, t)) / (2 * eps)
        worst = max(worst, float(np.max(np.abs(grads[key] - fd)) / max(float(np.max(np.abs(fd))), 1e-12)))
    assert worst < 1e-4


def test_shared_gradient_is_sum_of_per_use_gradients(rng):
    net = _three_layer()
    weights = init_weights(net, seed=1)
    twin, copies = unshare(net, weights)
    x = rng.standard_normal((5, 4))
    t = rng.standard_normal((5, 3))
    _, shared = loss_and_grads(net, weights, x, t, loss="mse")
    _, separate = loss_and_grads(twin, copies, x, t, loss="mse")
    assert np.allclose(shared["l0"], separate["l0"] + separate["l1"], atol=1e-12)
    assert np.allclose(shared["l2"], separate["l2"], atol=1e-12)


def test_torch_module_matches_float_engine(rng):
    import torch

    net = _three_layer(transforms=[{"kind": "identity"}, [{"kind": "channel_shuffle", "g": 2}, {"kind": "transpose"}]])
    weights = init_weights(net, seed=2)
    x = rng.standard_normal((4, 4))
    with torch.no_grad():
        out = SharedWeightNet(net, weights)(torch.tensor(x)).numpy()
    assert np.allclose(out, forward(net, weights, x), atol=1e-12)


def test_zero_epochs_returns_initial_weights():
    net = _three_layer()
    weights = init_weights(net, seed=3)
    result = toy_train(net, make_blobs(16, n_features=4), TrainConfig(epochs=0), weights=weights)
    assert result.history == []
    assert result.final_accuracy is None
    assert all(np.array_equal(result.weights[k], weights[k]) for k in weights)
    assert result.weights["l0"] is not weights["l0"]


def test_cosine_schedule_decays_learning_rate():
    net = _three_layer(reuse=False)
    result = toy_train(net, make_blobs(32, n_features=4), TrainConfig(epochs=4, lr=0.01))
    lrs = [h["lr"] for h in result.history]
    assert lrs[0] == pytest.approx(0.01)
    assert lrs == sorted(lrs, reverse=True)
    assert [h["epoch"] for h in result.history] == [0, 1, 2, 3]


def test_training_is_deterministic():
    net = _three_layer()
    data = make_blobs(32, n_features=4)
    cfg = TrainConfig(epochs=2, lr=0.01, seed=5)
    a, b = toy_train(net, data, cfg), toy_train(net, data, cfg)
    assert a.history == b.history
    assert all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)


def test_divergence_reports_epoch():
    net = parse_netdesc(json.dumps({"name": "huge", "input_shape": [8], "blocks": [{"layers": [
        {"kind": "dense", "in": 8, "out": 8}, {"kind": "dense", "in": 8, "out": 2}]}]}))
    weights = {"b0.0": np.full((8, 8), 1e200), "b0.1": np.full((2, 8), 1e200)}
    with pytest.raises(TrainingError) as excinfo:
        toy_train(net, make_blobs(16), TrainConfig(epochs=3), weights=weights)
    assert excinfo.value.epoch == 0


def test_shared_and_shuffled_net_keeps_baseline_accuracy():
    data = make_blobs(256, n_features=8, seed=0)
    layers = [
        {"kind": "dense", "in": 8, "out": 8, "name": "l0"},
        {"kind": "relu"},
        {"kind": "dense", "in": 8, "out": 8, "name": "l1"},
        {"kind": "relu"},
        {"kind": "dense", "in": 8, "out": 2, "name": "head"},
    ]
    baseline = parse_netdesc(json.dumps({"name": "base", "input_shape": [8], "blocks": [{"layers": layers}]}))
    shared = parse_netdesc(json.dumps({
        "name": "rnb",
        "input_shape": [8],
        "blocks": [{"layers": layers}],
        "reuse": [{"basic": "l0", "members": ["l0", "l1"],
                   "transforms": [{"kind": "identity"}, {"kind": "channel_shuffle", "g": 2}]}],
    }))
    cfg = TrainConfig(epochs=30, lr=0.01)
    base_acc = toy_train(baseline, data, cfg).final_accuracy
    shared_acc = toy_train(shared, data, cfg).final_accuracy
    assert base_acc >= 0.98
    assert base_acc - shared_acc <= 0.02
