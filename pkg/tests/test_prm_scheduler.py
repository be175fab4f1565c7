import numpy as np
import pandas as pd
import pytest

from models.params import ArchFormulaInputs, TileConfig
from services.netgraph import init_weights, program_network, unshare
from services.prm_scheduler import (
    TRACE_COLUMNS,
    execute_plan,
    programming_stats,
    tile_matrix,
)
from utils.errors import MappingError, ScheduleError


def test_single_dense_layer_is_a_singleton_group(make_net):
    net = make_net({"name": "one", "input_shape": [4], "blocks": [{"layers": [{"kind": "dense", "in": 4, "out": 2}]}]})
    assert len(net.blocks) == 1
    assert [(g.basic_id, g.reuse_times) for g in net.groups] == [("b0.0", 1)]


def test_pattern_builds_consecutive_groups(make_net, stacked_dense):
    net = make_net(stacked_dense(8, 4, reuse_pattern={"pattern": "2x4"}))
    assert [g.reuse_times for g in net.groups] == [4, 4]
    assert [g.basic_id for g in net.groups] == ["l0", "l4"]
    assert net.basic_keys == ("l0", "l4")


def test_pattern_larger_than_network_is_rejected(make_net, stacked_dense):
    with pytest.raises(ScheduleError):
        make_net(stacked_dense(3, 4, reuse_pattern={"pattern": "2x2"}))


def test_transposed_member_needs_swapped_shape(make_net):
    spec = {
        "name": "swap",
        "input_shape": [6],
        "blocks": [{"layers": [
            {"kind": "dense", "in": 6, "out": 4, "name": "a"},
            {"kind": "dense", "in": 4, "out": 6, "name": "b"},
        ]}],
        "reuse": [{"basic": "a", "members": ["a", "b"], "transforms": [{"kind": "identity"}, {"kind": "transpose"}]}],
    }
    net = make_net(spec)
    assert net.bindings["b"].transpose_weight
    assert net.basic_keys == ("a",)

    spec["reuse"][0]["transforms"] = None
    with pytest.raises(ScheduleError):
        make_net(spec)


def test_layer_claimed_twice_is_rejected(make_net, stacked_dense):
    spec = stacked_dense(3, 4, reuse=[
        {"basic": "l0", "members": ["l0", "l1"]},
        {"basic": "l1", "members": ["l1", "l2"]},
    ])
    with pytest.raises(ScheduleError, match="claimed"):
        make_net(spec)


def test_transform_count_must_match_members(make_net, stacked_dense):
    spec = stacked_dense(2, 4, reuse=[{"basic": "l0", "members": ["l0", "l1"], "transforms": [{"kind": "identity"}]}])
    with pytest.raises(ScheduleError):
        make_net(spec)


def test_indivisible_shuffle_is_a_schedule_error(make_net, stacked_dense):
    spec = stacked_dense(2, 6, reuse=[{
        "basic": "l0",
        "members": ["l0", "l1"],
        "transforms": [{"kind": "identity"}, {"kind": "channel_shuffle", "g": 4}],
    }])
    with pytest.raises(ScheduleError, match="l1"):
        make_net(spec)


def test_tile_matrix_pads_with_logical_zero(tile8, rng):
    plan = tile_matrix(rng.uniform(-2, 2, size=(10, 10)), tile8, "w")
    assert plan.grid == (2, 2)
    assert plan.offset_length == 16
    corner = plan.tile_target(1, 1)
    assert np.all(corner[2:, :] == 0.5) and np.all(corner[:, 2:] == 0.5)
    assert np.max(np.abs(plan.w_b)) == pytest.approx(1.0)


def test_write_count_law_for_eight_shared_matrices(make_net, stacked_dense, tile8, curve, params):
    shared = make_net(stacked_dense(8, 256, reuse_pattern={"pattern": "1x8"}))
    weights = init_weights(shared, seed=0)
    baseline, base_weights = unshare(shared, weights)

    reuse_trace, _ = program_network(shared, weights, tile8, curve, params)
    base_trace, _ = program_network(baseline, base_weights, tile8, curve, params)

    assert base_trace.weight_writes == 524288
    assert reuse_trace.weight_writes == 65536
    assert base_trace.weight_writes == 8 * reuse_trace.weight_writes
    assert (base_trace.offset_writes, reuse_trace.offset_writes) == (8 * 256, 256)


def test_programmed_session_needs_no_rewrites(make_net, stacked_dense, tile8, curve, params):
    net = make_net(stacked_dense(2, 8))
    weights = init_weights(net, seed=3)
    first, session = program_network(net, weights, tile8, curve, params)
    again, _ = program_network(net, weights, tile8, curve, params, session=session)
    assert first.element_writes == 2 * 64 + 2 * 8
    assert again.element_writes == 0
    assert again.write_latency_ns == 0.0


def test_trace_is_in_canonical_order_and_exports_csv(make_net, stacked_dense, tile8, curve, params, workdir):
    net = make_net(stacked_dense(2, 8))
    trace, _ = program_network(net, init_weights(net, 0), tile8, curve, params)
    assert trace.per_matrix_writes == {"l0": 72, "l1": 72}
    assert trace.events["offset"][64:72].all() and not trace.events["offset"][:64].any()
    first = trace.event(0)
    assert (first.tile_id, first.row, first.col) == (0, 0, 0)

    frame = pd.read_csv(trace.to_csv(workdir / "trace.csv"))
    assert list(frame.columns) == TRACE_COLUMNS
    assert len(frame) == trace.element_writes


def test_write_latency_is_split_across_processing_units(make_net, stacked_dense, tile8, curve, params):
    net = make_net(stacked_dense(2, 8))
    weights = init_weights(net, 0)
    serial, _ = program_network(net, weights, tile8, curve, params)
    parallel, _ = program_network(net, weights, tile8, curve, params.model_copy(update={"num_ppus": 2}))
    assert parallel.write_latency_ns == pytest.approx(serial.write_latency_ns / 2)


def test_execute_plan_requires_every_basic_matrix(make_net, stacked_dense, curve, params):
    net = make_net(stacked_dense(2, 8))
    plan = tile_matrix(np.eye(8), TileConfig(), "l0")
    with pytest.raises(MappingError):
        execute_plan(net.groups, {"l0": plan}, curve, params)


def test_programming_stats_carry_normalised_times(make_net, stacked_dense, tile8, curve, params):
    net = make_net(stacked_dense(1, 8))
    trace, _ = program_network(net, init_weights(net, 0), tile8, curve, params)
    stats = programming_stats(trace, ArchFormulaInputs(M=8, N=8, K=1, C=10, B=16))
    assert stats.element_writes == 72
    assert stats.weight_writes == 64
    assert stats.calibration_iterations == 720
    assert stats.normalized_programming_times["rnb"] == 8
    assert set(stats.normalized_programming_times) == {"mzi", "crosslight", "holylight", "rnb"}
