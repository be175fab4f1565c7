import numpy as np
import pytest

from services.numerics import matvec_reference
from services.photonic_tile import (
    CalibrationCurve,
    MrrTileState,
    adc_step,
    decompose_offset,
    program_tile,
    tile_mvm,
    voltage_for_target,
)
from utils.errors import EncodingError, MappingError, NormalizationError, UnreachableTargetError


def test_offset_decomposition_is_exact_in_float_path(rng):
    worst = 0.0
    for _ in range(1000):
        w = rng.uniform(-1, 1, size=(8, 8))
        x = rng.uniform(0, 1, size=8)
        d = decompose_offset(w)
        worst = max(worst, float(np.max(np.abs(d.reconstruct(x) - w @ x))))
    assert worst <= 1e-12


def test_offset_decomposition_maps_into_transmission_range():
    d = decompose_offset(np.array([[-1.0, 0.0, 1.0]]))
    assert d.w_prime.tolist() == [[0.0, 0.5, 1.0]]


def test_offset_decomposition_rejects_unnormalised_block():
    with pytest.raises(NormalizationError):
        decompose_offset(np.array([[1.5]]))


def test_voltage_for_identity_curve():
    assert voltage_for_target(CalibrationCurve(), 0.25) == pytest.approx(0.5, abs=1e-9)


def test_voltage_uses_numeric_inverse_of_nonlinear_curve():
    curve = CalibrationCurve(f=lambda t: t * t)
    assert voltage_for_target(curve, 0.49) == pytest.approx(np.sqrt(0.7), abs=1e-9)


def test_voltage_prefers_closed_form_inverse():
    curve = CalibrationCurve(f=lambda t: t * t, f_inv=np.sqrt, phi_inv=lambda th: th)
    assert voltage_for_target(curve, 0.36) == pytest.approx(np.sqrt(0.6))


def test_voltage_rejects_unreachable_target():
    with pytest.raises(UnreachableTargetError):
        voltage_for_target(CalibrationCurve(), 1.5)
    with pytest.raises(UnreachableTargetError):
        voltage_for_target(CalibrationCurve(f=lambda t: 0.5 * t), 0.8)


def test_program_tile_charges_every_fresh_cell(tile8, curve, params):
    state = MrrTileState.fresh(tile8, shape=(2, 2))
    state, events = program_tile(state, np.full((2, 2), 0.5), curve, params)
    assert events.size == 4
    assert set(events["iterations"]) == {10}
    # 14 mW x 100 ns x 10 iterations
    assert np.allclose(events["energy_nj"], 14.0)
    assert np.allclose(events["time_ns"], 1000.0)
    assert state.program_latency_ns == pytest.approx(2000.0)
    assert state.total_writes == 4


def test_program_tile_skips_cells_already_on_target(tile8, curve, params):
    state = MrrTileState.fresh(tile8, shape=(2, 2))
    target = np.full((2, 2), 0.5)
    state, _ = program_tile(state, target, curve, params)
    state, events = program_tile(state, target, curve, params)
    assert events.size == 0
    target[1, 0] = 0.9
    state, events = program_tile(state, target, curve, params)
    assert [(int(e["row"]), int(e["col"])) for e in events] == [(1, 0)]
    assert state.write_count.tolist() == [[1, 1], [2, 1]]


def test_program_tile_rejects_bad_targets(tile8, curve, params):
    state = MrrTileState.fresh(tile8)
    with pytest.raises(MappingError):
        program_tile(state, np.zeros((2, 2)), curve, params)
    with pytest.raises(MappingError):
        program_tile(state, np.full((8, 8), 1.2), curve, params)


def test_tile_mvm_horizontal_and_vertical_readout(tile8, curve, params, rng):
    target = rng.uniform(0, 1, size=(8, 8))
    state, _ = program_tile(MrrTileState.fresh(tile8), target, curve, params)
    x = rng.uniform(0, 1, size=8)
    half_step = adc_step(8, tile8.adc_bits) / 2 + 1e-12
    assert np.max(np.abs(tile_mvm(state, x) - target @ x)) <= half_step
    assert np.max(np.abs(tile_mvm(state, x, vertical=True) - target.T @ x)) <= half_step


def test_tile_mvm_requires_programmed_tile_and_encoded_input(tile8, curve, params):
    with pytest.raises(MappingError):
        tile_mvm(MrrTileState.fresh(tile8), np.zeros(8))
    state, _ = program_tile(MrrTileState.fresh(tile8), np.zeros((8, 8)), curve, params)
    with pytest.raises(EncodingError):
        tile_mvm(state, np.full(8, -0.1))


def test_tile_mvm_on_a_permutation_tile(tile8, curve, params):
    target = np.array([[0.0, 1.0], [1.0, 0.0]])
    state, _ = program_tile(MrrTileState.fresh(tile8, shape=(2, 2)), target, curve, params)
    x = np.array([1.0, 0.0])
    half_step = adc_step(2, tile8.adc_bits) / 2 + 1e-12
    assert np.max(np.abs(tile_mvm(state, x) - [0.0, 1.0])) <= half_step
    vertical = tile_mvm(state, x, vertical=True)
    assert np.max(np.abs(vertical - matvec_reference(target.T, x))) <= half_step


@pytest.mark.parametrize("c_loop", [1, 3, 10, 25])
def test_write_energy_and_time_scale_linearly_in_loop_length(tile8, params, rng, c_loop):
    target = rng.uniform(0, 1, size=(4, 4))
    _, once = program_tile(MrrTileState.fresh(tile8, shape=(4, 4)), target, CalibrationCurve(c_loop=1), params)
    _, looped = program_tile(MrrTileState.fresh(tile8, shape=(4, 4)), target, CalibrationCurve(c_loop=c_loop), params)
    assert looped.size == once.size
    assert looped["energy_nj"].sum() == pytest.approx(c_loop * once["energy_nj"].sum())
    assert looped["time_ns"].sum() == pytest.approx(c_loop * once["time_ns"].sum())
