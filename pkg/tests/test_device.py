import json
import math

import numpy as np
import pytest

from clicksim.device import (
    ENVELOPE_TARGET_UM,
    LEAK_GAIN,
    SENSOR_TAU_S,
    ElectrodeGrid,
    Finger,
    FingerMech,
    PressProfile,
    Trace,
    apply_press_profile,
    displacement_envelope,
    force_on_finger,
    isolation_scenario,
    load_scenario,
    predicted_envelope_um,
    read_trace_csv,
    run_beat_drive,
    save_scenario,
    scenario_from_json,
    scenario_to_json,
    single_finger_state,
    step,
    virtual_force_sensor,
)
from clicksim.drive import SIM_STEP_S, DriveConfig


@pytest.fixture(scope="module")
def isolation_trace():
    state = isolation_scenario()
    return state, run_beat_drive(state, duration_s=2.0)


def test_grid_cell_mapping():
    grid = ElectrodeGrid(2, 1, 20.0, frozenset({0}))
    assert grid.cell_index(10.0, 10.0) == 0
    assert grid.cell_index(30.0, 10.0) == 1
    assert grid.cell_index(-5.0, 10.0) is None
    assert grid.is_energized_at(10.0, 10.0)
    assert not grid.is_energized_at(30.0, 10.0)


def test_grid_rejects_out_of_range_energized():
    with pytest.raises(ValueError):
        ElectrodeGrid(2, 1, 20.0, frozenset({5}))


def test_finger_requires_contact_for_normal_force():
    with pytest.raises(ValueError):
        Finger(id="f", x_mm=0.0, y_mm=0.0, in_contact=False, normal_force_mn=100.0)


def test_mech_parameters_positive():
    with pytest.raises(ValueError):
        FingerMech(mass_kg=0.0)


def test_force_gating_energized():
    state = single_finger_state()
    finger = state.fingers["index"]
    assert force_on_finger(finger, state.grid, state.drive, 250.0) == pytest.approx(250.0)


def test_force_gating_leak():
    state = isolation_scenario()
    middle = state.fingers["middle"]
    out = force_on_finger(middle, state.grid, state.drive, 250.0)
    assert out == pytest.approx(2.5)
    assert 20.0 * math.log10(250.0 / out) == pytest.approx(40.0)


def test_force_gating_ea_disabled():
    state = single_finger_state(drive=DriveConfig(ea_enabled=False))
    finger = state.fingers["index"]
    assert force_on_finger(finger, state.grid, state.drive, 250.0) == 0.0


def test_force_gating_ungrounded():
    state = single_finger_state(grounded=False)
    finger = state.fingers["index"]
    assert force_on_finger(finger, state.grid, state.drive, 250.0) == pytest.approx(2.5)


def test_force_no_contact_returns_zero():
    state = single_finger_state()
    finger = state.fingers["index"]
    finger.in_contact = False
    assert force_on_finger(finger, state.grid, state.drive, 250.0) == 0.0


def test_step_equilibrium():
    state = single_finger_state()
    step(state, SIM_STEP_S)
    finger = state.fingers["index"]
    assert finger.disp_um == 0.0
    assert finger.vel_um_s == 0.0


def test_step_rejects_other_dt():
    state = single_finger_state()
    with pytest.raises(ValueError):
        step(state, SIM_STEP_S * 2)


def test_step_static_gain():
    # Constant force settles to F/k within 0.1%.
    state = single_finger_state()
    state.commanded_lateral_mn = 250.0
    for _ in range(20000):  # 0.2 s, far past settling
        step(state, SIM_STEP_S)
    k = state.fingers["index"].mech.stiffness_n_m
    expected_um = 0.25 / k * 1e6
    assert state.fingers["index"].disp_um == pytest.approx(expected_um, rel=1e-3)


def test_step_nonfinite_halts():
    state = single_finger_state()
    state.fingers["index"].disp_um = float("nan")
    with pytest.raises(RuntimeError):
        step(state, SIM_STEP_S)


def test_step_deterministic_traces():
    t1 = run_beat_drive(single_finger_state(), duration_s=0.3)
    t2 = run_beat_drive(single_finger_state(), duration_s=0.3)
    assert np.array_equal(t1.disp_um["index"], t2.disp_um["index"])
    assert np.array_equal(t1.lateral_mn, t2.lateral_mn)


def test_envelope_known_sinusoid():
    # Direct oracle: a synthetic 10 Hz displacement of known amplitude.
    t = np.arange(0.0, 2.0, SIM_STEP_S)
    x = 123.4 * np.sin(2.0 * np.pi * 10.0 * t)
    trace = Trace(
        t_s=t + SIM_STEP_S,
        lateral_mn=np.zeros_like(t),
        normal_mn=np.zeros_like(t),
        disp_um={"index": x},
    )
    assert displacement_envelope(trace, "index", 10.0) == pytest.approx(123.4, rel=0.02)


def test_envelope_calibrated_beat_response(isolation_trace):
    _, trace = isolation_trace
    env = displacement_envelope(trace, "index", 10.0)
    assert env == pytest.approx(ENVELOPE_TARGET_UM, rel=0.05)


def test_envelope_isolated_finger(isolation_trace):
    _, trace = isolation_trace
    env_index = displacement_envelope(trace, "index", 10.0)
    env_middle = displacement_envelope(trace, "middle", 10.0)
    assert env_middle == pytest.approx(ENVELOPE_TARGET_UM * LEAK_GAIN, rel=0.05)
    assert 20.0 * math.log10(env_index / env_middle) >= 30.0


def test_envelope_carrier_band_both_fingers(isolation_trace):
    state, trace = isolation_trace
    f_us = state.drive.piezo_freq_hz
    env_index = displacement_envelope(trace, "index", f_us)
    env_middle = displacement_envelope(trace, "middle", f_us)
    assert abs(env_index - env_middle) / env_index < 0.15
    assert env_index == pytest.approx(0.021, rel=0.1)


def test_envelope_rejects_short_trace():
    state = single_finger_state()
    trace = run_beat_drive(state, duration_s=0.2)
    with pytest.raises(ValueError):
        displacement_envelope(trace, "index", 10.0)


def test_envelope_unknown_finger(isolation_trace):
    _, trace = isolation_trace
    with pytest.raises(KeyError):
        displacement_envelope(trace, "ring", 10.0)


def test_predicted_envelope_matches_measured():
    measured = displacement_envelope(
        run_beat_drive(single_finger_state(), duration_s=2.0), "index", 10.0
    )
    assert predicted_envelope_um(250.0) == pytest.approx(measured, rel=0.01)


def test_sensor_step_response():
    state = single_finger_state()
    state.commanded_lateral_mn = 250.0
    n = round(3.0 * SENSOR_TAU_S / SIM_STEP_S)
    for _ in range(n):
        step(state, SIM_STEP_S)
    lateral, _ = virtual_force_sensor(state)
    assert lateral >= 0.95 * 250.0


def test_sensor_zero_command():
    state = single_finger_state()
    for _ in range(100):
        step(state, SIM_STEP_S)
    lateral, normal = virtual_force_sensor(state)
    assert lateral == 0.0
    assert normal == 0.0


def test_press_profile_peak():
    profile = PressProfile()
    samples = profile.sample(1.0)
    assert samples.max() == pytest.approx(900.0, rel=1e-6)
    assert profile.press_duration_s == pytest.approx(0.44)


def test_press_profile_crosses_threshold_once_rising():
    # Scan the emitted samples for upward 600 mN crossings.
    samples = PressProfile().sample(1.0)
    above = samples >= 600.0
    upward = np.count_nonzero(~above[:-1] & above[1:])
    assert upward == 1


def test_apply_press_profile_records_trace():
    state = single_finger_state()
    trace = apply_press_profile(state, duration_s=1.0)
    assert trace.normal_mn.max() == pytest.approx(900.0, rel=1e-3)
    assert len(trace.t_s) == round(1.0 / SIM_STEP_S)
    assert np.all(np.diff(trace.t_s) > 0.0)


def test_apply_press_profile_rejects_negative():
    state = single_finger_state()
    with pytest.raises(ValueError):
        apply_press_profile(state, profile=lambda t: -1.0, duration_s=0.01)


def test_trace_channel_length_mismatch():
    t = np.arange(5, dtype=float)
    with pytest.raises(ValueError):
        Trace(t_s=t, lateral_mn=np.zeros(4), normal_mn=np.zeros(5), disp_um={})


def test_trace_csv_roundtrip(tmp_path):
    state = single_finger_state()
    trace = run_beat_drive(state, duration_s=0.05)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t_s,lateral_mN,normal_mN,disp_um_index"
    back = read_trace_csv(path)
    assert np.allclose(back.disp_um["index"], trace.disp_um["index"])
    assert np.allclose(back.t_s, trace.t_s)


def test_scenario_json_roundtrip(tmp_path):
    state = isolation_scenario()
    doc = scenario_to_json(state)
    clone = scenario_from_json(doc)
    assert scenario_to_json(clone) == doc
    path = tmp_path / "scenario.json"
    save_scenario(state, path)
    loaded = load_scenario(path)
    assert scenario_to_json(loaded) == doc
    assert json.loads(path.read_text())["version"] == 1


def test_scenario_rejects_unknown_version():
    doc = scenario_to_json(isolation_scenario())
    doc["version"] = 99
    with pytest.raises(ValueError):
        scenario_from_json(doc)
