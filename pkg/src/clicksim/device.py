"""Simulated surface device: electrode grid, finger contacts, fingertip mechanics.

The device gates a commanded lateral force onto each contacting finger
(full force only when the finger's electrode cell is energized, the finger
is grounded and electroadhesion is enabled; a -40 dB residual couples
through the surface otherwise), integrates a linear second-order fingertip
model at a fixed 10 us step, and records traces that virtual probes
(band-limited displacement envelope, lagged force sensor) can interrogate.

Fingertip mechanics are a stand-in: stiffness is calibrated offline so the
low-frequency displacement envelope under the default beat drive lands on
the measured target (see ``calibrate_stiffness``).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, hilbert, sosfiltfilt

from .drive import (
    DEFAULT_AMPLITUDE_PP_MN,
    SIM_STEP_S,
    DriveConfig,
    beat_frequency,
    sample_beat_force,
)

log = logging.getLogger(__name__)

SCENARIO_SCHEMA_VERSION = 1

#: Residual coupling onto non-energized / ungrounded fingers (-40 dB).
LEAK_GAIN = 0.01

#: Peak displacement a 10 Hz lateral vibration must reach to be felt (um).
PERCEPTION_THRESHOLD_10HZ_UM = 100.0

#: Carrier-band displacement every contacting finger rides, energized or not (um).
ULTRASONIC_RIDE_UM = 0.021

#: First-order lag of the virtual force sensor chain.
SENSOR_TAU_S = 0.002

# Fingertip lateral mechanics.  Mass and damping are plausible tissue values;
# stiffness comes from scripts/calibrate_mech.py (bisection against the
# 691.9 um envelope target under the default 250 mN beat amplitude).
FINGER_MASS_KG = 0.002
FINGER_DAMPING_NS_PER_M = 0.85
FINGER_STIFFNESS_N_PER_M = 363.74967897108945

ENVELOPE_TARGET_UM = 691.9


@dataclass(frozen=True)
class ElectrodeGrid:
    """Rectangular grid of individually energizable electrode cells."""

    n_cols: int
    n_rows: int
    cell_size_mm: float = 20.0
    energized: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.n_cols < 1 or self.n_rows < 1 or self.cell_size_mm <= 0.0:
            raise ValueError("grid dimensions must be positive")
        n = self.n_cols * self.n_rows
        bad = [i for i in self.energized if not 0 <= i < n]
        if bad:
            raise ValueError(f"energized indices outside grid: {bad}")

    def cell_index(self, x_mm: float, y_mm: float) -> int | None:
        """Cell containing the point, or None off-grid.  Cells are disjoint."""
        col = math.floor(x_mm / self.cell_size_mm)
        row = math.floor(y_mm / self.cell_size_mm)
        if 0 <= col < self.n_cols and 0 <= row < self.n_rows:
            return row * self.n_cols + col
        return None

    def is_energized_at(self, x_mm: float, y_mm: float) -> bool:
        idx = self.cell_index(x_mm, y_mm)
        return idx is not None and idx in self.energized


@dataclass(frozen=True)
class FingerMech:
    """Lateral second-order fingertip model parameters."""

    mass_kg: float = FINGER_MASS_KG
    stiffness_n_m: float = FINGER_STIFFNESS_N_PER_M
    damping_ns_m: float = FINGER_DAMPING_NS_PER_M

    def __post_init__(self) -> None:
        if min(self.mass_kg, self.stiffness_n_m, self.damping_ns_m) <= 0.0:
            raise ValueError("mechanics parameters must be strictly positive")

    def gain_at(self, freq_hz: float) -> float:
        """Steady-state displacement magnitude per unit force (m/N)."""
        w = 2.0 * math.pi * freq_hz
        re = self.stiffness_n_m - self.mass_kg * w * w
        im = self.damping_ns_m * w
        return 1.0 / math.hypot(re, im)


@dataclass
class Finger:
    id: str
    x_mm: float
    y_mm: float
    in_contact: bool = True
    normal_force_mn: float = 0.0
    grounded: bool = True
    mech: FingerMech = field(default_factory=FingerMech)
    disp_um: float = 0.0
    vel_um_s: float = 0.0

    def __post_init__(self) -> None:
        if self.normal_force_mn < 0.0:
            raise ValueError("normal force must be non-negative")
        if not self.in_contact and self.normal_force_mn != 0.0:
            raise ValueError("normal force requires contact")


@dataclass
class Trace:
    """Recorded probe channels at a fixed sample period.

    Channels share one time base; timestamps are strictly increasing.
    """

    t_s: np.ndarray
    lateral_mn: np.ndarray
    normal_mn: np.ndarray
    disp_um: dict[str, np.ndarray]
    dt_s: float = SIM_STEP_S
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.t_s)
        lengths = [len(self.lateral_mn), len(self.normal_mn)]
        lengths += [len(v) for v in self.disp_um.values()]
        if any(m != n for m in lengths):
            raise ValueError("all channels must have the same length")
        if n > 1 and not np.all(np.diff(self.t_s) > 0.0):
            raise ValueError("timestamps must be strictly increasing")

    @property
    def duration_s(self) -> float:
        return float(self.t_s[-1] - self.t_s[0]) if len(self.t_s) else 0.0

    def to_csv(self, path) -> None:
        ids = sorted(self.disp_um)
        header = ["t_s", "lateral_mN", "normal_mN"] + [f"disp_um_{i}" for i in ids]
        cols = [self.t_s, self.lateral_mn, self.normal_mn] + [self.disp_um[i] for i in ids]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in zip(*cols):
                writer.writerow([repr(float(v)) for v in row])


def read_trace_csv(path) -> Trace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float)
    disp = {
        name.removeprefix("disp_um_"): data[:, i]
        for i, name in enumerate(header)
        if name.startswith("disp_um_")
    }
    dt = float(data[1, 0] - data[0, 0]) if len(data) > 1 else SIM_STEP_S
    return Trace(
        t_s=data[:, 0],
        lateral_mn=data[:, 1],
        normal_mn=data[:, 2],
        disp_um=disp,
        dt_s=dt,
    )


@dataclass
class DeviceState:
    """Single-owner mutable simulation state; step one context at a time."""

    grid: ElectrodeGrid
    fingers: dict[str, Finger]
    drive: DriveConfig = field(default_factory=DriveConfig)
    t_s: float = 0.0
    dt_s: float = SIM_STEP_S
    commanded_lateral_mn: float = 0.0
    sensor_lateral_mn: float = 0.0
    sensor_tau_s: float = SENSOR_TAU_S
    leak_gain: float = LEAK_GAIN
    us_ride_um: float = ULTRASONIC_RIDE_UM


def force_on_finger(
    finger: Finger,
    grid: ElectrodeGrid,
    cfg: DriveConfig,
    commanded_mn: float,
    leak_gain: float = LEAK_GAIN,
) -> float:
    """Lateral force (mN) actually coupled onto one finger.

    Full command only with electroadhesion enabled, the finger grounded and
    its cell energized; otherwise the command leaks through at ``leak_gain``.
    A finger out of contact receives nothing (flagged in the log).
    """
    if not finger.in_contact:
        log.warning("force requested for non-contacting finger %s", finger.id)
        return 0.0
    commanded = commanded_mn if cfg.ea_enabled else 0.0
    if finger.grounded and grid.is_energized_at(finger.x_mm, finger.y_mm):
        return commanded
    return commanded * leak_gain


def step(state: DeviceState, dt_s: float) -> DeviceState:
    """Advance fingertip mechanics and the sensor lag by one fixed step.

    Semi-implicit Euler on m*x'' + b*x' + k*x = F; decay-only when F = 0.
    """
    if abs(dt_s - state.dt_s) > 1e-15:
        raise ValueError("dt must equal the configured simulation step")
    for finger in state.fingers.values():
        f_mn = (
            force_on_finger(
                finger, state.grid, state.drive, state.commanded_lateral_mn, state.leak_gain
            )
            if finger.in_contact
            else 0.0
        )
        m = finger.mech.mass_kg
        k = finger.mech.stiffness_n_m
        b = finger.mech.damping_ns_m
        x = finger.disp_um * 1e-6
        v = finger.vel_um_s * 1e-6
        a = (f_mn * 1e-3 - k * x - b * v) / m
        v += dt_s * a
        x += dt_s * v
        if not (math.isfinite(x) and math.isfinite(v)):
            raise RuntimeError(
                f"non-finite fingertip state for {finger.id}: x={x!r} v={v!r} "
                f"at t={state.t_s!r}"
            )
        finger.disp_um = x * 1e6
        finger.vel_um_s = v * 1e6
    state.sensor_lateral_mn += (dt_s / state.sensor_tau_s) * (
        state.commanded_lateral_mn - state.sensor_lateral_mn
    )
    state.t_s += dt_s
    return state


def virtual_force_sensor(state: DeviceState) -> tuple[float, float]:
    """(lateral mN through the 2 ms sensor lag, total applied normal mN)."""
    normal = sum(f.normal_force_mn for f in state.fingers.values())
    return state.sensor_lateral_mn, normal


def _record_loop(
    state: DeviceState,
    n_steps: int,
    commanded: np.ndarray,
    normal: np.ndarray | None = None,
    press_finger: str | None = None,
    on_step=None,
) -> Trace:
    """Run ``n_steps`` fixed steps, recording sensor and displacement channels.

    ``on_step(i, t, normal_mn) -> commanded_mn`` may override the command
    (used by the click engine); otherwise ``commanded[i]`` drives the device.
    """
    ids = sorted(state.fingers)
    disp = {i: np.empty(n_steps) for i in ids}
    lat = np.empty(n_steps)
    nrm = np.empty(n_steps)
    t0 = state.t_s
    dt = state.dt_s
    for i in range(n_steps):
        t = state.t_s
        n_mn = float(normal[i]) if normal is not None else 0.0
        if press_finger is not None:
            state.fingers[press_finger].normal_force_mn = n_mn
        if on_step is not None:
            state.commanded_lateral_mn = on_step(i, t, n_mn)
        else:
            state.commanded_lateral_mn = float(commanded[i])
        step(state, dt)
        for fid in ids:
            disp[fid][i] = state.fingers[fid].disp_um
        lat[i], nrm[i] = virtual_force_sensor(state)
    t_arr = t0 + dt * (1.0 + np.arange(n_steps))
    # Contacting fingers additionally ride the carrier-band surface motion.
    for fid in ids:
        if state.fingers[fid].in_contact:
            disp[fid] += state.us_ride_um * np.sin(
                2.0 * math.pi * state.drive.piezo_freq_hz * t_arr
            )
    return Trace(t_s=t_arr, lateral_mn=lat, normal_mn=nrm, disp_um=disp, dt_s=dt)


def run_beat_drive(
    state: DeviceState,
    duration_s: float = 2.0,
    amplitude_pp_mn: float = DEFAULT_AMPLITUDE_PP_MN,
) -> Trace:
    """Drive the device with the continuous dual-carrier beat and record."""
    _, force = sample_beat_force(state.drive, amplitude_pp_mn, duration_s, state.dt_s)
    return _record_loop(state, len(force), commanded=force)


def displacement_envelope(trace: Trace, finger_id: str, band_hz: float) -> float:
    """Mean peak envelope (um) of a finger's displacement in the given band.

    Band-passes the displacement channel around ``band_hz`` and averages the
    analytic envelope over the central 60% of the trace (edges carry filter
    and settling transients).
    """
    if finger_id not in trace.disp_um:
        raise KeyError(f"no displacement channel for finger {finger_id!r}")
    if trace.duration_s < 5.0 / band_hz:
        raise ValueError("trace shorter than 5 band periods")
    x = trace.disp_um[finger_id]
    fs = 1.0 / trace.dt_s
    if band_hz < 1000.0:
        # Pool to 1 ms bins first: kills the carrier ride (integer number of
        # carrier periods per bin) and keeps the narrow band-pass well posed.
        m = max(1, round(1e-3 / trace.dt_s))
        n = (len(x) // m) * m
        pooled = x[:n].reshape(-1, m).mean(axis=1)
        fs_p = fs / m
        sos = butter(2, [band_hz * 0.5, band_hz * 1.5], btype="bandpass", fs=fs_p, output="sos")
        filtered = sosfiltfilt(sos, pooled)
    else:
        lo, hi = band_hz * 25.0 / 30.0, band_hz * 35.0 / 30.0
        if hi >= fs / 2.0:
            raise ValueError("band not resolvable at the trace sample rate")
        sos = butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos")
        filtered = sosfiltfilt(sos, x)
    env = np.abs(hilbert(filtered))
    n = len(env)
    return float(env[int(0.2 * n) : int(0.8 * n)].mean())


def predicted_envelope_um(
    force_amp_mn: float,
    freq_hz: float = 10.0,
    mech: FingerMech | None = None,
) -> float:
    """Analytic steady-state displacement envelope for a sinusoidal force."""
    mech = mech or FingerMech()
    return force_amp_mn * 1e-3 * mech.gain_at(freq_hz) * 1e6


@dataclass(frozen=True)
class PressProfile:
    """Smooth press-hold-release normal-force profile (raised-cosine ramps)."""

    start_s: float = 0.26
    rise_s: float = 0.08
    hold_s: float = 0.28
    fall_s: float = 0.08
    peak_mn: float = 900.0

    @property
    def press_duration_s(self) -> float:
        return self.rise_s + self.hold_s + self.fall_s

    def __call__(self, t_s: float) -> float:
        t = t_s - self.start_s
        if t < 0.0:
            return 0.0
        if t < self.rise_s:
            return self.peak_mn * 0.5 * (1.0 - math.cos(math.pi * t / self.rise_s))
        t -= self.rise_s
        if t < self.hold_s:
            return self.peak_mn
        t -= self.hold_s
        if t < self.fall_s:
            return self.peak_mn * 0.5 * (1.0 + math.cos(math.pi * t / self.fall_s))
        return 0.0

    def sample(self, duration_s: float, dt_s: float = SIM_STEP_S) -> np.ndarray:
        t = np.arange(0.0, duration_s, dt_s)
        return np.array([self(ti) for ti in t])


def apply_press_profile(
    state: DeviceState,
    profile=None,
    finger_id: str | None = None,
    duration_s: float = 1.0,
    on_step=None,
) -> Trace:
    """Drive one finger's normal force through a profile while recording.

    ``profile`` is a callable t_s -> mN (default press-hold-release reaching
    900 mN); values must be non-negative.  ``on_step`` is the command hook
    described in ``_record_loop``.
    """
    if profile is None:
        profile = PressProfile()
    if finger_id is None:
        finger_id = sorted(state.fingers)[0]
    t = np.arange(0.0, duration_s, state.dt_s)
    normal = np.array([float(profile(ti)) for ti in t])
    if np.any(normal < 0.0):
        raise ValueError("press profile must be non-negative")
    n_steps = len(normal)
    return _record_loop(
        state,
        n_steps,
        commanded=np.zeros(n_steps),
        normal=normal,
        press_finger=finger_id,
        on_step=on_step,
    )


def single_finger_state(
    energized: bool = True,
    grounded: bool = True,
    drive: DriveConfig | None = None,
    mech: FingerMech | None = None,
) -> DeviceState:
    """One finger centred on a one-cell grid; energized by default."""
    grid = ElectrodeGrid(1, 1, 20.0, frozenset({0}) if energized else frozenset())
    finger = Finger(id="index", x_mm=10.0, y_mm=10.0, grounded=grounded,
                    mech=mech or FingerMech())
    return DeviceState(grid=grid, fingers={"index": finger}, drive=drive or DriveConfig())


def isolation_scenario(drive: DriveConfig | None = None) -> DeviceState:
    """Two grounded fingers on adjacent cells; only the index cell energized."""
    grid = ElectrodeGrid(2, 1, 20.0, frozenset({0}))
    fingers = {
        "index": Finger(id="index", x_mm=10.0, y_mm=10.0),
        "middle": Finger(id="middle", x_mm=30.0, y_mm=10.0),
    }
    return DeviceState(grid=grid, fingers=fingers, drive=drive or DriveConfig())


def calibrate_stiffness(
    target_um: float = ENVELOPE_TARGET_UM,
    force_amp_mn: float = DEFAULT_AMPLITUDE_PP_MN / 2.0,
    mass_kg: float = FINGER_MASS_KG,
    damping_ns_m: float = FINGER_DAMPING_NS_PER_M,
    lo: float = 100.0,
    hi: float = 1500.0,
    iters: int = 40,
    duration_s: float = 2.0,
) -> float:
    """Bisect fingertip stiffness until the measured beat-band envelope hits target.

    The measurement runs the full pipeline (beat drive, trace, band-passed
    envelope), so filter gains are absorbed into the calibrated constant.
    """

    def measured(k: float) -> float:
        mech = FingerMech(mass_kg=mass_kg, stiffness_n_m=k, damping_ns_m=damping_ns_m)
        state = single_finger_state(mech=mech)
        trace = run_beat_drive(state, duration_s=duration_s, amplitude_pp_mn=2.0 * force_amp_mn)
        return displacement_envelope(trace, "index", beat_frequency(state.drive))

    # Envelope decreases monotonically with stiffness over this bracket.
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if measured(mid) > target_um:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def scenario_to_json(state: DeviceState) -> dict:
    return {
        "version": SCENARIO_SCHEMA_VERSION,
        "grid": {
            "n_cols": state.grid.n_cols,
            "n_rows": state.grid.n_rows,
            "cell_size_mm": state.grid.cell_size_mm,
            "energized": sorted(state.grid.energized),
        },
        "drive": {
            "piezo_freq_hz": state.drive.piezo_freq_hz,
            "ea_freq_hz": state.drive.ea_freq_hz,
            "phase_deg": state.drive.phase_deg,
            "ea_enabled": state.drive.ea_enabled,
        },
        "fingers": [
            {
                "id": f.id,
                "x_mm": f.x_mm,
                "y_mm": f.y_mm,
                "in_contact": f.in_contact,
                "grounded": f.grounded,
                "mech": {
                    "mass_kg": f.mech.mass_kg,
                    "stiffness_n_m": f.mech.stiffness_n_m,
                    "damping_ns_m": f.mech.damping_ns_m,
                },
            }
            for _, f in sorted(state.fingers.items())
        ],
        "dt_s": state.dt_s,
        "leak_gain": state.leak_gain,
        "us_ride_um": state.us_ride_um,
        "sensor_tau_s": state.sensor_tau_s,
    }


def scenario_from_json(doc: dict) -> DeviceState:
    version = doc.get("version")
    if version != SCENARIO_SCHEMA_VERSION:
        raise ValueError(f"unsupported scenario schema version: {version!r}")
    grid = ElectrodeGrid(
        n_cols=doc["grid"]["n_cols"],
        n_rows=doc["grid"]["n_rows"],
        cell_size_mm=doc["grid"]["cell_size_mm"],
        energized=frozenset(doc["grid"]["energized"]),
    )
    drive = DriveConfig(**doc["drive"])
    fingers = {}
    for fd in doc["fingers"]:
        fingers[fd["id"]] = Finger(
            id=fd["id"],
            x_mm=fd["x_mm"],
            y_mm=fd["y_mm"],
            in_contact=fd.get("in_contact", True),
            grounded=fd.get("grounded", True),
            mech=FingerMech(**fd["mech"]),
        )
    return DeviceState(
        grid=grid,
        fingers=fingers,
        drive=drive,
        dt_s=doc.get("dt_s", SIM_STEP_S),
        leak_gain=doc.get("leak_gain", LEAK_GAIN),
        us_ride_um=doc.get("us_ride_um", ULTRASONIC_RIDE_UM),
        sensor_tau_s=doc.get("sensor_tau_s", SENSOR_TAU_S),
    )


def save_scenario(state: DeviceState, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_json(state), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scenario(path) -> DeviceState:
    with open(path) as fh:
        return scenario_from_json(json.load(fh))
