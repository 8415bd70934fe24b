"""Drive-signal synthesis: dual ultrasonic carriers and the click force command.

Lateral fingertip force comes from two near-resonant carriers (an in-plane
piezo oscillation and an electroadhesion excitation).  When both run, the
force envelope moves at the carrier difference frequency; flipping the
relative carrier phase by 180 degrees flips the force direction.  A click
stimulus is one cycle of a rectangular force command whose sign schedule is
realized by that phase flip.

Carriers are kept as analytic amplitude/phase envelopes; the simulation
clock only has to resolve the envelope band, not the carriers themselves.
A debug render of the carrier product is available for inspection.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_PIEZO_FREQ_HZ = 30_000.0
DEFAULT_EA_FREQ_HZ = 29_990.0
DEFAULT_AMPLITUDE_PP_MN = 500.0

#: Envelope-band simulation step (100 kHz).
SIM_STEP_S = 1e-5

#: Sampling rate for the carrier-resolved debug render.
DEBUG_RENDER_FS_HZ = 300_000.0

DURATION_MIN_MS = 1.0
DURATION_MAX_MS = 251.0


@dataclass(frozen=True)
class DriveConfig:
    """Carrier frequencies, relative phase and electroadhesion gate."""

    piezo_freq_hz: float = DEFAULT_PIEZO_FREQ_HZ
    ea_freq_hz: float = DEFAULT_EA_FREQ_HZ
    phase_deg: float = 0.0
    ea_enabled: bool = True

    def __post_init__(self) -> None:
        if self.piezo_freq_hz <= 0.0 or self.ea_freq_hz <= 0.0:
            raise ValueError("carrier frequencies must be positive")
        if float(self.phase_deg) not in (0.0, 180.0):
            raise ValueError("phase must be 0 or 180 degrees")


@dataclass(frozen=True)
class StimulusParams:
    """One click stimulus: duty cycle (%), duration (ms), force amplitude (mN pp)."""

    duty_cycle_pct: float
    duration_ms: float
    amplitude_pp_mn: float = DEFAULT_AMPLITUDE_PP_MN

    def __post_init__(self) -> None:
        if not 0.0 < self.duty_cycle_pct <= 100.0:
            raise ValueError("duty cycle must be in (0, 100]")
        if not DURATION_MIN_MS <= self.duration_ms <= DURATION_MAX_MS:
            raise ValueError(
                f"duration must be in [{DURATION_MIN_MS:g}, {DURATION_MAX_MS:g}] ms"
            )
        if self.amplitude_pp_mn <= 0.0:
            raise ValueError("amplitude must be positive")

    @property
    def initial_pulse_width_ms(self) -> float:
        """Width of the positive-force phase; strictly positive by construction."""
        return self.duty_cycle_pct / 100.0 * self.duration_ms


def beat_frequency(cfg: DriveConfig) -> float:
    """Envelope frequency of the lateral force under continuous dual-carrier drive."""
    return abs(cfg.piezo_freq_hz - cfg.ea_freq_hz)


def command_force(params: StimulusParams, t_ms: float) -> float:
    """Commanded lateral force (mN) at time ``t_ms`` since the stimulus trigger.

    Positive half-amplitude during the initial pulse, negative for the rest
    of the single cycle, zero afterwards.
    """
    if t_ms < 0.0:
        raise ValueError("time before trigger")
    half = 0.5 * params.amplitude_pp_mn
    if t_ms < params.initial_pulse_width_ms:
        return half
    if t_ms < params.duration_ms:
        return -half
    return 0.0


def phase_for_force_sign(sign: int) -> float:
    """Carrier phase (degrees) that realizes a force of the given sign.

    +1 pushes the finger left (0 deg), -1 pushes it right (180 deg).
    """
    if sign == 1:
        return 0.0
    if sign == -1:
        return 180.0
    raise ValueError("sign must be +1 or -1")


def scheduled_phase(params: StimulusParams, t_ms: float) -> float | None:
    """Phase actually driven at ``t_ms`` during a stimulus; None when idle."""
    f = command_force(params, t_ms)
    if f == 0.0:
        return None
    return phase_for_force_sign(1 if f > 0.0 else -1)


def beat_force(cfg: DriveConfig, amplitude_pp_mn: float, t_s: float) -> float:
    """Lateral force (mN) at ``t_s`` under continuous dual-carrier drive."""
    if not cfg.ea_enabled:
        return 0.0
    f_b = beat_frequency(cfg)
    phi = math.radians(cfg.phase_deg)
    return 0.5 * amplitude_pp_mn * math.cos(2.0 * math.pi * f_b * t_s + phi)


def sample_beat_force(
    cfg: DriveConfig,
    amplitude_pp_mn: float = DEFAULT_AMPLITUDE_PP_MN,
    duration_s: float = 2.0,
    dt_s: float = SIM_STEP_S,
) -> tuple[np.ndarray, np.ndarray]:
    """Sampled beat-force waveform; returns (t_s, force_mN)."""
    t = np.arange(0.0, duration_s, dt_s)
    if not cfg.ea_enabled:
        return t, np.zeros_like(t)
    f_b = beat_frequency(cfg)
    phi = math.radians(cfg.phase_deg)
    return t, 0.5 * amplitude_pp_mn * np.cos(2.0 * math.pi * f_b * t + phi)


def sample_command_force(
    params: StimulusParams,
    duration_s: float | None = None,
    dt_s: float = SIM_STEP_S,
) -> tuple[np.ndarray, np.ndarray]:
    """Sampled single-cycle command waveform; returns (t_s, force_mN)."""
    if duration_s is None:
        duration_s = params.duration_ms * 1e-3
    t = np.arange(0.0, duration_s, dt_s)
    t_ms = t * 1e3
    half = 0.5 * params.amplitude_pp_mn
    force = np.where(
        t_ms < params.initial_pulse_width_ms,
        half,
        np.where(t_ms < params.duration_ms, -half, 0.0),
    )
    return t, force


def envelope_frequency_hz(t_s: np.ndarray, force_mn: np.ndarray) -> float:
    """Estimate the force-envelope frequency by zero-crossing count.

    Counts sign changes of the waveform; two crossings per period.
    """
    samples = np.asarray(force_mn, dtype=float)
    signs = np.sign(samples)
    nonzero = signs[signs != 0.0]
    crossings = int(np.count_nonzero(np.diff(nonzero) != 0.0))
    span_s = float(t_s[-1] - t_s[0])
    if span_s <= 0.0:
        raise ValueError("waveform too short")
    return crossings / (2.0 * span_s)


def render_carrier_product(
    cfg: DriveConfig,
    amplitude_pp_mn: float = DEFAULT_AMPLITUDE_PP_MN,
    duration_s: float = 0.5,
    fs_hz: float = DEBUG_RENDER_FS_HZ,
) -> tuple[np.ndarray, np.ndarray]:
    """Debug render: carrier-resolved force (product of the two carriers).

    The low-frequency content of the product equals the analytic beat force;
    useful for inspecting what a high-rate capture would look like.
    """
    t = np.arange(0.0, duration_s, 1.0 / fs_hz)
    if not cfg.ea_enabled:
        return t, np.zeros_like(t)
    phi = math.radians(cfg.phase_deg)
    piezo = np.sin(2.0 * math.pi * cfg.piezo_freq_hz * t)
    ea = np.sin(2.0 * math.pi * cfg.ea_freq_hz * t + phi)
    return t, amplitude_pp_mn * piezo * ea


def write_waveform_csv(path, t_s: np.ndarray, force_mn: np.ndarray) -> None:
    """Emit a sampled waveform as CSV with columns t_s, force_mN."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "force_mN"])
        for t, f in zip(t_s, force_mn):
            writer.writerow([repr(float(t)), repr(float(f))])
