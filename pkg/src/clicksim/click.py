"""Click-rendering engine: threshold trigger with hysteresis, one stimulus per press.

The engine watches the pressing (normal) force.  When it crosses the trigger
threshold upward while armed, exactly one rectangular force stimulus fires;
the engine re-arms only after the stimulus completes and the force falls
below the release threshold, so holding or wobbling above release never
retriggers.  A started stimulus always runs to completion.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .device import DeviceState, PressProfile, Trace, apply_press_profile
from .drive import StimulusParams, command_force

TRIGGER_THRESHOLD_MN = 600.0
RELEASE_THRESHOLD_MN = 300.0


class Mode(enum.Enum):
    IDLE = "IDLE"
    ARMED = "ARMED"
    TRIGGERED = "TRIGGERED"
    REFRACTORY = "REFRACTORY"


@dataclass(frozen=True)
class TriggerEvent:
    t_s: float
    params: StimulusParams
    finger_id: str | None = None


@dataclass
class ClickEngine:
    """Deterministic four-state trigger machine; single-owner, never shared."""

    params: StimulusParams | None = None
    trigger_threshold_mn: float = TRIGGER_THRESHOLD_MN
    release_threshold_mn: float = RELEASE_THRESHOLD_MN
    finger_id: str | None = None
    mode: Mode = Mode.IDLE
    active_stimulus: tuple[StimulusParams, float] | None = None
    events: list[TriggerEvent] = field(default_factory=list)
    _last_t_s: float | None = None

    def __post_init__(self) -> None:
        if not self.release_threshold_mn < self.trigger_threshold_mn:
            raise ValueError("release threshold must be below trigger threshold")

    def update(self, normal_force_mn: float, t_s: float) -> TriggerEvent | None:
        """Advance the machine for one sample; returns the trigger event if fired."""
        if normal_force_mn < 0.0:
            raise ValueError("normal force must be non-negative")
        if self._last_t_s is not None and t_s < self._last_t_s:
            raise ValueError("time must be monotone non-decreasing")
        self._last_t_s = t_s

        if self.mode is Mode.TRIGGERED and self.active_stimulus is not None:
            params, start = self.active_stimulus
            if (t_s - start) * 1e3 >= params.duration_ms:
                self.active_stimulus = None
                self.mode = Mode.REFRACTORY
        if self.mode is Mode.REFRACTORY and normal_force_mn < self.release_threshold_mn:
            self.mode = Mode.ARMED
        if self.mode is Mode.IDLE and normal_force_mn > 0.0:
            self.mode = Mode.ARMED
        if self.mode is Mode.ARMED and normal_force_mn >= self.trigger_threshold_mn:
            if self.params is None:
                raise ValueError("no stimulus parameters configured")
            self.mode = Mode.TRIGGERED
            self.active_stimulus = (self.params, t_s)
            event = TriggerEvent(t_s=t_s, params=self.params, finger_id=self.finger_id)
            self.events.append(event)
            return event
        return None

    def command(self, t_s: float) -> float:
        """Lateral force command (mN) at ``t_s`` for the active stimulus, else 0."""
        if self.active_stimulus is None:
            return 0.0
        params, start = self.active_stimulus
        return command_force(params, (t_s - start) * 1e3)


def render_click(
    params: StimulusParams,
    state: DeviceState,
    engine: ClickEngine | None = None,
    profile=None,
    finger_id: str | None = None,
    duration_s: float = 1.0,
    align_trigger_at_s: float = 0.4,
) -> Trace:
    """Press on the device and record the full trace of one rendered click.

    The click engine is wired between the press profile and the force
    command; if a trigger fires, the time axis is shifted so the (first)
    trigger sits at ``align_trigger_at_s``.  Trigger times land in
    ``trace.meta["trigger_t_s"]``.
    """
    if finger_id is None:
        finger_id = sorted(state.fingers)[0]
    if not state.fingers[finger_id].in_contact:
        raise ValueError("pressing finger must be in contact")
    if engine is None:
        engine = ClickEngine()
    engine.params = params
    engine.finger_id = finger_id
    if profile is None:
        profile = PressProfile()

    trigger_idx: list[int] = []

    def on_step(i: int, t_s: float, normal_mn: float) -> float:
        if engine.update(normal_mn, t_s) is not None:
            trigger_idx.append(i)
        return engine.command(t_s)

    trace = apply_press_profile(
        state, profile=profile, finger_id=finger_id, duration_s=duration_s, on_step=on_step
    )
    triggers = [e.t_s for e in engine.events]
    if triggers:
        trace.t_s = trace.t_s + (align_trigger_at_s - triggers[0])
        triggers = [t + (align_trigger_at_s - triggers[0]) for t in triggers]
    trace.meta["trigger_t_s"] = triggers
    trace.meta["trigger_idx"] = trigger_idx
    trace.meta["params"] = {
        "duty_cycle_pct": params.duty_cycle_pct,
        "duration_ms": params.duration_ms,
        "amplitude_pp_mn": params.amplitude_pp_mn,
    }
    return trace
