import { TelemetryFrame } from "./types.js";

/**
 * Gauge view state derived purely from telemetry frames.
 *
 * The LED mirrors the `led` field of the latest frame verbatim: no
 * client-side smoothing or debouncing across the threshold, so it turns on
 * exactly on the frame where the normal force first reaches the threshold.
 */
export interface GaugeState {
  valueMn: number;
  lateralMn: number;
  led: boolean;
  frameCount: number;
  ledOnFrame: number | null;
  ledTransitions: number;
  triggerFrames: number[];
}

export function initialGauge(): GaugeState {
  return {
    valueMn: 0,
    lateralMn: 0,
    led: false,
    frameCount: 0,
    ledOnFrame: null,
    ledTransitions: 0,
    triggerFrames: [],
  };
}

export function applyFrame(state: GaugeState, frame: TelemetryFrame): GaugeState {
  const turnedOn = !state.led && frame.led;
  return {
    valueMn: frame.normal_mN,
    lateralMn: frame.lateral_mN,
    led: frame.led,
    frameCount: state.frameCount + 1,
    ledOnFrame: turnedOn && state.ledOnFrame === null ? state.frameCount : state.ledOnFrame,
    ledTransitions: state.ledTransitions + (turnedOn ? 1 : 0),
    triggerFrames:
      frame.event === "trigger"
        ? [...state.triggerFrames, state.frameCount]
        : state.triggerFrames,
  };
}
