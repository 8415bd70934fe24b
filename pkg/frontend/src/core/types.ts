export interface TelemetryFrame {
  t: number;
  normal_mN: number;
  lateral_mN: number;
  led: boolean;
  event?: string;
  token?: string;
}

export interface TrialDescriptor {
  token: string;
  ordinal: number;
  section: number;
  duty_pct: number;
  duration_ms: number;
  presentation: number;
  block: number | null;
  direction: string | null;
  round_no: number | null;
  progress: Record<string, number>;
}

export interface PhaseInfo {
  section: number | null;
  expects: string | null;
  complete?: boolean;
}

export interface NextPayload {
  pending: TrialDescriptor | null;
  phase: PhaseInfo;
  presented?: boolean;
}

export interface PresentResult {
  token: string;
  frames: number;
  triggered: boolean;
  trigger_t_s: number[];
}

export interface Ack {
  token: string;
  recorded: boolean;
  complete: boolean;
}

export type Role = "experimenter" | "subject";

export const LED_THRESHOLD_MN = 600;
export const GAUGE_MAX_MN = 1500;
