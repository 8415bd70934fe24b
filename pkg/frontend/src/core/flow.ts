import { NextPayload, Role, TrialDescriptor } from "./types.js";

export type Stage =
  | "loading"
  | "ready"
  | "presenting"
  | "awaiting-response"
  | "submitting"
  | "complete";

export interface Section1Answer {
  acceptable: boolean | null;
  percept: "PULSE" | "OSCILLATION" | null;
}

/**
 * Client-side session state machine.
 *
 * Every transition is driven by a service payload; nothing here survives a
 * reload that cannot be rebuilt from `GET next`.  Response controls are
 * enabled only in the awaiting-response stage, and a section-1 submission is
 * built only once both answers are chosen, so the pair always travels
 * atomically.
 */
export class SessionFlow {
  stage: Stage = "loading";
  pending: TrialDescriptor | null = null;
  answer: Section1Answer = { acceptable: null, percept: null };

  ingestNext(payload: NextPayload): void {
    this.pending = payload.pending;
    this.answer = { acceptable: null, percept: null };
    if (payload.pending === null) {
      this.stage = "complete";
    } else if (payload.presented) {
      this.stage = "awaiting-response";
    } else {
      this.stage = "ready";
    }
  }

  beginPresentation(): void {
    if (this.stage !== "ready") throw new Error(`cannot present in stage ${this.stage}`);
    this.stage = "presenting";
  }

  presentationDone(): void {
    if (this.stage !== "presenting") throw new Error("no presentation in flight");
    this.stage = "awaiting-response";
  }

  get canRespond(): boolean {
    return this.stage === "awaiting-response" && this.pending !== null;
  }

  chooseAcceptable(value: boolean): void {
    if (!this.canRespond) throw new Error("not awaiting a response");
    this.answer.acceptable = value;
  }

  choosePercept(value: "PULSE" | "OSCILLATION"): void {
    if (!this.canRespond) throw new Error("not awaiting a response");
    this.answer.percept = value;
  }

  /** Both section-1 answers as one payload, or null while incomplete. */
  buildSection1(): { token: string; acceptable: boolean; percept: string } | null {
    if (!this.canRespond || this.pending === null || this.pending.section !== 1) return null;
    if (this.answer.acceptable === null || this.answer.percept === null) return null;
    return {
      token: this.pending.token,
      acceptable: this.answer.acceptable,
      percept: this.answer.percept,
    };
  }

  buildRating(rating: number): { token: string; rating: number } | null {
    if (!this.canRespond || this.pending === null || this.pending.section !== 2) return null;
    if (!Number.isInteger(rating) || rating < 0 || rating > 7) return null;
    return { token: this.pending.token, rating };
  }

  markSubmitting(): void {
    if (!this.canRespond) throw new Error("nothing to submit");
    this.stage = "submitting";
  }

  /** Progress description; stimulus parameters are shown only to the experimenter. */
  progressText(role: Role): string {
    const p = this.pending;
    if (p === null) return this.stage === "complete" ? "session complete" : "";
    let text: string;
    if (p.section === 1) {
      const g = p.progress;
      text = `section 1 · block ${g.block}/${g.n_blocks} · trial ${g.trial_in_block}/${g.block_size}`;
      if (p.direction === "DECREASING") {
        text += " · sweeping down";
      } else if (p.direction === "INCREASING") {
        text += " · sweeping up";
      }
    } else {
      const g = p.progress;
      text = `section 2 · round ${g.round} · trial ${g.trial_in_round}/${g.round_size}`;
    }
    if (role === "experimenter") {
      text += ` · duty ${p.duty_pct}% · ${p.duration_ms} ms`;
    }
    return text;
  }

  /** Fraction of the current block or round already presented. */
  progressFraction(): number {
    const p = this.pending;
    if (p === null) return this.stage === "complete" ? 1 : 0;
    const g = p.progress;
    if (p.section === 1) return (g.trial_in_block - 1) / g.block_size;
    return (g.trial_in_round - 1) / g.round_size;
  }
}
