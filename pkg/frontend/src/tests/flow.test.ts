import assert from "node:assert/strict";
import { test } from "node:test";

import { SessionFlow } from "../core/flow.js";
import { NextPayload, TrialDescriptor } from "../core/types.js";

function trial(overrides: Partial<TrialDescriptor> = {}): TrialDescriptor {
  return {
    token: "t0000",
    ordinal: 0,
    section: 1,
    duty_pct: 25,
    duration_ms: 41,
    presentation: 0,
    block: 0,
    direction: "DECREASING",
    round_no: null,
    progress: { section: 1, block: 1, n_blocks: 6, trial_in_block: 1, block_size: 26 },
    ...overrides,
  };
}

function payload(pending: TrialDescriptor | null, presented = false): NextPayload {
  return { pending, phase: { section: pending?.section ?? null, expects: "" }, presented };
}

test("controls stay locked until the stimulus is presented", () => {
  const flow = new SessionFlow();
  flow.ingestNext(payload(trial()));
  assert.equal(flow.stage, "ready");
  assert.equal(flow.canRespond, false);
  assert.throws(() => flow.chooseAcceptable(true));
  flow.beginPresentation();
  assert.equal(flow.canRespond, false);
  flow.presentationDone();
  assert.equal(flow.canRespond, true);
});

test("section-1 submission requires both answers and travels atomically", () => {
  const flow = new SessionFlow();
  flow.ingestNext(payload(trial(), true));
  assert.equal(flow.buildSection1(), null);
  flow.chooseAcceptable(true);
  assert.equal(flow.buildSection1(), null);
  flow.choosePercept("PULSE");
  assert.deepEqual(flow.buildSection1(), {
    token: "t0000",
    acceptable: true,
    percept: "PULSE",
  });
});

test("ratings are rejected outside 0..7 and outside section 2", () => {
  const flow = new SessionFlow();
  flow.ingestNext(payload(trial(), true));
  assert.equal(flow.buildRating(5), null); // section 1 trial
  flow.ingestNext(
    payload(
      trial({
        section: 2,
        round_no: 2,
        progress: { section: 2, round: 2, trial_in_round: 3, round_size: 21 },
      }),
      true,
    ),
  );
  assert.equal(flow.buildRating(8), null);
  assert.equal(flow.buildRating(-1), null);
  assert.deepEqual(flow.buildRating(7), { token: "t0000", rating: 7 });
});

test("progress hides stimulus parameters from the subject", () => {
  const flow = new SessionFlow();
  flow.ingestNext(payload(trial()));
  const experimenter = flow.progressText("experimenter");
  const subject = flow.progressText("subject");
  assert.match(experimenter, /duty 25%/);
  assert.match(experimenter, /41 ms/);
  assert.doesNotMatch(subject, /25%/);
  assert.doesNotMatch(subject, /41/);
});

test("decreasing blocks read as sweeping down", () => {
  const flow = new SessionFlow();
  flow.ingestNext(payload(trial()));
  assert.match(flow.progressText("subject"), /sweeping down/);
  flow.ingestNext(payload(trial({ direction: "INCREASING" })));
  assert.match(flow.progressText("subject"), /sweeping up/);
});

test("round-2 progress counts its 21 presentations", () => {
  const flow = new SessionFlow();
  flow.ingestNext(
    payload(
      trial({
        section: 2,
        round_no: 2,
        progress: { section: 2, round: 2, trial_in_round: 4, round_size: 21 },
      }),
      true,
    ),
  );
  assert.match(flow.progressText("subject"), /round 2 · trial 4\/21/);
  assert.ok(Math.abs(flow.progressFraction() - 3 / 21) < 1e-12);
});

test("completion state", () => {
  const flow = new SessionFlow();
  flow.ingestNext(payload(null));
  assert.equal(flow.stage, "complete");
  assert.equal(flow.progressText("subject"), "session complete");
  assert.equal(flow.progressFraction(), 1);
});
