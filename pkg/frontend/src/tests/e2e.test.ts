import assert from "node:assert/strict";
import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { after, before, test } from "node:test";

import { ServiceClient } from "../core/api.js";
import { applyFrame, initialGauge } from "../core/telemetry.js";
import { TelemetryFrame, TrialDescriptor } from "../core/types.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;

async function waitForService(): Promise<void> {
  for (let i = 0; i < 100; i += 1) {
    try {
      const resp = await fetch(`${BASE}/sessions`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error("service did not come up");
}

before(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), "clicksim-e2e-"));
  service = spawn(
    "python3",
    ["-m", "clicksim.cli", "serve", "--port", String(PORT), "--data-dir", dataDir],
    { stdio: "ignore" },
  );
  await waitForService();
});

after(() => {
  service.kill("SIGKILL");
});

// Scripted press: rises through the 600 mN threshold once, then releases.
const SCRIPTED_PROFILE = [0, 100, 250, 400, 550, 700, 850, 900, 900, 650, 350, 120, 0, 0];

test("live section-1 block over the real service", async () => {
  const client = new ServiceClient(BASE);
  const sessionId = await client.createLive(42, "e2e");

  const frames: TelemetryFrame[] = [];
  const ws = client.telemetry(sessionId, (frame) => frames.push(frame));
  await new Promise<void>((resolve, reject) => {
    ws.onopen = () => resolve();
    ws.onerror = (err) => reject(err);
  });

  let firstTrial: TrialDescriptor | null = null;
  for (let i = 0; i < 26; i += 1) {
    const next = await client.next(sessionId);
    assert.ok(next.pending, `trial ${i} pending`);
    const pending = next.pending;
    if (i === 0) firstTrial = pending;
    assert.equal(pending.section, 1);

    frames.length = 0;
    const presented = await client.present(sessionId, pending.token, {
      profile_mn: SCRIPTED_PROFILE,
      profile_dt_s: 0.05,
    });
    assert.equal(presented.triggered, true);

    // Wait until every telemetry frame of the presentation arrived.
    for (let spin = 0; spin < 200 && frames.length < presented.frames; spin += 1) {
      await new Promise((r) => setTimeout(r, 10));
    }
    assert.equal(frames.length, presented.frames);

    // LED criterion: on exactly at the first frame whose force reaches 600 mN.
    let gauge = initialGauge();
    for (const frame of frames) gauge = applyFrame(gauge, frame);
    const expectedOn = frames.findIndex((f) => f.normal_mN >= 600);
    assert.notEqual(expectedOn, -1);
    assert.equal(gauge.ledOnFrame, expectedOn);
    for (const frame of frames) assert.equal(frame.led, frame.normal_mN >= 600);
    assert.equal(gauge.triggerFrames.length, 1);

    const ack = await client.respond(sessionId, {
      token: pending.token,
      acceptable: pending.duration_ms >= 41 && pending.duration_ms <= 141,
      percept: pending.duration_ms <= 51 ? "PULSE" : "OSCILLATION",
    });
    assert.equal(ack.recorded, true);
  }

  // One full sweep block is finished: 26 durable records with both answers.
  const record = (await client.session(sessionId)) as {
    trials: { section: number; block: number; acceptable: boolean | null; percept: string | null }[];
  };
  assert.equal(record.trials.length, 26);
  for (const trial of record.trials) {
    assert.equal(trial.section, 1);
    assert.equal(trial.block, firstTrial!.block);
    assert.notEqual(trial.acceptable, null);
    assert.ok(trial.percept === "PULSE" || trial.percept === "OSCILLATION");
  }

  ws.close();
});
