import { ServiceClient } from "../core/api.js";
import { SessionFlow } from "../core/flow.js";
import { applyFrame, GaugeState, initialGauge } from "../core/telemetry.js";
import { GAUGE_MAX_MN, Role, TelemetryFrame } from "../core/types.js";

const client = new ServiceClient("");
const flow = new SessionFlow();
let gauge: GaugeState = initialGauge();
let sessionId = "";
let role: Role = "experimenter";
let ws: WebSocket | null = null;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element ${id}`);
  return el as T;
};

function log(line: string): void {
  const pane = $("log");
  pane.textContent += line + "\n";
  pane.scrollTop = pane.scrollHeight;
}

function renderGauge(): void {
  const pct = Math.min(100, (gauge.valueMn / GAUGE_MAX_MN) * 100);
  $("gauge-fill").style.height = `${pct}%`;
  $("gauge-label").textContent = `${Math.round(gauge.valueMn)} mN`;
  $("led").classList.toggle("on", gauge.led);
}

function renderControls(): void {
  const s1 = $("section1-controls");
  const s2 = $("section2-controls");
  const done = $("complete-note");
  s1.classList.toggle("hidden", !(flow.pending?.section === 1));
  s2.classList.toggle("hidden", !(flow.pending?.section === 2));
  done.classList.toggle("hidden", flow.stage !== "complete");
  const respond = flow.canRespond;
  s1.querySelectorAll("button").forEach((b) => ((b as HTMLButtonElement).disabled = !respond));
  s2.querySelectorAll("button").forEach((b) => ((b as HTMLButtonElement).disabled = !respond));
  ($("present") as HTMLButtonElement).disabled = flow.stage !== "ready";
  $("progress-text").textContent = flow.progressText(role);
  $("progress-fill").style.width = `${flow.progressFraction() * 100}%`;
}

async function refresh(): Promise<void> {
  flow.ingestNext(await client.next(sessionId));
  renderControls();
}

function connectTelemetry(): void {
  ws = client.telemetry(
    sessionId,
    (frame: TelemetryFrame) => {
      gauge = applyFrame(gauge, frame);
      renderGauge();
      if (frame.event === "trigger") log(`trigger at t=${frame.t.toFixed(3)} s`);
    },
    () => {
      $("banner").classList.remove("hidden");
      setTimeout(() => {
        if (sessionId) {
          connectTelemetry();
          $("banner").classList.add("hidden");
        }
      }, 1000);
    },
  );
}

async function start(resume: boolean): Promise<void> {
  const label = ($("label") as HTMLInputElement).value || "subject";
  const seed = Number(($("seed") as HTMLInputElement).value) || 1;
  sessionId = resume
    ? ($("resume-id") as HTMLInputElement).value.trim()
    : await client.createLive(seed, label);
  $("setup").classList.add("hidden");
  $("console").classList.remove("hidden");
  log(`session ${sessionId}`);
  connectTelemetry();
  await refresh();
}

async function present(): Promise<void> {
  if (flow.stage !== "ready" || !flow.pending) return;
  flow.beginPresentation();
  renderControls();
  gauge = initialGauge();
  const result = await client.present(sessionId, flow.pending.token, { realtime: true });
  log(`${flow.pending.token}: presented, triggered=${result.triggered}`);
  flow.presentationDone();
  renderControls();
}

async function submitSection1(): Promise<void> {
  const body = flow.buildSection1();
  if (!body) return; // both answers required before anything is sent
  flow.markSubmitting();
  renderControls();
  const ack = await client.respond(sessionId, body);
  log(`${body.token}: ${body.acceptable ? "YES" : "NO"} / ${body.percept} (ack ${ack.recorded})`);
  await refresh();
}

async function submitRating(rating: number): Promise<void> {
  const body = flow.buildRating(rating);
  if (!body) return;
  flow.markSubmitting();
  renderControls();
  const ack = await client.respond(sessionId, body);
  log(`${body.token}: rating ${rating} (ack ${ack.recorded})`);
  await refresh();
}

function wire(): void {
  $("start").addEventListener("click", () => void start(false));
  $("resume").addEventListener("click", () => void start(true));
  $("present").addEventListener("click", () => void present());

  document.querySelectorAll("#role-toggle input").forEach((el) =>
    el.addEventListener("change", (ev) => {
      role = (ev.target as HTMLInputElement).value as Role;
      document.body.classList.toggle("role-subject", role === "subject");
      renderControls();
    }),
  );

  $("q-accept")
    .querySelectorAll("button")
    .forEach((b) =>
      b.addEventListener("click", () => {
        flow.chooseAcceptable(b.getAttribute("data-accept") === "yes");
        b.parentElement!.querySelectorAll("button").forEach((x) => x.classList.remove("selected"));
        b.classList.add("selected");
        void submitSection1();
      }),
    );
  $("q-percept")
    .querySelectorAll("button")
    .forEach((b) =>
      b.addEventListener("click", () => {
        flow.choosePercept(b.getAttribute("data-percept") as "PULSE" | "OSCILLATION");
        b.parentElement!.querySelectorAll("button").forEach((x) => x.classList.remove("selected"));
        b.classList.add("selected");
        void submitSection1();
      }),
    );

  const ratings = $("rating-buttons");
  for (let r = 0; r <= 7; r += 1) {
    const b = document.createElement("button");
    b.textContent = String(r);
    b.addEventListener("click", () => void submitRating(r));
    ratings.appendChild(b);
  }
  renderControls();
}

wire();
