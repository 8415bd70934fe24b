"""Session service: HTTP/JSON endpoints, live telemetry, durable session files.

Sessions persist as versioned JSON documents in the data directory; every
response is written to disk before it is acknowledged, so a crashed service
resumes mid-session from the stored cursor with the identical remaining
plan.  Live sessions stream device telemetry (50 Hz decimation of the
simulation) over a WebSocket while a trial presentation plays.
"""

from __future__ import annotations

import asyncio
import math
import os
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import analysis
from .click import ClickEngine, render_click
from .device import PressProfile, single_finger_state
from .protocol import ExperimentSession, PhaseError, SessionRecord, run_session
from .study import _session_seed
from .subject import SimulatedSubjectResponder, default_population

TELEMETRY_HZ = 50.0
LED_THRESHOLD_MN = 600.0

DATA_DIR_ENV = "CLICKSIM_DATA_DIR"


def _asdict_pending(pending) -> dict:
    return {
        "token": pending.token,
        "ordinal": pending.ordinal,
        "section": pending.section,
        "duty_pct": pending.duty_pct,
        "duration_ms": pending.duration_ms,
        "presentation": pending.presentation,
        "block": pending.block,
        "direction": pending.direction,
        "round_no": pending.round_no,
        "progress": pending.progress,
    }


@dataclass
class LiveSession:
    """One live session: engine, persistence, telemetry fan-out, response cache."""

    engine: ExperimentSession
    path: str
    lock: threading.Lock = field(default_factory=threading.Lock)
    presented_token: str | None = None
    acks: dict[str, dict] = field(default_factory=dict)
    subscribers: list = field(default_factory=list)

    def persist(self) -> None:
        record = self.engine.record()
        tmp = self.path + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(record.dumps())
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)


class SessionStore:
    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        os.makedirs(data_dir, exist_ok=True)
        self.live: dict[str, LiveSession] = {}

    def _path(self, session_id: str) -> str:
        return os.path.join(self.data_dir, f"{session_id}.json")

    def list_ids(self) -> list[str]:
        return sorted(
            f[: -len(".json")] for f in os.listdir(self.data_dir) if f.endswith(".json")
        )

    def create_live(self, seed: int, label: str) -> LiveSession:
        session_id = f"live-{label}-{seed}"
        path = self._path(session_id)
        if session_id in self.live or os.path.exists(path):
            raise FileExistsError(session_id)
        engine = ExperimentSession(
            seed=seed, responder_id=label, mode="LIVE", session_id=session_id
        )
        live = LiveSession(engine=engine, path=path)
        live.persist()
        self.live[session_id] = live
        return live

    def get_live(self, session_id: str) -> LiveSession:
        if session_id in self.live:
            return self.live[session_id]
        path = self._path(session_id)
        if os.path.exists(path):
            record = SessionRecord.load(path)
            if record.mode != "LIVE":
                raise KeyError(session_id)
            engine = ExperimentSession.from_record(record)
            live = LiveSession(engine=engine, path=path)
            self.live[session_id] = live
            return live
        raise KeyError(session_id)

    def load_record(self, session_id: str) -> SessionRecord:
        if session_id in self.live:
            return self.live[session_id].engine.record()
        path = self._path(session_id)
        if not os.path.exists(path):
            raise KeyError(session_id)
        return SessionRecord.load(path)


class CreateSession(BaseModel):
    mode: str
    seed: int = 0
    label: str = "subject"
    subject_id: str | None = None


class SubmitResponse(BaseModel):
    token: str
    acceptable: bool | None = None
    percept: str | None = None
    rating: int | None = None


class PresentRequest(BaseModel):
    token: str
    peak_mn: float = 900.0
    realtime: bool = False
    profile_mn: list[float] | None = None
    profile_dt_s: float | None = None


def telemetry_frames(trace, decimate_to_hz: float = TELEMETRY_HZ) -> list[dict]:
    """Decimate a trace to telemetry cadence; LED mirrors the 600 mN threshold.

    Trigger events ride on the first frame at or after the crossing sample,
    so they always follow the telemetry sample that caused them.
    """
    stride = max(1, round(1.0 / (decimate_to_hz * trace.dt_s)))
    triggers = list(trace.meta.get("trigger_idx", []))
    frames = []
    for i in range(0, len(trace.t_s), stride):
        frame = {
            "t": float(trace.t_s[i]),
            "normal_mN": float(trace.normal_mn[i]),
            "lateral_mN": float(trace.lateral_mn[i]),
            "led": bool(trace.normal_mn[i] >= LED_THRESHOLD_MN),
        }
        fired = [k for k in triggers if k <= i]
        if fired:
            frame["event"] = "trigger"
            triggers = [k for k in triggers if k > i]
        frames.append(frame)
    return frames


def run_presentation(pending, peak_mn: float = 900.0, profile=None):
    """Simulate the press playback for one pending trial; returns its trace."""
    params = pending.params
    state = single_finger_state()
    if profile is None:
        profile = PressProfile(peak_mn=peak_mn)
    return render_click(params, state, engine=ClickEngine(), profile=profile)


class _SampledProfile:
    """Normal-force profile interpolated from caller-supplied samples."""

    def __init__(self, samples_mn, dt_s: float):
        self.samples = [float(v) for v in samples_mn]
        self.dt_s = dt_s

    def __call__(self, t_s: float) -> float:
        x = t_s / self.dt_s
        i = int(math.floor(x))
        if i < 0 or i >= len(self.samples) - 1:
            return self.samples[-1] if i >= len(self.samples) - 1 else 0.0
        frac = x - i
        return (1.0 - frac) * self.samples[i] + frac * self.samples[i + 1]


def create_app(data_dir: str | None = None, console_dir: str | None = None) -> FastAPI:
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV, "./clicksim-data")
    store = SessionStore(data_dir)
    app = FastAPI(title="clicksim service")
    app.state.store = store

    @app.post("/sessions")
    def create_session(body: CreateSession):
        if body.mode == "SIMULATED":
            roster = default_population(body.seed)
            if body.subject_id is not None:
                roster = [s for s in roster if s.id == body.subject_id]
                if not roster:
                    raise HTTPException(404, f"no such subject: {body.subject_id}")
            records = []
            for subj in roster:
                record = run_session(
                    SimulatedSubjectResponder(subj),
                    seed=_session_seed(body.seed, subj.id),
                    mode="SIMULATED",
                    session_id=f"sim-{body.seed}-{subj.id}",
                )
                record.save(store._path(record.session_id))
                records.append(record.session_id)
            return {"session_ids": records}
        if body.mode == "LIVE":
            try:
                live = store.create_live(body.seed, body.label)
            except FileExistsError as exc:
                raise HTTPException(409, f"session exists: {exc}") from exc
            return {"session_ids": [live.engine.session_id]}
        raise HTTPException(422, "mode must be SIMULATED or LIVE")

    @app.get("/sessions")
    def list_sessions():
        return {"session_ids": store.list_ids()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return store.load_record(session_id).to_json_dict()
        except KeyError:
            raise HTTPException(404, "no such session")

    @app.get("/sessions/{session_id}/next")
    def next_stimulus(session_id: str):
        try:
            live = store.get_live(session_id)
        except KeyError:
            raise HTTPException(404, "no such live session")
        with live.lock:
            pending = live.engine.next_stimulus()
            if pending is None:
                return {"pending": None, "phase": live.engine.phase()}
            return {
                "pending": _asdict_pending(pending),
                "phase": live.engine.phase(),
                "presented": live.presented_token == pending.token,
            }

    @app.post("/sessions/{session_id}/present")
    async def present(session_id: str, body: PresentRequest):
        try:
            live = store.get_live(session_id)
        except KeyError:
            raise HTTPException(404, "no such live session")
        with live.lock:
            pending = live.engine.next_stimulus()
            if pending is None:
                raise HTTPException(409, "session complete")
            if body.token != pending.token:
                raise HTTPException(409, f"expected trial {pending.token}")
            profile = None
            if body.profile_mn is not None:
                profile = _SampledProfile(body.profile_mn, body.profile_dt_s or 0.02)
            trace = run_presentation(pending, peak_mn=body.peak_mn, profile=profile)
            frames = telemetry_frames(trace)
            live.presented_token = pending.token
        for frame in frames:
            payload = dict(frame)
            payload["token"] = pending.token
            for queue in list(live.subscribers):
                queue.put_nowait(payload)
            if body.realtime:
                await asyncio.sleep(1.0 / TELEMETRY_HZ)
        triggered = bool(trace.meta["trigger_t_s"])
        return {
            "token": pending.token,
            "frames": len(frames),
            "triggered": triggered,
            "trigger_t_s": trace.meta["trigger_t_s"],
        }

    @app.post("/sessions/{session_id}/respond")
    def respond(session_id: str, body: SubmitResponse):
        try:
            live = store.get_live(session_id)
        except KeyError:
            raise HTTPException(404, "no such live session")
        with live.lock:
            if body.token in live.acks:
                return live.acks[body.token]
            pending = live.engine.next_stimulus()
            if pending is None:
                raise HTTPException(409, "session complete")
            if body.token != pending.token:
                raise HTTPException(
                    409, f"duplicate or out-of-order token; expected {pending.token}"
                )
            response: dict = {}
            if body.acceptable is not None:
                response["acceptable"] = body.acceptable
            if body.percept is not None:
                response["percept"] = body.percept
            if body.rating is not None:
                response["rating"] = body.rating
            try:
                record = live.engine.submit(response)
            except PhaseError as exc:
                raise HTTPException(409, detail={"error": str(exc), "phase": exc.phase})
            live.persist()
            ack = {
                "token": record.token,
                "recorded": True,
                "complete": live.engine.next_stimulus() is None,
            }
            live.acks[body.token] = ack
            live.presented_token = None
            return ack

    @app.get("/sessions/{session_id}/export/trials.csv")
    def export_trials(session_id: str):
        try:
            record = store.load_record(session_id)
        except KeyError:
            raise HTTPException(404, "no such session")
        return PlainTextResponse("\n".join(record.trials_csv_rows()) + "\n")

    @app.post("/analyze")
    def analyze(body: dict):
        ids = body.get("session_ids") or store.list_ids()
        try:
            records = [store.load_record(sid) for sid in ids]
        except KeyError as exc:
            raise HTTPException(404, f"no such session: {exc}")
        return analysis._jsonable(analysis.study_summary(records))

    @app.websocket("/sessions/{session_id}/telemetry")
    async def telemetry(ws: WebSocket, session_id: str):
        try:
            live = store.get_live(session_id)
        except KeyError:
            await ws.close(code=4404)
            return
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue()
        live.subscribers.append(queue)
        try:
            while True:
                getter = asyncio.ensure_future(queue.get())
                receiver = asyncio.ensure_future(ws.receive())
                done, pending = await asyncio.wait(
                    {getter, receiver}, return_when=asyncio.FIRST_COMPLETED
                )
                for task in pending:
                    task.cancel()
                if receiver in done and receiver.result()["type"] == "websocket.disconnect":
                    break
                if getter in done:
                    await ws.send_json(getter.result())
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            if queue in live.subscribers:
                live.subscribers.remove(queue)

    if console_dir is None:
        candidate = os.path.join(os.path.dirname(__file__), "..", "..", "frontend", "dist")
        console_dir = candidate if os.path.isdir(candidate) else None
    if console_dir and os.path.isdir(console_dir):
        app.mount("/console", StaticFiles(directory=console_dir, html=True), name="console")

        @app.get("/", response_class=HTMLResponse, include_in_schema=False)
        def index():
            with open(os.path.join(console_dir, "index.html")) as fh:
                return fh.read()

    return app


def serve(host: str = "127.0.0.1", port: int = 8000, data_dir: str | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(data_dir=data_dir), host=host, port=port, log_level="warning")
