import pytest
from fastapi.testclient import TestClient

from clicksim.service import create_app, telemetry_frames
from clicksim.click import render_click, ClickEngine
from clicksim.device import single_finger_state
from clicksim.drive import StimulusParams


@pytest.fixture()
def client(tmp_path):
    app = create_app(data_dir=str(tmp_path), console_dir=None)
    with TestClient(app) as c:
        yield c


def _create_live(client, seed=3, label="alice"):
    resp = client.post("/sessions", json={"mode": "LIVE", "seed": seed, "label": label})
    assert resp.status_code == 200
    return resp.json()["session_ids"][0]


def _answer_one(client, sid, answer=None):
    nxt = client.get(f"/sessions/{sid}/next").json()
    pending = nxt["pending"]
    if pending is None:
        return None
    if pending["section"] == 1:
        body = {"token": pending["token"], "acceptable": True, "percept": "PULSE"}
        if answer:
            body.update(answer)
    else:
        body = {"token": pending["token"], "rating": 5}
        if answer:
            body.update(answer)
    resp = client.post(f"/sessions/{sid}/respond", json=body)
    assert resp.status_code == 200, resp.text
    return pending


def test_create_simulated_sessions(client):
    resp = client.post(
        "/sessions", json={"mode": "SIMULATED", "seed": 7, "subject_id": "S01"}
    )
    assert resp.status_code == 200
    ids = resp.json()["session_ids"]
    assert ids == ["sim-7-S01"]
    record = client.get(f"/sessions/{ids[0]}").json()
    assert record["complete"] is True
    assert record["mode"] == "SIMULATED"


def test_unknown_subject_404(client):
    resp = client.post(
        "/sessions", json={"mode": "SIMULATED", "seed": 7, "subject_id": "S99"}
    )
    assert resp.status_code == 404


def test_live_session_flow(client):
    sid = _create_live(client)
    nxt = client.get(f"/sessions/{sid}/next").json()
    assert nxt["pending"]["section"] == 1
    assert nxt["phase"]["section"] == 1
    pending = _answer_one(client, sid)
    assert pending["token"] == "t0000"
    nxt = client.get(f"/sessions/{sid}/next").json()
    assert nxt["pending"]["token"] == "t0001"


def test_rating_rejected_in_section1(client):
    sid = _create_live(client)
    nxt = client.get(f"/sessions/{sid}/next").json()
    token = nxt["pending"]["token"]
    resp = client.post(f"/sessions/{sid}/respond", json={"token": token, "rating": 5})
    assert resp.status_code == 409
    detail = resp.json()["detail"]
    assert "section1" in detail["error"]


def test_duplicate_submission_is_idempotent(client):
    sid = _create_live(client)
    nxt = client.get(f"/sessions/{sid}/next").json()
    body = {"token": nxt["pending"]["token"], "acceptable": False, "percept": "PULSE"}
    first = client.post(f"/sessions/{sid}/respond", json=body).json()
    again = client.post(f"/sessions/{sid}/respond", json=body).json()
    assert first == again
    record = client.get(f"/sessions/{sid}").json()
    assert len(record["trials"]) == 1


def test_out_of_order_token_rejected(client):
    sid = _create_live(client)
    resp = client.post(
        f"/sessions/{sid}/respond",
        json={"token": "t0099", "acceptable": True, "percept": "PULSE"},
    )
    assert resp.status_code == 409


def test_crash_resume_same_plan(client, tmp_path):
    sid = _create_live(client, seed=11)
    seen = [_answer_one(client, sid)["duration_ms"] for _ in range(5)]
    upcoming = client.get(f"/sessions/{sid}/next").json()["pending"]

    # Fresh app over the same data directory: state reloads from disk.
    app2 = create_app(data_dir=str(tmp_path), console_dir=None)
    with TestClient(app2) as client2:
        record = client2.get(f"/sessions/{sid}").json()
        assert len(record["trials"]) == 5
        assert [t["duration_ms"] for t in record["trials"]] == seen
        resumed = client2.get(f"/sessions/{sid}/next").json()["pending"]
        assert resumed == upcoming


def test_telemetry_stream_led_and_trigger(client):
    sid = _create_live(client)
    token = client.get(f"/sessions/{sid}/next").json()["pending"]["token"]
    with client.websocket_connect(f"/sessions/{sid}/telemetry") as ws:
        resp = client.post(
            f"/sessions/{sid}/present", json={"token": token, "realtime": False}
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["triggered"] is True
        frames = [ws.receive_json() for _ in range(body["frames"])]
    led_states = [f["led"] for f in frames]
    first_on = led_states.index(True)
    # LED turns on exactly at the first frame whose force reaches 600 mN.
    for i, frame in enumerate(frames):
        assert frame["led"] == (frame["normal_mN"] >= 600.0)
    transitions = sum(
        1 for a, b in zip(led_states, led_states[1:]) if not a and b
    )
    assert transitions == 1
    assert first_on > 0
    events = [f for f in frames if f.get("event") == "trigger"]
    assert len(events) == 1
    # The trigger event rides at/after the causing crossing frame.
    assert frames.index(events[0]) >= first_on


def test_present_requires_current_token(client):
    sid = _create_live(client)
    resp = client.post(f"/sessions/{sid}/present", json={"token": "t0042"})
    assert resp.status_code == 409


def test_scripted_profile_below_threshold_never_triggers(client):
    sid = _create_live(client)
    token = client.get(f"/sessions/{sid}/next").json()["pending"]["token"]
    profile = [0.0, 200.0, 400.0, 500.0, 400.0, 200.0, 0.0, 0.0]
    resp = client.post(
        f"/sessions/{sid}/present",
        json={"token": token, "profile_mn": profile, "profile_dt_s": 0.1},
    )
    assert resp.status_code == 200
    assert resp.json()["triggered"] is False


def test_sessions_do_not_interleave(client):
    sid_a = _create_live(client, seed=1, label="a")
    sid_b = _create_live(client, seed=2, label="b")
    for _ in range(3):
        _answer_one(client, sid_a)
    _answer_one(client, sid_b)
    rec_a = client.get(f"/sessions/{sid_a}").json()
    rec_b = client.get(f"/sessions/{sid_b}").json()
    assert len(rec_a["trials"]) == 3
    assert len(rec_b["trials"]) == 1
    assert {t["responder_id"] for t in rec_a["trials"]} == {"a"}
    assert {t["responder_id"] for t in rec_b["trials"]} == {"b"}


def test_trials_csv_export(client):
    sid = _create_live(client)
    _answer_one(client, sid)
    resp = client.get(f"/sessions/{sid}/export/trials.csv")
    assert resp.status_code == 200
    lines = resp.text.splitlines()
    assert lines[0].startswith("subject,section,block")
    assert len(lines) == 2


def test_analyze_endpoint(client):
    client.post("/sessions", json={"mode": "SIMULATED", "seed": 7})
    resp = client.post("/analyze", json={})
    assert resp.status_code == 200
    summary = resp.json()
    assert summary["n_subjects"] == 10
    assert summary["group_counts"] == {"1": 6, "2": 3, "3": 1}


def test_telemetry_frame_decimation():
    params = StimulusParams(25.0, 160.0, 500.0)
    trace = render_click(params, single_finger_state(), engine=ClickEngine())
    frames = telemetry_frames(trace)
    # 50 Hz cadence over a 1 s press.
    assert 45 <= len(frames) <= 55
    assert sum(1 for f in frames if f.get("event") == "trigger") == 1
