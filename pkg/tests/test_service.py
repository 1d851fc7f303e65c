import json
import time

import pytest
from fastapi.testclient import TestClient

from strokeboard.service import create_app


@pytest.fixture
def client(tmp_path):
    app = create_app(state_dir=str(tmp_path / "state"))
    with TestClient(app) as c:
        yield c


def _fast_frame_body(template="a cat", **config):
    cfg = {"iterations": 4, "snapshot_every": 1, "seed": 1}
    cfg.update(config)
    return {
        "template": template,
        "inherit": False,
        "n_strokes": 2,
        "segments": 1,
        "canvas_w": 64,
        "canvas_h": 64,
        "config": cfg,
    }


def _wait_status(client, sid, k, statuses, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get(f"/v1/sessions/{sid}").json()
        if doc["frames"][k]["status"] in statuses:
            return doc["frames"][k]
        time.sleep(0.02)
    raise TimeoutError(f"frame {k} never reached {statuses}")


def test_healthz(client):
    r = client.get("/v1/healthz")
    assert r.status_code == 200
    assert r.json() == {"ok": True}


def test_create_then_get_empty_session(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    doc = client.get(f"/v1/sessions/{sid}").json()
    assert doc["frames"] == []
    assert doc["id"] == sid


def test_unknown_session_404(client):
    r = client.get("/v1/sessions/nope")
    assert r.status_code == 404
    assert r.json()["error"]["code"] == "not_found"


def test_frame_creation_and_edit(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    r = client.post(f"/v1/sessions/{sid}/frames", json=_fast_frame_body())
    assert r.status_code == 201
    frame = r.json()
    assert frame["index"] == 0 and frame["status"] == "draft"
    r2 = client.post(
        f"/v1/sessions/{sid}/frames/0/edits",
        json={
            "ops": [
                {
                    "kind": "add_strokes",
                    "payload": {"strokes": [{"points": [[1, 1], [2, 2], [3, 3], [4, 4]]}]},
                },
                {"kind": "translate", "payload": {"indices": [0], "dx": 5.0, "dy": 0.0}},
            ]
        },
    )
    assert r2.status_code == 200
    assert len(r2.json()["base_sketch"]["strokes"]) == 1
    assert r2.json()["base_sketch"]["strokes"][0]["points"][0] == [6.0, 1.0]


def test_bad_edit_is_400(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    client.post(f"/v1/sessions/{sid}/frames", json=_fast_frame_body())
    r = client.post(
        f"/v1/sessions/{sid}/frames/0/edits",
        json={"ops": [{"kind": "translate", "payload": {"indices": [9], "dx": 1, "dy": 1}}]},
    )
    assert r.status_code == 400
    assert r.json()["error"]["code"] == "bad_request"


def test_run_accepted_and_completes(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    client.post(f"/v1/sessions/{sid}/frames", json=_fast_frame_body())
    r = client.post(f"/v1/sessions/{sid}/frames/0/run", json={})
    assert r.status_code == 202
    frame = _wait_status(client, sid, 0, {"done"})
    assert frame["result"] is not None


def test_events_stream_four_iterations_plus_terminator(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    client.post(f"/v1/sessions/{sid}/frames", json=_fast_frame_body())
    client.post(f"/v1/sessions/{sid}/frames/0/run", json={})
    _wait_status(client, sid, 0, {"done"})
    lines = []
    with client.stream("GET", f"/v1/sessions/{sid}/frames/0/events") as r:
        assert r.status_code == 200
        for line in r.iter_lines():
            if line:
                lines.append(json.loads(line))
    assert len(lines) == 5
    iters = [e["iter"] for e in lines[:4]]
    assert iters == [1, 2, 3, 4]
    assert all("svg" in e for e in lines[:4])  # snapshot cadence 1
    assert lines[-1] == {"event": "done"}


def test_events_after_param_skips_seen_iterations(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    client.post(f"/v1/sessions/{sid}/frames", json=_fast_frame_body())
    client.post(f"/v1/sessions/{sid}/frames/0/run", json={})
    _wait_status(client, sid, 0, {"done"})
    with client.stream("GET", f"/v1/sessions/{sid}/frames/0/events?after=2") as r:
        lines = [json.loads(l) for l in r.iter_lines() if l]
    assert [e.get("iter") for e in lines[:-1]] == [3, 4]


def test_run_on_running_frame_is_409_busy(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    client.post(
        f"/v1/sessions/{sid}/frames", json=_fast_frame_body(iterations=400, snapshot_every=400)
    )
    assert client.post(f"/v1/sessions/{sid}/frames/0/run", json={}).status_code == 202
    r = client.post(f"/v1/sessions/{sid}/frames/0/run", json={})
    assert r.status_code == 409
    assert r.json()["error"]["code"] == "busy"
    client.post(f"/v1/sessions/{sid}/frames/0/cancel")
    _wait_status(client, sid, 0, {"cancelled", "done"})


def test_cancel_mid_run_yields_cancelled_status(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    client.post(
        f"/v1/sessions/{sid}/frames", json=_fast_frame_body(iterations=100000, snapshot_every=100000)
    )
    client.post(f"/v1/sessions/{sid}/frames/0/run", json={})
    _wait_status(client, sid, 0, {"running"})
    r = client.post(f"/v1/sessions/{sid}/frames/0/cancel")
    assert r.status_code == 200
    frame = _wait_status(client, sid, 0, {"cancelled"})
    assert frame["result"] is not None  # partial result retained
    with client.stream("GET", f"/v1/sessions/{sid}/frames/0/events") as resp:
        lines = [json.loads(l) for l in resp.iter_lines() if l]
    assert lines[-1] == {"event": "cancelled"}


def test_unknown_config_override_is_400(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    client.post(f"/v1/sessions/{sid}/frames", json=_fast_frame_body())
    r = client.post(f"/v1/sessions/{sid}/frames/0/run", json={"bogus_knob": 3})
    assert r.status_code == 400


def test_omega_override_reaches_config(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    client.post(f"/v1/sessions/{sid}/frames", json=_fast_frame_body())
    client.post(f"/v1/sessions/{sid}/frames/0/run", json={"omega": 100})
    _wait_status(client, sid, 0, {"done"})
    doc = client.get(f"/v1/sessions/{sid}").json()
    assert doc["frames"][0]["config"]["guidance"]["omega"] == 100


def test_storyboard_svg_endpoint(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    client.post(f"/v1/sessions/{sid}/frames", json=_fast_frame_body(template="a boat"))
    client.post(f"/v1/sessions/{sid}/frames/0/run", json={})
    _wait_status(client, sid, 0, {"done"})
    r = client.get(f"/v1/sessions/{sid}/storyboard.svg")
    assert r.status_code == 200
    assert r.headers["content-type"].startswith("image/svg+xml")
    assert "a boat" in r.text
    empty_sid = client.post("/v1/sessions", json={}).json()["id"]
    assert client.get(f"/v1/sessions/{empty_sid}/storyboard.svg").status_code == 400


def test_state_survives_restart(tmp_path):
    state = str(tmp_path / "state")
    app1 = create_app(state_dir=state)
    with TestClient(app1) as c1:
        sid = c1.post("/v1/sessions", json={"seed_base": 5}).json()["id"]
        c1.post(f"/v1/sessions/{sid}/frames", json=_fast_frame_body())
        c1.post(f"/v1/sessions/{sid}/frames/0/run", json={})
        _wait_status(c1, sid, 0, {"done"})
        doc1 = c1.get(f"/v1/sessions/{sid}").json()
    app2 = create_app(state_dir=state)
    with TestClient(app2) as c2:
        doc2 = c2.get(f"/v1/sessions/{sid}").json()
    assert doc2 == doc1


def test_reads_stay_responsive_during_run(client):
    sid = client.post("/v1/sessions", json={}).json()["id"]
    client.post(
        f"/v1/sessions/{sid}/frames", json=_fast_frame_body(iterations=100000, snapshot_every=100000)
    )
    client.post(f"/v1/sessions/{sid}/frames/0/run", json={})
    _wait_status(client, sid, 0, {"running"})
    t0 = time.time()
    r = client.get("/v1/healthz")
    elapsed = time.time() - t0
    assert r.status_code == 200
    assert elapsed < 0.5
    client.post(f"/v1/sessions/{sid}/frames/0/cancel")
    _wait_status(client, sid, 0, {"cancelled"})
