import json
import math
import threading
import time

import pytest
from fastapi.testclient import TestClient

from aqmsim.service import create_app


@pytest.fixture()
def client(tmp_path):
    app = create_app(data_dir=tmp_path / "data", realtime_factor=math.inf,
                     max_workers=2)
    with TestClient(app) as c:
        yield c


def submit_short(client, preset="bbr3-solo", duration=2.0, seed=1):
    resp = client.post("/api/runs", json={"preset": preset, "seed": seed,
                                          "duration_s": duration})
    assert resp.status_code == 201, resp.text
    return resp.json()


def wait_done(client, run_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        handle = client.get(f"/api/runs/{run_id}").json()
        if handle["state"] in ("done", "failed", "cancelled"):
            return handle
        time.sleep(0.05)
    raise TimeoutError(f"run {run_id} did not finish")


def stream_events(client, run_id, params=""):
    events = []
    with client.stream("GET", f"/api/runs/{run_id}/stream{params}") as resp:
        assert resp.status_code == 200
        for line in resp.iter_lines():
            if line:
                events.append(json.loads(line))
    return events


class TestCatalog:
    def test_catalog_contents(self, client):
        cat = client.get("/api/catalog").json()
        assert cat["aqms"] == ["pfifo", "fq_codel", "cake"]
        assert cat["ccas"] == ["cubic", "bbr1", "bbr2", "bbr3"]
        assert any(p["name"] == "cubic-vs-bbr3-pfifo-up" for p in cat["presets"])
        assert cat["preset_aliases"]["fig5b"] == "cubic-vs-bbr3-fqcodel-up"

    def test_catalog_stable_across_calls(self, client):
        assert client.get("/api/catalog").json() == client.get("/api/catalog").json()


class TestCreateRun:
    def test_preset_submission_returns_handle(self, client):
        handle = submit_short(client)
        assert handle["state"] in ("pending", "running")
        assert len(handle["run_id"]) == 32
        wait_done(client, handle["run_id"])

    def test_malformed_document_is_400(self, client):
        resp = client.post("/api/runs", json={"name": "x", "flows": []})
        assert resp.status_code == 400
        assert resp.json()["detail"]["validation_errors"]

    def test_unknown_preset_is_400(self, client):
        resp = client.post("/api/runs", json={"preset": "fig99x"})
        assert resp.status_code == 400

    def test_duplicate_submission_independent_ids(self, client):
        h1 = submit_short(client)
        h2 = submit_short(client)
        assert h1["run_id"] != h2["run_id"]
        wait_done(client, h1["run_id"])
        wait_done(client, h2["run_id"])

    def test_full_scenario_document(self, client):
        from aqmsim.scenario import get_preset
        cfg = get_preset("cubic-vs-bbr3-pfifo-up")
        cfg.duration_s = 1.0
        resp = client.post("/api/runs", json=cfg.to_json_obj())
        assert resp.status_code == 201
        wait_done(client, resp.json()["run_id"])


class TestStream:
    def test_full_replay_after_completion(self, client):
        handle = submit_short(client, duration=2.0)
        wait_done(client, handle["run_id"])
        events = stream_events(client, handle["run_id"])
        samples = [e for e in events if e["type"] == "sample"]
        assert len(samples) == 20  # 2 s x 100 ms x 1 flow
        assert [s["index"] for s in samples] == list(range(20))
        assert events[-1]["type"] == "summary"
        assert events[-1]["state"] == "done"
        assert events[-1]["summary"]["jain_index"] == 1.0

    def test_live_subscription_gets_all_samples(self, client):
        handle = submit_short(client, duration=3.0)
        events = stream_events(client, handle["run_id"])  # subscribes immediately
        samples = [e for e in events if e["type"] == "sample"]
        assert [s["index"] for s in samples] == list(range(30))

    def test_two_subscribers_identical_sequences(self, client):
        handle = submit_short(client, duration=2.0)
        results = {}

        def subscribe(tag):
            results[tag] = stream_events(client, handle["run_id"])

        t1 = threading.Thread(target=subscribe, args=("a",))
        t2 = threading.Thread(target=subscribe, args=("b",))
        t1.start(); t2.start(); t1.join(); t2.join()
        assert results["a"] == results["b"]

    def test_resume_from_index(self, client):
        handle = submit_short(client, duration=2.0)
        wait_done(client, handle["run_id"])
        full = stream_events(client, handle["run_id"])
        tail = stream_events(client, handle["run_id"], params="?from=15")
        tail_samples = [e for e in tail if e["type"] == "sample"]
        assert [s["index"] for s in tail_samples] == list(range(15, 20))
        assert tail_samples == [e for e in full if e["type"] == "sample"][15:]

    def test_stream_matches_log_body(self, client):
        handle = submit_short(client, duration=2.0)
        wait_done(client, handle["run_id"])
        events = stream_events(client, handle["run_id"])
        stream_samples = [{k: v for k, v in e.items() if k not in ("type", "index")}
                          for e in events if e["type"] == "sample"]
        log = client.get(f"/api/runs/{handle['run_id']}/log")
        lines = [json.loads(l) for l in log.text.splitlines()]
        assert lines[0]["schema_version"] == 1
        assert lines[1:] == stream_samples

    def test_unknown_run_404(self, client):
        assert client.get("/api/runs/deadbeef/stream").status_code == 404


class TestCancel:
    def test_cancel_running_preserves_partial_log(self, client):
        handle = submit_short(client, preset="cubic-vs-bbr3-pfifo-up", duration=120.0)
        run_id = handle["run_id"]
        # wait until some samples have been produced
        deadline = time.time() + 30
        while time.time() < deadline:
            h = client.get(f"/api/runs/{run_id}").json()
            if h["progress_s"] >= 2.0:
                break
            time.sleep(0.05)
        resp = client.delete(f"/api/runs/{run_id}")
        assert resp.status_code == 200
        final = wait_done(client, run_id)
        assert final["state"] == "cancelled"
        # partial log still summarizable via the terminal stream event
        events = stream_events(client, run_id)
        assert events[-1]["type"] == "summary"
        assert events[-1]["state"] == "cancelled"
        assert events[-1]["summary"] is not None
        samples = [e for e in events if e["type"] == "sample"]
        assert 0 < len(samples) < 2400

    def test_cancel_done_run_is_conflict(self, client):
        handle = submit_short(client, duration=1.0)
        wait_done(client, handle["run_id"])
        resp = client.delete(f"/api/runs/{handle['run_id']}")
        assert resp.status_code == 409

    def test_cancel_unknown_404(self, client):
        assert client.delete("/api/runs/deadbeef").status_code == 404


class TestPersistence:
    def test_restart_preserves_completed_runs(self, tmp_path):
        data = tmp_path / "data"
        app1 = create_app(data_dir=data, realtime_factor=math.inf)
        with TestClient(app1) as c1:
            handle = submit_short(c1, duration=2.0)
            wait_done(c1, handle["run_id"])
        app2 = create_app(data_dir=data, realtime_factor=math.inf)
        with TestClient(app2) as c2:
            runs = c2.get("/api/runs").json()["runs"]
            assert any(r["run_id"] == handle["run_id"] and r["state"] == "done"
                       for r in runs)
            events = stream_events(c2, handle["run_id"])
            assert len([e for e in events if e["type"] == "sample"]) == 20
            assert events[-1]["type"] == "summary"

    def test_log_endpoint_conflict_while_running(self, tmp_path):
        app = create_app(data_dir=tmp_path / "d2", realtime_factor=math.inf)
        with TestClient(app) as c:
            handle = submit_short(c, preset="cubic-vs-bbr3-pfifo-up", duration=60.0)
            resp = c.get(f"/api/runs/{handle['run_id']}/log")
            assert resp.status_code in (200, 409)
            c.delete(f"/api/runs/{handle['run_id']}")
            wait_done(c, handle["run_id"])


class TestThrottle:
    def test_realtime_factor_paces_stream(self, tmp_path):
        app = create_app(data_dir=tmp_path / "d3", realtime_factor=10.0)
        with TestClient(app) as c:
            handle = submit_short(c, duration=1.0)
            wait_done(c, handle["run_id"])
            start = time.monotonic()
            events = stream_events(c, handle["run_id"])
            elapsed = time.monotonic() - start
        samples = [e for e in events if e["type"] == "sample"]
        assert len(samples) == 10
        # 1 simulated second at 10x speed: no faster than ~0.09 s
        assert elapsed >= 0.85 * (samples[-1]["t"] - samples[0]["t"]) / 10.0
