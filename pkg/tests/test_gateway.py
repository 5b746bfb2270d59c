from __future__ import annotations

import base64
import json
import threading
import time

import pytest
from starlette.testclient import TestClient

from mlforge.gateway.app import create_app

from conftest import CODE, make_plane, push_mnist

B64_CODE = {path: base64.b64encode(data).decode() for path, data in CODE.items()}


def make_client(driver="eager", **kwargs):
    plane = make_plane(driver=driver, **kwargs)
    push_mnist(plane)
    return plane, TestClient(create_app(plane))


def create_session(client, user="kim", hp=None, **overrides):
    body = {
        "dataset": "mnist",
        "code_files": B64_CODE,
        "entrypoint": "main.py",
        "hyperparams": hp or {"lr": 0.1, "steps": 10},
    }
    body.update(overrides)
    resp = client.post("/v1/sessions", json=body, headers={"X-MLForge-User": user})
    assert resp.status_code == 201, resp.text
    return resp.json()


class TestDatasets:
    def test_push_and_list(self):
        _, client = make_client()
        resp = client.post(
            "/v1/datasets",
            json={"name": "imdb", "files": {"x.txt": base64.b64encode(b"hi").decode()}},
        )
        assert resp.status_code == 201
        assert resp.json()["ref"] == "imdb@v1"
        listed = client.get("/v1/datasets", params={"name": "imdb"}).json()["datasets"]
        assert [d["ref"] for d in listed] == ["imdb@v1"]

    def test_invalid_base64_is_400(self):
        _, client = make_client()
        resp = client.post("/v1/datasets", json={"name": "bad", "files": {"x": "@@@"}})
        assert resp.status_code == 400
        assert resp.json()["code"] == "invalid_body"

    def test_board_route(self):
        _, client = make_client()
        create_session(client)
        body = client.get("/v1/datasets/mnist/1/board").json()
        assert body["metric"] == "acc" and body["direction"] == "maximize"
        assert body["entries"][0]["rank"] == 1
        assert body["entries"][0]["session_id"] == "kim/mnist/1"

    def test_board_without_config_is_400(self):
        plane, client = make_client()
        plane.storage.push_dataset("plain", {"a": b"1"})
        resp = client.get("/v1/datasets/plain/1/board")
        assert resp.status_code == 400
        assert resp.json()["code"] == "no_board_config"


class TestSessions:
    def test_create_returns_finished_view(self):
        _, client = make_client()
        view = create_session(client)
        assert view["session_id"] == "kim/mnist/1"
        assert view["state"] == "DONE"
        assert view["best"]["step"] == 10

    def test_get_unknown_is_404(self):
        _, client = make_client()
        resp = client.get("/v1/sessions/kim/mnist/9")
        assert resp.status_code == 404
        assert resp.json()["code"] == "unknown_session"

    def test_unknown_route_is_404_not_found(self):
        _, client = make_client()
        assert client.get("/v1/nothing").json()["code"] == "not_found"

    def test_tune_done_is_409(self):
        _, client = make_client()
        create_session(client)
        resp = client.post("/v1/sessions/kim/mnist/1/tune", json={"hyperparams": {"lr": 0.5}})
        assert resp.status_code == 409
        assert resp.json()["code"] == "illegal_state"

    def test_tune_running_session(self):
        plane, client = make_client(driver="manual")
        create_session(client, hp={"lr": 0.1, "l0": 1.0, "steps": 50})
        plane.advance_session("kim/mnist/1", 10)
        resp = client.post("/v1/sessions/kim/mnist/1/tune", json={"hyperparams": {"lr": 0.5}})
        assert resp.status_code == 200
        plane.advance_session("kim/mnist/1", 2)
        logs = client.get(
            "/v1/sessions/kim/mnist/1/logs", params={"name": "loss", "tail": 1}
        ).json()
        assert logs["points"][0]["value"] == pytest.approx(1 / 3, abs=0)

    def test_fork_and_reproduce(self):
        _, client = make_client()
        create_session(client)
        forked = client.post(
            "/v1/sessions/kim/mnist/1/fork", json={"checkpoint": "latest"}
        )
        assert forked.status_code == 201
        assert forked.json()["parent"] == {"session_id": "kim/mnist/1", "step": 10}
        reproduced = client.post("/v1/sessions/kim/mnist/1/reproduce")
        assert reproduced.status_code == 201
        assert reproduced.json()["session_id"] == "kim/mnist/3"

    def test_infer_closed_form(self):
        _, client = make_client()
        create_session(client)  # 10 steps at lr 0.1 -> loss 0.5
        payload = {"input_b64": base64.b64encode(b"3").decode(), "checkpoint": "latest"}
        body = client.post("/v1/sessions/kim/mnist/1/infer", json=payload).json()
        assert body["confidence"] == 0.5
        assert body["checkpoint_step"] == 10
        again = client.post("/v1/sessions/kim/mnist/1/infer", json=payload).json()
        assert body == again

    def test_logs_and_plot(self):
        _, client = make_client()
        create_session(client)
        logs = client.get("/v1/sessions/kim/mnist/1/logs", params={"tail": 2}).json()
        assert [p["name"] for p in logs["points"]] == ["acc", "loss"]
        csv = client.get("/v1/sessions/kim/mnist/1/plot.csv", params={"metric": "loss"})
        assert csv.headers["content-type"].startswith("text/csv")
        assert csv.text.splitlines()[0] == "step,kim/mnist/1"

    def test_plot_multiple_sessions(self):
        _, client = make_client()
        create_session(client)
        create_session(client, hp={"lr": 0.2, "steps": 10})
        csv = client.get(
            "/v1/sessions/kim/mnist/1/plot.csv",
            params=[("metric", "loss"), ("extra", "kim/mnist/2")],
        )
        assert csv.text.splitlines()[0] == "step,kim/mnist/1,kim/mnist/2"

    def test_list_sessions_filter(self):
        _, client = make_client()
        create_session(client)
        create_session(client, user="lee")
        sessions = client.get("/v1/sessions", params={"user": "lee"}).json()["sessions"]
        assert [s["session_id"] for s in sessions] == ["lee/mnist/1"]

    def test_responses_deterministic(self):
        _, client = make_client()
        create_session(client)
        first = client.get("/v1/sessions/kim/mnist/1").content
        second = client.get("/v1/sessions/kim/mnist/1").content
        assert first == second

    def test_stop_route(self):
        plane, client = make_client(driver="manual")
        create_session(client, hp={"lr": 0.1, "steps": 50})
        plane.advance_session("kim/mnist/1", 3)
        resp = client.post("/v1/sessions/kim/mnist/1/stop")
        assert resp.status_code == 200
        assert resp.json()["state"] == "STOPPED"


class TestSweeps:
    def test_grid_sweep(self):
        _, client = make_client()
        resp = client.post(
            "/v1/sweeps",
            json={
                "dataset": "mnist",
                "code_files": B64_CODE,
                "grid": {"lr": [0.05, 0.1, 0.2]},
                "base_hyperparams": {"steps": 50},
            },
            headers={"X-MLForge-User": "kim"},
        )
        assert resp.status_code == 201
        body = resp.json()
        assert len(body["sessions"]) == 3
        board = client.get("/v1/datasets/mnist/1/board").json()["entries"]
        lrs = [e["hyperparams"]["lr"] for e in board]
        assert lrs == [0.2, 0.1, 0.05]  # acc at 50 steps increases with lr


class TestIdempotency:
    def test_same_key_replays_response(self):
        _, client = make_client()
        body = {
            "dataset": "mnist",
            "code_files": B64_CODE,
            "hyperparams": {"lr": 0.1, "steps": 5},
        }
        headers = {"X-MLForge-User": "kim", "Idempotency-Key": "abc"}
        first = client.post("/v1/sessions", json=body, headers=headers)
        second = client.post("/v1/sessions", json=body, headers=headers)
        assert first.content == second.content
        assert len(client.get("/v1/sessions").json()["sessions"]) == 1

    def test_different_keys_create_distinct_sessions(self):
        _, client = make_client()
        body = {
            "dataset": "mnist",
            "code_files": B64_CODE,
            "hyperparams": {"lr": 0.1, "steps": 5},
        }
        client.post("/v1/sessions", json=body, headers={"Idempotency-Key": "k1"})
        client.post("/v1/sessions", json=body, headers={"Idempotency-Key": "k2"})
        assert len(client.get("/v1/sessions").json()["sessions"]) == 2


class TestFailover:
    def test_503_during_election_then_recovery(self):
        plane, client = make_client()
        create_session(client)
        plane.fail_master()
        resp = client.get("/v1/cluster")
        assert resp.status_code == 503
        assert resp.json()["code"] == "master_unavailable"
        leader, term = plane.recover_master()
        assert term == 1
        resp = client.get("/v1/cluster")
        assert resp.status_code == 200
        assert resp.json()["term"] == 1
        # the platform still works end to end after failover
        view = create_session(client)
        assert view["state"] == "DONE"


class TestEvents:
    def test_finished_session_replays_then_ends(self):
        _, client = make_client()
        create_session(client, hp={"lr": 0.1, "steps": 3})
        with client.stream("GET", "/v1/sessions/kim/mnist/1/events") as resp:
            events = [
                json.loads(line[len("data: "):])
                for line in resp.iter_lines()
                if line.startswith("data: ")
            ]
        assert [e["type"] for e in events[:-2]] == ["metric"] * 6
        assert events[-2]["type"] == "state"
        assert events[-1] == {"type": "end", "session_id": "kim/mnist/1", "state": "DONE"}
        steps = [e["step"] for e in events if e["type"] == "metric" and e["name"] == "loss"]
        assert steps == [1, 2, 3]

    def test_two_clients_see_identical_sequences(self):
        _, client = make_client()
        create_session(client, hp={"lr": 0.1, "steps": 3})

        def read():
            with client.stream("GET", "/v1/sessions/kim/mnist/1/events") as resp:
                return [line for line in resp.iter_lines() if line.startswith("data: ")]

        assert read() == read()

    def test_live_stream_follows_run(self):
        plane, client = make_client(driver="manual")
        create_session(client, hp={"lr": 0.1, "steps": 4})

        def advance_soon():
            time.sleep(0.1)
            plane.advance_session("kim/mnist/1", 4)

        thread = threading.Thread(target=advance_soon)
        thread.start()
        with client.stream("GET", "/v1/sessions/kim/mnist/1/events") as resp:
            events = [
                json.loads(line[len("data: "):])
                for line in resp.iter_lines()
                if line.startswith("data: ")
            ]
        thread.join()
        assert events[-1]["type"] == "end"
        metric_steps = [e["step"] for e in events if e["type"] == "metric" and e["name"] == "loss"]
        assert metric_steps == [1, 2, 3, 4]

    def test_events_unknown_session_404(self):
        _, client = make_client()
        resp = client.get("/v1/sessions/kim/mnist/7/events")
        assert resp.status_code == 404


CLI_ENDPOINT_TABLE = [
    ("run", "POST", "/v1/sessions"),
    ("dataset push", "POST", "/v1/datasets"),
    ("dataset list", "GET", "/v1/datasets"),
    ("dataset board", "GET", "/v1/datasets/{name}/{version}/board"),
    ("logs", "GET", "/v1/sessions/{user}/{dataset}/{number}/logs"),
    ("logs --follow", "GET", "/v1/sessions/{user}/{dataset}/{number}/events"),
    ("plot", "GET", "/v1/sessions/{user}/{dataset}/{number}/plot.csv"),
    ("session list", "GET", "/v1/sessions"),
    ("session stop", "POST", "/v1/sessions/{user}/{dataset}/{number}/stop"),
    ("session fork", "POST", "/v1/sessions/{user}/{dataset}/{number}/fork"),
    ("session tune", "POST", "/v1/sessions/{user}/{dataset}/{number}/tune"),
    ("session reproduce", "POST", "/v1/sessions/{user}/{dataset}/{number}/reproduce"),
    ("infer", "POST", "/v1/sessions/{user}/{dataset}/{number}/infer"),
    ("cluster", "GET", "/v1/cluster"),
]


def test_every_cli_capability_maps_to_exactly_one_route():
    _, client = make_client()
    app_routes = {
        (method, route.path)
        for route in client.app.routes
        if hasattr(route, "methods")
        for method in route.methods
    }
    for command, method, path in CLI_ENDPOINT_TABLE:
        assert (method, path) in app_routes, f"{command} has no endpoint {method} {path}"
    commands = [c for c, _, _ in CLI_ENDPOINT_TABLE]
    assert len(set(commands)) == len(commands)
