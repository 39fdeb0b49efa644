"""HTTP service: endpoints, error mapping, replay and isolation."""

import struct
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from noiseloom import ToyModelParams, latent_to_bytes, read_latent, sample_latent
from noiseloom.service import create_app, replay_session
from noiseloom.toy import ToyEngine

FAST = ToyModelParams(height=32, width=32, channels=8, steps=8)


@pytest.fixture
def client():
    with TestClient(create_app(FAST)) as c:
        yield c


def make_session(client, seed=3, prompt=("dog", "cat")):
    resp = client.post("/sessions", json={"seed": seed, "prompt": list(prompt)})
    assert resp.status_code == 200, resp.text
    return resp.json()["id"]


class TestSessions:
    def test_create_and_generate_repeatable(self, client):
        sid = make_session(client)
        first = client.post(f"/sessions/{sid}/generate")
        second = client.post(f"/sessions/{sid}/generate")
        assert first.status_code == 200
        assert first.content == second.content  # bitwise-equal responses

    def test_unknown_session_404(self, client):
        assert client.post("/sessions/nope/generate").status_code == 404
        assert client.get("/sessions/nope/history").status_code == 404

    def test_invalid_body_422(self, client):
        assert client.post("/sessions", json={"prompt": ["dog"]}).status_code == 422
        sid = make_session(client)
        resp = client.post(f"/sessions/{sid}/repaint", json={"fresh_seed": "x"})
        assert resp.status_code == 422

    def test_bad_params_422_with_location(self, client):
        resp = client.post(
            "/sessions", json={"seed": 1, "prompt": ["dog"], "params": {"steps": -5}}
        )
        assert resp.status_code == 422
        detail = resp.json()["detail"]
        assert detail[0]["loc"] == ["body", "params"]


class TestRepaint:
    def test_empty_mask_422(self, client):
        sid = make_session(client)
        resp = client.post(f"/sessions/{sid}/repaint", json={"blocks": [], "fresh_seed": 1})
        assert resp.status_code == 422
        resp = client.post(
            f"/sessions/{sid}/repaint", json={"box": [2, 2, 2, 5], "fresh_seed": 1}
        )
        assert resp.status_code == 422
        resp = client.post(f"/sessions/{sid}/repaint", json={"fresh_seed": 1})
        assert resp.status_code == 422

    def test_repaint_updates_latent_and_history(self, client):
        sid = make_session(client)
        before = client.get(f"/sessions/{sid}/latent").content
        resp = client.post(
            f"/sessions/{sid}/repaint", json={"box": [0, 0, 2, 2], "fresh_seed": 7}
        )
        assert resp.status_code == 200
        after = client.get(f"/sessions/{sid}/latent").content
        assert before != after
        events = client.get(f"/sessions/{sid}/history").json()["events"]
        assert len(events) == 1 and events[0]["type"] == "repaint"
        assert sorted(map(tuple, events[0]["blocks"])) == [(0, 0), (0, 1), (1, 0), (1, 1)]


class TestLayout:
    def test_layout_returns_swaps(self, client):
        sid = make_session(client)
        body = {
            "guidance": {
                "items": [{"box": [1, 1, 4, 4], "category": "dog"}],
                "pairing_seed": 5,
            }
        }
        resp = client.post(f"/sessions/{sid}/layout", json=body)
        assert resp.status_code == 200
        payload = resp.json()
        assert "swaps" in payload and payload["swaps"][0]["pairing_seed"] == 5
        events = client.get(f"/sessions/{sid}/history").json()["events"]
        assert events[0]["type"] == "layout"

    def test_engine_error_409_names_overlap(self, client):
        sid = make_session(client)
        body = {
            "guidance": {
                "items": [
                    {"box": [0, 0, 4, 4], "category": "dog"},
                    {"box": [2, 2, 6, 6], "category": "cat"},
                ],
                "pairing_seed": 0,
            }
        }
        resp = client.post(f"/sessions/{sid}/layout", json=body)
        assert resp.status_code == 409
        assert "overlap" in resp.json()["detail"]

    def test_unknown_category_409(self, client):
        sid = make_session(client)
        body = {"guidance": {"items": [{"box": [0, 0, 2, 2], "category": "zebra"}]}}
        resp = client.post(f"/sessions/{sid}/layout", json=body)
        assert resp.status_code == 409
        assert "zebra" in resp.json()["detail"]


class TestArtifacts:
    def test_image_png(self, client):
        sid = make_session(client)
        resp = client.get(f"/sessions/{sid}/image")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        assert resp.content.startswith(b"\x89PNG")

    def test_attention_json_and_pgm(self, client):
        sid = make_session(client)
        resp = client.get(f"/sessions/{sid}/attention/dog")
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["rows"] == 8 and len(payload["values"]) == 8
        pgm = client.get(f"/sessions/{sid}/attention/dog", params={"format": "pgm"})
        assert pgm.content.startswith(b"P5\n8 8\n255\n")
        assert client.get(f"/sessions/{sid}/attention/zebra").status_code == 404

    def test_latent_endpoint_is_nlat(self, client):
        sid = make_session(client, seed=3)
        raw = client.get(f"/sessions/{sid}/latent").content
        assert raw[:4] == b"NLAT"
        expected = latent_to_bytes(sample_latent(32, 32, 8, 3))
        assert raw == expected


class TestReplay:
    def test_history_replay_reproduces_latent(self, client):
        sid = make_session(client, seed=11)
        client.post(f"/sessions/{sid}/repaint", json={"box": [0, 0, 3, 3], "fresh_seed": 4})
        client.post(
            f"/sessions/{sid}/layout",
            json={"guidance": {"items": [{"box": [4, 4, 7, 7], "category": "cat"}],
                               "pairing_seed": 2}},
        )
        client.post(f"/sessions/{sid}/repaint", json={"blocks": [[7, 7]], "fresh_seed": 9})
        history = client.get(f"/sessions/{sid}/history").json()
        engine = ToyEngine(tuple(history["prompt"]), FAST)
        replayed = replay_session(engine, history["seed"], history["events"])
        assert latent_to_bytes(replayed) == client.get(f"/sessions/{sid}/latent").content

    def test_distinct_sessions_do_not_interfere(self, client):
        sid_a = make_session(client, seed=1)
        sid_b = make_session(client, seed=2)

        def mutate(sid, fresh):
            for i in range(3):
                client.post(
                    f"/sessions/{sid}/repaint",
                    json={"blocks": [[i, i]], "fresh_seed": fresh + i},
                )

        threads = [
            threading.Thread(target=mutate, args=(sid_a, 100)),
            threading.Thread(target=mutate, args=(sid_b, 200)),
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for sid, seed, fresh in ((sid_a, 1, 100), (sid_b, 2, 200)):
            history = client.get(f"/sessions/{sid}/history").json()
            engine = ToyEngine(("dog", "cat"), FAST)
            expected = replay_session(engine, seed, history["events"])
            assert latent_to_bytes(expected) == client.get(f"/sessions/{sid}/latent").content
            assert [e["fresh_seed"] for e in history["events"]] == [fresh, fresh + 1, fresh + 2]


class TestSnapshot:
    def test_sessions_survive_restart(self, tmp_path):
        snap = tmp_path / "sessions.json"
        with TestClient(create_app(FAST, str(snap))) as client:
            sid = make_session(client, seed=21)
            client.post(f"/sessions/{sid}/repaint", json={"box": [0, 0, 2, 2], "fresh_seed": 3})
            latent_before = client.get(f"/sessions/{sid}/latent").content
        assert snap.exists()
        with TestClient(create_app(FAST, str(snap))) as client:
            latent_after = client.get(f"/sessions/{sid}/latent").content
            assert latent_after == latent_before
