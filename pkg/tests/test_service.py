import json
import threading

import pytest
from fastapi.testclient import TestClient

from relaynet import fixtures
from relaynet.service import create_app


@pytest.fixture
def client(tmp_path):
    app = create_app(sessions_dir=str(tmp_path / "sessions"))
    with TestClient(app) as c:
        yield c


def make_session(client, scenario="builtin:line5", preset="indoor", seed=0, n_packets=200):
    resp = client.post(
        "/sessions",
        json={
            "scenario": scenario,
            "field": {"preset": preset, "seed": seed, "n_packets": n_packets},
        },
    )
    assert resp.status_code == 201, resp.text
    return resp.json()["session_id"]


def step(client, sid, action, **extra):
    return client.post(f"/sessions/{sid}/step", json={"action": action, **extra})


class TestCreateSession:
    def test_valid_builtin(self, client):
        sid = make_session(client)
        assert sid

    def test_two_sinks_rejected(self, client):
        scen = fixtures.line5().to_dict()
        scen["nodes"][1]["role"] = "sink"
        resp = client.post("/sessions", json={"scenario": scen, "field": {"preset": "indoor"}})
        assert resp.status_code == 400

    def test_duplicate_ids_rejected(self, client):
        scen = fixtures.line5().to_dict()
        scen["nodes"][1]["id"] = scen["nodes"][0]["id"]
        resp = client.post("/sessions", json={"scenario": scen, "field": {"preset": "indoor"}})
        assert resp.status_code == 400

    def test_yard_preset_graph_uses_long_range(self, client):
        # scenario without a link model: the yard binding supplies r_max=30,
        # so 20 m pairs appear in the model graph
        scen = fixtures.line5().to_dict()
        del scen["link_model"]
        resp = client.post(
            "/sessions", json={"scenario": scen, "field": {"preset": "yard"}}
        )
        sid = resp.json()["session_id"]
        step(client, sid, "design")
        graph = client.get(f"/sessions/{sid}/graph", params={"view": "model"}).json()
        pairs = {(e["a"], e["b"]) for e in graph["edges"]}
        assert ("sink", "src") in pairs  # 20 m apart but within 30 m range


class TestSteps:
    def test_design_learn_evaluate_flow(self, client):
        sid = make_session(client)
        r = step(client, sid, "design")
        assert r.status_code == 200
        assert r.json()["record"]["action"] == "initial"
        r = step(client, sid, "learn")
        assert r.status_code == 200
        r = step(client, sid, "evaluate")
        assert r.status_code == 200
        body = r.json()
        assert body["feasible"] in (True, False)
        if body["feasible"]:
            r = step(client, sid, "finalize")
            assert r.status_code == 200
            assert client.get(f"/sessions/{sid}/metrics").json()["phase"] == "operating"

    def test_design_twice_rejected(self, client):
        sid = make_session(client)
        step(client, sid, "design")
        assert step(client, sid, "design").status_code == 409

    def test_finalize_without_evaluation_rejected(self, client):
        sid = make_session(client)
        step(client, sid, "design")
        assert step(client, sid, "finalize").status_code == 409

    def test_unknown_action_rejected(self, client):
        sid = make_session(client)
        assert step(client, sid, "explode").status_code == 400

    def test_infeasible_evaluate_is_structured_not_error(self, client):
        scen = fixtures.line5().to_dict()
        sid = make_session(client, scenario=scen, seed=3)
        step(client, sid, "design")
        # poison the field: sever the whole cut around the source side
        app_session = client.app.state.store.get(sid)
        for a, b in [("r10", "r15"), ("r10", "src"), ("r5", "r15"),
                     ("r5", "src"), ("sink", "r15"), ("sink", "src")]:
            app_session.field.channel.force_shadow(a, b, -40.0)
        step(client, sid, "learn")
        r = step(client, sid, "evaluate")
        assert r.status_code == 200
        assert r.json()["feasible"] is False

    def test_repair_requires_operating_phase(self, client):
        sid = make_session(client)
        step(client, sid, "design")
        r = step(client, sid, "repair", trigger={"src": 0.1})
        assert r.status_code == 409


class TestRelays:
    def test_add_relay_grows_deployment(self, client):
        sid = make_session(client)
        step(client, sid, "design")
        before = set(client.get(f"/sessions/{sid}/metrics").json()["deployed"])
        r = client.post(f"/sessions/{sid}/relays", json={"add": ["r5"], "remove": []})
        assert r.status_code == 200
        after = set(client.get(f"/sessions/{sid}/metrics").json()["deployed"])
        assert after >= before

    def test_remove_design_relay_conflicts(self, client):
        sid = make_session(client)
        step(client, sid, "design")
        r = client.post(f"/sessions/{sid}/relays", json={"add": [], "remove": ["r10"]})
        assert r.status_code == 409

    def test_manual_placement_after_infeasibility(self, client):
        # a lone far source: initial design infeasible, user may still place
        scen = {
            "name": "lonely",
            "nodes": [
                {"id": "sink", "x_m": 0, "y_m": 0, "role": "sink"},
                {"id": "p1", "x_m": 6, "y_m": 0, "role": "potential_relay"},
                {"id": "src", "x_m": 40, "y_m": 0, "role": "source"},
            ],
            "qos": {"d_max_ms": 200.0, "p_del": 0.73, "k": 1},
            "link_model": fixtures.INDOOR_MODEL.to_dict(),
        }
        sid = make_session(client, scenario=scen)
        r = step(client, sid, "design")
        assert r.json()["feasible"] is False
        r = client.post(f"/sessions/{sid}/relays", json={"add": ["p1"], "remove": []})
        assert r.status_code == 200
        assert r.json()["record"]["action"] == "user_override"


class TestEvents:
    def test_every_mutation_emits_one_event(self, client):
        sid = make_session(client)
        base = len(client.get(f"/sessions/{sid}/events", params={"poll": True}).json())
        step(client, sid, "design")
        step(client, sid, "learn")
        events = client.get(f"/sessions/{sid}/events", params={"poll": True}).json()
        assert len(events) == base + 2

    def test_stream_replay_reconstructs_log(self, client):
        sid = make_session(client)
        step(client, sid, "design")
        step(client, sid, "learn")
        step(client, sid, "evaluate")
        n = len(client.get(f"/sessions/{sid}/events", params={"poll": True}).json())
        with client.stream(
            "GET", f"/sessions/{sid}/events", params={"limit": n}
        ) as resp:
            payloads = []
            for line in resp.iter_lines():
                if line.startswith("data: "):
                    payloads.append(json.loads(line[len("data: "):]))
        assert [e["seq"] for e in payloads] == list(range(n))
        replayed = [e["record"]["action"] for e in payloads if e["kind"] == "step"]
        metrics = client.get(f"/sessions/{sid}/metrics").json()
        assert len(replayed) == metrics["iterations"]
        assert replayed == ["initial", "learn", "evaluate"]

    def test_snapshot_event_first(self, client):
        sid = make_session(client)
        events = client.get(f"/sessions/{sid}/events", params={"poll": True}).json()
        assert events[0]["kind"] == "snapshot"
        assert events[0]["scenario"]["name"] == "line5"


class TestConcurrency:
    def test_commands_serialize(self, client):
        sid = make_session(client)
        step(client, sid, "design")
        errors = []

        def worker():
            try:
                for _ in range(5):
                    step(client, sid, "learn")
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        events = client.get(f"/sessions/{sid}/events", params={"poll": True}).json()
        seqs = [e["seq"] for e in events]
        assert seqs == list(range(len(seqs)))  # one total order, no corruption
        learns = [e for e in events if e["kind"] == "step" and e["record"]["action"] == "learn"]
        assert len(learns) == 20

    def test_sessions_independent(self, client):
        sid1 = make_session(client, seed=1)
        sid2 = make_session(client, seed=2)
        step(client, sid1, "design")
        m2 = client.get(f"/sessions/{sid2}/metrics").json()
        assert m2["iterations"] == 0


class TestPersistence:
    def test_snapshot_restores_session(self, tmp_path):
        sessions_dir = str(tmp_path / "s")
        app = create_app(sessions_dir=sessions_dir)
        with TestClient(app) as client:
            sid = make_session(client)
            step(client, sid, "design")
            expected = client.get(f"/sessions/{sid}/metrics").json()
        app2 = create_app(sessions_dir=sessions_dir)
        with TestClient(app2) as client2:
            got = client2.get(f"/sessions/{sid}/metrics").json()
            assert got == expected
            events = client2.get(f"/sessions/{sid}/events", params={"poll": True}).json()
            assert events[0]["kind"] == "snapshot"


class TestAuth:
    def test_token_required_when_configured(self, tmp_path):
        app = create_app(sessions_dir=None, token="sekret")
        with TestClient(app) as client:
            resp = client.post("/sessions", json={"scenario": "builtin:line5"})
            assert resp.status_code == 401
            resp = client.post(
                "/sessions",
                json={"scenario": "builtin:line5", "field": {"preset": "indoor"}},
                headers={"x-relaynet-token": "sekret"},
            )
            assert resp.status_code == 201
