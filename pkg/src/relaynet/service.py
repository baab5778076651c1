"""HTTP + event-stream API exposing designer sessions to the design console.

Commands on one session execute strictly in arrival order (a per-session
lock); every state change appends exactly one event to the session's event
log and fans it out to stream subscribers, so a console can reconstruct
the whole session by replaying the stream. Sessions snapshot to disk on
every mutation and are reloaded on startup.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import uuid
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from . import designer, fixtures, topology
from .fieldsim import FieldError, channel_for_scenario, preset
from .graphs import DeploymentScenario, GraphError
from .qosmap import QoSSpec, QosError

STEP_ACTIONS = ("design", "learn", "evaluate", "augment", "finalize", "repair")
TOKEN_ENV = "RELAYNET_TOKEN"
TOKEN_HEADER = "x-relaynet-token"


class FieldBinding(BaseModel):
    preset: str | None = None
    seed: int = 0
    n_packets: int = 1000
    external: bool = False


class CreateSession(BaseModel):
    scenario: dict | str
    qos: dict | None = None
    field: FieldBinding = Field(default_factory=FieldBinding)


class RelayChange(BaseModel):
    add: list[str] = Field(default_factory=list)
    remove: list[str] = Field(default_factory=list)


class StepRequest(BaseModel):
    action: str
    trigger: dict[str, float] | None = None


class ApiSession:
    def __init__(self, session_id: str, state: designer.SessionState, binding: FieldBinding):
        self.session_id = session_id
        self.state = state
        self.binding = binding
        self.lock = threading.Lock()
        self.events: list[dict] = []
        self.subscribers: list[queue.Queue] = []
        self.last_design = None
        self.field: designer.SimulatedField | None = None
        if not binding.external:
            params = preset(binding.preset or "indoor", seed=binding.seed)
            channel = channel_for_scenario(state.scenario, params)
            self.field = designer.SimulatedField(channel, n_packets=binding.n_packets)

    def emit(self, kind: str, payload: dict) -> dict:
        event = {"seq": len(self.events), "kind": kind, **payload}
        self.events.append(event)
        for q in list(self.subscribers):
            q.put(event)
        return event

    def snapshot_payload(self) -> dict:
        st = self.state
        return {
            "phase": st.phase,
            "h_max": st.h_max,
            "graph": st.graph.to_dict() if st.graph else None,
            "deployed": sorted(st.deployed),
            "design": st.current_design.to_dict() if st.current_design else None,
            "scenario": st.scenario.to_dict(),
        }

    def delta_payload(self, before_edges: dict, record) -> dict:
        st = self.state
        after = {
            (e.a, e.b): {"a": e.a, "b": e.b, "provenance": e.provenance, "p_out_hat": e.p_out_hat}
            for e in (st.graph.edges() if st.graph else [])
        }
        changed = [v for k, v in sorted(after.items()) if before_edges.get(k) != v]
        return {
            "record": record.to_dict() if record else None,
            "delta": {
                "phase": st.phase,
                "h_max": st.h_max,
                "deployed": sorted(st.deployed),
                "edges": changed,
                "design": st.current_design.to_dict() if st.current_design else None,
            },
        }

    def edge_index(self) -> dict:
        if self.state.graph is None:
            return {}
        return {
            (e.a, e.b): {"a": e.a, "b": e.b, "provenance": e.provenance, "p_out_hat": e.p_out_hat}
            for e in self.state.graph.edges()
        }


class SessionStore:
    def __init__(self, sessions_dir: str | None):
        self.sessions: dict[str, ApiSession] = {}
        self.dir = Path(sessions_dir) if sessions_dir else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.dir.glob("*.json")):
                try:
                    blob = json.loads(path.read_text())
                    sess = ApiSession(
                        blob["session_id"],
                        designer.SessionState.from_dict(blob["state"]),
                        FieldBinding(**blob["binding"]),
                    )
                    sess.events = blob["events"]
                    self.sessions[sess.session_id] = sess
                except (KeyError, ValueError):
                    continue

    def persist(self, sess: ApiSession) -> None:
        if not self.dir:
            return
        blob = {
            "session_id": sess.session_id,
            "state": sess.state.to_dict(),
            "binding": sess.binding.model_dump(),
            "events": sess.events,
        }
        path = self.dir / f"{sess.session_id}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(blob, sort_keys=True))
        tmp.replace(path)

    def get(self, session_id: str) -> ApiSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id}") from None


def create_app(sessions_dir: str | None = None, token: str | None = None) -> FastAPI:
    app = FastAPI(title="relaynet design service")
    store = SessionStore(sessions_dir)
    app.state.store = store
    expected_token = token if token is not None else os.environ.get(TOKEN_ENV)

    def auth(request: Request) -> None:
        if expected_token and request.headers.get(TOKEN_HEADER) != expected_token:
            raise HTTPException(401, "missing or invalid token")

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSession, _=Depends(auth)):
        try:
            if isinstance(body.scenario, str):
                name = body.scenario.removeprefix("builtin:")
                scenario = fixtures.builtin(name)
            else:
                scenario = DeploymentScenario.from_dict(body.scenario)
            qos = QoSSpec.from_dict(body.qos) if body.qos else None
            link_model = scenario.link_model
            if link_model is None and body.field.preset:
                link_model = fixtures.PRESET_MODELS.get(body.field.preset)
            state = designer.new_session(
                scenario, link_model=link_model, qos=qos,
                learn_packets=body.field.n_packets,
            )
        except (GraphError, QosError, FieldError, ValueError) as exc:
            raise HTTPException(400, str(exc)) from exc
        session_id = uuid.uuid4().hex[:12]
        sess = ApiSession(session_id, state, body.field)
        store.sessions[session_id] = sess
        sess.emit("snapshot", sess.snapshot_payload())
        store.persist(sess)
        return {"session_id": session_id}

    @app.get("/sessions/{session_id}/graph")
    def get_graph(session_id: str, view: str = "hybrid", _=Depends(auth)):
        sess = store.get(session_id)
        with sess.lock:
            g = sess.state.graph
            if g is None:
                raise HTTPException(409, "no graph yet: run the design step first")
            if view == "model":
                g = g.restricted(provenances=("modeled",))
            elif view == "learnt":
                g = g.restricted(provenances=("learnt_good", "learnt_bad"))
            elif view == "hybrid":
                g = topology.hybrid_graph(g, set(sess.state.deployed))
            else:
                raise HTTPException(400, f"unknown view {view!r}")
            return g.to_dict()

    @app.post("/sessions/{session_id}/relays")
    def change_relays(session_id: str, body: RelayChange, _=Depends(auth)):
        sess = store.get(session_id)
        with sess.lock:
            before = sess.edge_index()
            try:
                designer.user_override(sess.state, set(body.add), set(body.remove))
            except designer.DesignerError as exc:
                raise HTTPException(409, str(exc)) from exc
            payload = sess.delta_payload(before, sess.state.iteration_log[-1])
            sess.emit("step", payload)
            store.persist(sess)
            return payload

    @app.post("/sessions/{session_id}/step")
    def step(session_id: str, body: StepRequest, _=Depends(auth)):
        sess = store.get(session_id)
        if body.action not in STEP_ACTIONS:
            raise HTTPException(400, f"unknown action {body.action!r}")
        with sess.lock:
            st = sess.state
            before = sess.edge_index()
            feasible = True
            try:
                if body.action == "design":
                    if st.phase != "designing" or st.deployed:
                        raise HTTPException(409, "design is only legal on a fresh session")
                    designer.initial_design(st)
                    feasible = st.iteration_log[-1].feasible
                elif body.action == "learn":
                    if st.phase == "operating":
                        raise HTTPException(409, "learning happens in designing/repairing phases")
                    if sess.field is None:
                        raise HTTPException(409, "session is bound to an external field")
                    designer.learn_links(st, sess.field)
                elif body.action == "evaluate":
                    if st.phase == "operating":
                        raise HTTPException(409, "evaluate is illegal while operating")
                    sess.last_design = designer.evaluate_step(st)
                    feasible = sess.last_design is not None
                elif body.action == "augment":
                    if st.phase == "operating":
                        raise HTTPException(409, "augment is illegal while operating")
                    result = designer.augment_step(st)
                    feasible = result is not None
                elif body.action == "finalize":
                    if sess.last_design is None:
                        raise HTTPException(409, "no feasible evaluation to finalize")
                    designer.finalize_step(st, sess.last_design)
                elif body.action == "repair":
                    if sess.field is None:
                        raise HTTPException(409, "session is bound to an external field")
                    trigger = body.trigger or {}
                    designer.repair(st, sess.field, trigger)
                    feasible = st.phase == "operating"
            except designer.DesignerError as exc:
                raise HTTPException(409, str(exc)) from exc
            record = st.iteration_log[-1] if st.iteration_log else None
            payload = sess.delta_payload(before, record)
            payload["feasible"] = feasible
            sess.emit("step", payload)
            store.persist(sess)
            return payload

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str, _=Depends(auth)):
        sess = store.get(session_id)
        with sess.lock:
            st = sess.state
            design = st.current_design
            return {
                "phase": st.phase,
                "h_max": st.h_max,
                "deployed": sorted(st.deployed),
                "relays_deployed": sorted(st.deployed_relays()),
                "iterations": len(st.iteration_log),
                "predicted_pdel": design.predicted_pdel if design else {},
                "design": design.to_dict() if design else None,
            }

    @app.get("/sessions/{session_id}/events")
    def events(
        session_id: str,
        since: int = Query(0, ge=0),
        poll: bool = False,
        limit: int | None = None,
        _=Depends(auth),
    ):
        sess = store.get(session_id)
        if poll:
            with sess.lock:
                return sess.events[since:]

        def stream():
            q: queue.Queue = queue.Queue()
            with sess.lock:
                backlog = sess.events[since:]
                sess.subscribers.append(q)
            sent = 0
            try:
                for event in backlog:
                    yield f"data: {json.dumps(event, sort_keys=True)}\n\n"
                    sent += 1
                    if limit is not None and sent >= limit:
                        return
                while True:
                    try:
                        event = q.get(timeout=15.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"data: {json.dumps(event, sort_keys=True)}\n\n"
                    sent += 1
                    if limit is not None and sent >= limit:
                        return
            finally:
                with sess.lock:
                    if q in sess.subscribers:
                        sess.subscribers.remove(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app
