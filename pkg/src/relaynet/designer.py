"""Field-interactive iterative design: design, learn, evaluate, augment,
finalize, operate, repair.

A session owns the evolving network graph and deployment set. Link
learning replaces model predictions with measured (learnt) edges, which
never revert. Evaluation tries to extract a QoS design over learnt-good
links among deployed nodes; on failure, augmentation proposes additional
relays over the hybrid (learnt + modeled) graph. Finalize prunes relays
unused by the accepted design; repair never prunes, so robustness builds
up over the network's lifetime.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Protocol

from .fieldsim import ChannelParams, GroundTruthChannel
from .graphs import Design, DeploymentScenario, GraphError, NetworkGraph
from .linkmodel import (
    LinkModel,
    MeasurementTrace,
    classify_bidirectional,
    estimate_link_outage,
)
from .qosmap import MacParams, QoSSpec, hop_bound, predict_path_pdel
from . import topology

Phase = Literal["designing", "operating", "repairing"]
Action = Literal[
    "initial", "learn", "evaluate", "augment", "user_override", "finalize", "repair"
]


class DesignerError(GraphError):
    pass


class CampaignError(RuntimeError):
    """Campaign-provider failure; safe to retry."""


class Field(Protocol):
    def campaign(self, deployed: set[str], t: int | None = None) -> MeasurementTrace: ...


class SimulatedField:
    """Binds a ground-truth channel as the session's campaign provider."""

    def __init__(self, channel: GroundTruthChannel, n_packets: int = 1000):
        self.channel = channel
        self.n_packets = n_packets

    def campaign(self, deployed: set[str], t: int | None = None) -> MeasurementTrace:
        return self.channel.hello_campaign(deployed, self.n_packets, t=t)


@dataclass
class IterationRecord:
    index: int
    action: Action
    relays_added: set[str] = field(default_factory=set)
    relays_removed: set[str] = field(default_factory=set)
    feasible: bool = True
    per_source_pdel_predicted: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "action": self.action,
            "relays_added": sorted(self.relays_added),
            "relays_removed": sorted(self.relays_removed),
            "feasible": self.feasible,
            "per_source_pdel_predicted": dict(sorted(self.per_source_pdel_predicted.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        return cls(
            index=d["index"],
            action=d["action"],
            relays_added=set(d["relays_added"]),
            relays_removed=set(d["relays_removed"]),
            feasible=d["feasible"],
            per_source_pdel_predicted=dict(d["per_source_pdel_predicted"]),
        )


@dataclass
class SessionState:
    scenario: DeploymentScenario
    link_model: LinkModel
    qos: QoSSpec
    mac: MacParams = field(default_factory=MacParams)
    h_max: int | None = None
    graph: NetworkGraph | None = None
    deployed: set[str] = field(default_factory=set)
    current_design: Design | None = None
    iteration_log: list[IterationRecord] = field(default_factory=list)
    phase: Phase = "designing"
    learn_packets: int = 1000

    def log(self, action: Action, **kw) -> IterationRecord:
        rec = IterationRecord(index=len(self.iteration_log), action=action, **kw)
        self.iteration_log.append(rec)
        return rec

    def deployed_relays(self) -> set[str]:
        return self.deployed & {n.id for n in self.scenario.potential_relays}

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "link_model": self.link_model.to_dict(),
            "qos": self.qos.to_dict(),
            "h_max": self.h_max,
            "graph": self.graph.to_dict() if self.graph else None,
            "deployed": sorted(self.deployed),
            "current_design": self.current_design.to_dict() if self.current_design else None,
            "iteration_log": [r.to_dict() for r in self.iteration_log],
            "phase": self.phase,
            "learn_packets": self.learn_packets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionState":
        s = cls(
            scenario=DeploymentScenario.from_dict(d["scenario"]),
            link_model=LinkModel.from_dict(d["link_model"]),
            qos=QoSSpec.from_dict(d["qos"]),
            h_max=d.get("h_max"),
            deployed=set(d.get("deployed", ())),
            phase=d.get("phase", "designing"),
            learn_packets=d.get("learn_packets", 1000),
        )
        if d.get("graph"):
            s.graph = NetworkGraph.from_dict(d["graph"])
            s.graph.deployed = set(s.deployed)
        if d.get("current_design"):
            s.current_design = Design.from_dict(d["current_design"])
        s.iteration_log = [IterationRecord.from_dict(r) for r in d.get("iteration_log", ())]
        return s

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "SessionState":
        return cls.from_dict(json.loads(Path(path).read_text()))


def new_session(
    scenario: DeploymentScenario,
    link_model: LinkModel | None = None,
    qos: QoSSpec | None = None,
    mac: MacParams | None = None,
    learn_packets: int = 1000,
) -> SessionState:
    link_model = link_model or scenario.link_model
    qos = qos or scenario.qos
    if link_model is None:
        raise DesignerError("no link model given and none embedded in the scenario")
    if qos is None:
        raise DesignerError("no QoS spec given and none embedded in the scenario")
    return SessionState(
        scenario=scenario,
        link_model=link_model,
        qos=qos,
        mac=mac or MacParams(),
        learn_packets=learn_packets,
    )


def predicted_pdel(session: SessionState, design: Design) -> dict[str, list[float]]:
    """Per-route delivery prediction from learnt outages (model bound elsewhere)."""
    g = session.graph
    lm = session.link_model
    out: dict[str, list[float]] = {}
    for s, paths in design.routes.items():
        vals = []
        for p in paths:
            outages = [g.link_outage(a, b, default=lm.p_out_target) for a, b in zip(p, p[1:])]
            vals.append(predict_path_pdel(outages, lm.q_max, session.qos.d_max_ms, session.mac))
        out[s] = vals
    return out


def _summarize_pdel(per_route: dict[str, list[float]]) -> dict[str, float]:
    # the route-maintenance layer steers traffic to the best surviving route
    return {s: max(v) for s, v in per_route.items()}


def _attach_prediction(session: SessionState, design: Design) -> Design:
    design.predicted_pdel = predicted_pdel(session, design)
    return design


def initial_design(session: SessionState) -> SessionState:
    """Model-graph design; deploys suggested relays plus sources and sink."""
    if session.phase != "designing":
        raise DesignerError(f"initial design illegal in phase {session.phase}")
    if session.deployed:
        raise DesignerError("initial design after deployment has begun")
    lm, qos = session.link_model, session.qos
    hb = hop_bound(
        lm.q_max, qos.d_max_ms, lm.p_out_target, qos.p_del, qos.in_time_target, session.mac
    )
    session.h_max = hb.h_max
    session.graph = topology.build_model_graph(session.scenario, lm)
    design = topology.extract_design(session.graph, hb.h_max, qos.k)
    always_on = {n.id for n in session.scenario.sources} | {session.scenario.sink.id}
    if design is None:
        session.deployed = set(always_on)
        session.graph.deployed = set(session.deployed)
        session.log("initial", feasible=False)
        return session
    _attach_prediction(session, design)
    session.deployed = always_on | design.relays_used
    session.graph.deployed = set(session.deployed)
    session.current_design = design
    session.log(
        "initial",
        relays_added=set(design.relays_used),
        feasible=True,
        per_source_pdel_predicted=_summarize_pdel(design.predicted_pdel),
    )
    return session


def learn_links(session: SessionState, field: Field) -> SessionState:
    """Measure every deployed pair and overwrite edges with learnt provenance."""
    if len(session.deployed) < 2:
        raise DesignerError("need at least two deployed nodes to learn links")
    try:
        trace = field.campaign(set(session.deployed))
    except CampaignError:
        raise
    except Exception as exc:  # provider failures are retryable
        raise CampaignError(str(exc)) from exc
    g = session.graph
    ids = sorted(session.deployed)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            fwd = estimate_link_outage(
                trace, (a, b), trace.n_sent.get((a, b), session.learn_packets),
                session.link_model.rssi_min_dbm, length_m=g.distance(a, b),
            )
            rev = estimate_link_outage(
                trace, (b, a), trace.n_sent.get((b, a), session.learn_packets),
                session.link_model.rssi_min_dbm, length_m=g.distance(a, b),
            )
            good = classify_bidirectional(fwd, rev, session.link_model.p_out_target)
            g.set_learnt(a, b, good, max(fwd.p_out_hat, rev.p_out_hat))
    session.log("learn")
    return session


def evaluate_step(session: SessionState) -> Design | None:
    """Can the learnt-good links among deployed nodes carry the QoS design?"""
    design = topology.evaluate_learnt(
        session.graph, set(session.deployed), session.h_max, session.qos.k
    )
    if design is None:
        session.log("evaluate", feasible=False)
        return None
    _attach_prediction(session, design)
    session.log(
        "evaluate",
        feasible=True,
        per_source_pdel_predicted=_summarize_pdel(design.predicted_pdel),
    )
    return design


def augment_step(session: SessionState) -> tuple[set[str], Design] | None:
    """Propose and deploy additional relays over the hybrid graph."""
    hybrid = topology.hybrid_graph(session.graph, set(session.deployed))
    result = topology.augment(hybrid, set(session.deployed), session.h_max, session.qos.k)
    if result is None:
        session.log("augment", feasible=False)
        return None
    additions, design = result
    _attach_prediction(session, design)
    session.deployed |= additions
    session.graph.deployed = set(session.deployed)
    session.log(
        "augment",
        relays_added=set(additions),
        feasible=True,
        per_source_pdel_predicted=_summarize_pdel(design.predicted_pdel),
    )
    return additions, design


def finalize_step(session: SessionState, design: Design) -> SessionState:
    """Keep only the relays the accepted design uses; start operating."""
    removed = session.deployed_relays() - design.relays_used
    session.deployed -= removed
    session.graph.deployed = set(session.deployed)
    session.current_design = design
    session.phase = "operating"
    session.log(
        "finalize",
        relays_removed=removed,
        feasible=True,
        per_source_pdel_predicted=_summarize_pdel(design.predicted_pdel),
    )
    return session


def user_override(session: SessionState, add: set[str], remove: set[str]) -> SessionState:
    """Manual relay placement/removal (the escape hatch after infeasibility)."""
    relay_ids = {n.id for n in session.scenario.potential_relays}
    bad = (set(add) | set(remove)) - relay_ids
    if bad:
        raise DesignerError(f"not potential relay locations: {sorted(bad)}")
    if session.current_design and set(remove) & session.current_design.relays_used:
        raise DesignerError("cannot remove relays used by the accepted design")
    if session.graph is None:
        raise DesignerError("no graph yet; run the initial design first")
    session.deployed |= set(add)
    session.deployed -= set(remove)
    session.graph.deployed = set(session.deployed)
    session.log("user_override", relays_added=set(add), relays_removed=set(remove))
    return session


def _design_loop(
    session: SessionState, field: Field, max_iterations: int, prune_on_success: bool
) -> Design | None:
    for _ in range(max_iterations):
        learn_links(session, field)
        design = evaluate_step(session)
        if design is not None:
            if prune_on_success:
                finalize_step(session, design)
            else:
                session.current_design = design
            return design
        result = augment_step(session)
        if result is None:
            return None
        additions, aug_design = result
        if not additions:
            # the hybrid design needed no new relays, so it already rests on
            # learnt links among deployed nodes; accept it
            if prune_on_success:
                finalize_step(session, aug_design)
            else:
                session.current_design = aug_design
            return aug_design
    return None


def iterate_until_feasible(
    session: SessionState, field: Field, max_iterations: int | None = None
) -> Design | None:
    """Learn / evaluate / augment until a QoS design exists on learnt links.

    On success the design is finalized (unused relays removed) and the
    session starts operating. Returns None on declared infeasibility.
    """
    if session.phase != "designing":
        raise DesignerError(f"iterate illegal in phase {session.phase}")
    if session.graph is None:
        initial_design(session)
    if max_iterations is None:
        # each iteration deploys at least one relay, so the potential
        # locations bound the loop
        max_iterations = max(1, len(session.scenario.potential_relays))
    return _design_loop(session, field, max_iterations, prune_on_success=True)


def repair(
    session: SessionState, field: Field, trigger: dict[str, float]
) -> SessionState:
    """Relearn and redesign after a delivery-rate violation.

    All deployed relays are retained (no pruning); augmentation happens
    only if redesign over existing nodes fails. On failure the session
    stays in the repairing phase for user intervention.
    """
    if session.phase != "operating":
        raise DesignerError(f"repair illegal in phase {session.phase}")
    violated = {s: p for s, p in trigger.items() if p < session.qos.p_del}
    if not violated:
        raise DesignerError("repair rejected: no source violates the delivery target")
    session.phase = "repairing"
    before = set(session.deployed)
    design = _design_loop(
        session,
        field,
        max_iterations=max(1, len(session.scenario.potential_relays)),
        prune_on_success=False,
    )
    added = session.deployed - before
    if design is None:
        session.log("repair", relays_added=added, feasible=False)
        return session
    session.phase = "operating"
    session.log(
        "repair",
        relays_added=added,
        feasible=True,
        per_source_pdel_predicted=_summarize_pdel(design.predicted_pdel),
    )
    return session


# ---------------------------------------------------------------------------
# long-horizon robustness experiment


@dataclass
class RobustnessRow:
    source_ids: list[str]
    initial_relays: list[str]
    augmentation_cycles: list[int]
    final_relays: list[str]
    redesigns: int
    infeasible_cycles: list[int]

    def to_dict(self) -> dict:
        return {
            "source_ids": self.source_ids,
            "initial_relays": self.initial_relays,
            "augmentation_cycles": self.augmentation_cycles,
            "final_relays": self.final_relays,
            "redesigns": self.redesigns,
            "infeasible_cycles": self.infeasible_cycles,
        }


@dataclass
class RobustnessReport:
    k: int
    n_cycles: int
    trigger_pdel: float
    seed: int
    rows: list[RobustnessRow]

    @property
    def total_redesigns(self) -> int:
        return sum(r.redesigns for r in self.rows)

    @property
    def sets_without_augmentation(self) -> int:
        return sum(1 for r in self.rows if not r.augmentation_cycles)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n_cycles": self.n_cycles,
            "trigger_pdel": self.trigger_pdel,
            "seed": self.seed,
            "rows": [r.to_dict() for r in self.rows],
            "total_redesigns": self.total_redesigns,
            "sets_without_augmentation": self.sets_without_augmentation,
        }

    def to_text(self) -> str:
        header = (
            f"{'expt':>4}  {'sources':<22}{'initial relay set':<22}"
            f"{'augmentation cycles':<22}{'final relay set':<26}{'redesigns':>9}"
        )
        lines = [header, "-" * len(header)]
        for i, r in enumerate(self.rows, start=1):
            lines.append(
                f"{i:>4}  {', '.join(r.source_ids):<22}"
                f"{', '.join(r.initial_relays) or 'none':<22}"
                f"{', '.join(map(str, r.augmentation_cycles)) or 'none':<22}"
                f"{', '.join(r.final_relays) or 'none':<26}"
                f"{r.redesigns:>9}"
            )
        lines.append(
            f"total redesigns: {self.total_redesigns}; "
            f"source sets needing no augmentation: "
            f"{self.sets_without_augmentation}/{len(self.rows)}"
        )
        return "\n".join(lines)


def _learning_snapshots(
    scenario: DeploymentScenario,
    params: ChannelParams,
    n_cycles: int,
    learn_packets: int,
    rssi_min_dbm: float,
    cycle_gap_hours: float,
) -> list[dict[tuple[str, str], float]]:
    """Per-cycle measured worst-direction outage for every unordered pair.

    All locations stay instrumented for the whole horizon (designs are
    replayed offline against the measurements), so one campaign per cycle
    serves every source set and both redundancy levels.
    """
    from .fieldsim import channel_for_scenario

    channel = channel_for_scenario(scenario, params)
    ids = sorted(n.id for n in scenario.nodes)
    snaps: list[dict[tuple[str, str], float]] = []
    for _ in range(n_cycles):
        trace = channel.hello_campaign(set(ids), learn_packets)
        snap: dict[tuple[str, str], float] = {}
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                worst = 0.0
                for key in ((a, b), (b, a)):
                    got = trace.samples.get(key)
                    n_good = int((got >= rssi_min_dbm).sum()) if got is not None else 0
                    worst = max(worst, 1.0 - n_good / learn_packets)
                snap[(a, b)] = worst
        snaps.append(snap)
        channel.advance_cycles(1, cycle_gap_hours)
    return snaps


def _apply_snapshot(
    graph: NetworkGraph,
    snap: dict[tuple[str, str], float],
    deployed: set[str],
    p_out_target: float,
) -> None:
    ids = sorted(deployed)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            p = snap[(a, b) if a < b else (b, a)]
            graph.set_learnt(a, b, p <= p_out_target, p)


def _route_pdel(
    routes: dict[str, list[list[str]]],
    snap: dict[tuple[str, str], float],
    lm: LinkModel,
    qos: QoSSpec,
    mac: MacParams,
) -> dict[str, list[float]]:
    out = {}
    for s, paths in routes.items():
        vals = []
        for p in paths:
            outages = [
                snap.get((a, b) if a < b else (b, a), 1.0) for a, b in zip(p, p[1:])
            ]
            vals.append(predict_path_pdel(outages, lm.q_max, qos.d_max_ms, mac))
        out[s] = vals
    return out


def robustness_experiment(
    scenario: DeploymentScenario,
    source_sets: list[list[str]],
    k: int,
    n_cycles: int = 40,
    trigger_pdel: float = 0.73,
    seed: int = 0,
    channel_params: ChannelParams | None = None,
    learn_packets: int = 300,
    cycle_gap_hours: float = 4.0,
    mac: MacParams | None = None,
    snapshots: list[dict[tuple[str, str], float]] | None = None,
) -> RobustnessReport:
    """Track redesigns and augmentation over a drifting channel.

    Per source set: converge an initial design in cycle 1, then each cycle
    re-predict every route from freshly learnt outages and trigger a
    redesign when some source has no route meeting the trigger (for k >= 2
    every route of the source must violate). Redesign retains all deployed
    relays; augmentation adds relays only when redesign over existing
    nodes fails.
    """
    from .fieldsim import preset as channel_preset
    from .fixtures import with_roles

    params = (channel_params or channel_preset("indoor")).with_seed(seed)
    mac = mac or MacParams()
    lm = scenario.link_model
    if lm is None:
        raise DesignerError("scenario carries no link model")
    if snapshots is None:
        snapshots = _learning_snapshots(
            scenario, params, n_cycles, learn_packets, lm.rssi_min_dbm, cycle_gap_hours
        )

    relay_pool = {n.id for n in scenario.nodes if n.role != "sink"}
    rows: list[RobustnessRow] = []
    for sources in source_sets:
        scen = with_roles(scenario, sources)
        qos = QoSSpec(
            d_max_ms=scen.qos.d_max_ms, p_del=scen.qos.p_del, k=k,
            in_time_target=scen.qos.in_time_target,
        )
        hb = hop_bound(lm.q_max, qos.d_max_ms, lm.p_out_target, qos.p_del,
                       qos.in_time_target, mac)
        h_max = hb.h_max
        graph = topology.build_model_graph(scen, lm)
        always_on = set(sources) | {scen.sink.id}
        relay_ids = {n.id for n in scen.potential_relays}

        def converge(deployed: set[str], snap, *, retain: bool):
            """Learn/evaluate/augment until feasible on learnt links."""
            _apply_snapshot(graph, snap, deployed, lm.p_out_target)
            augmented = False
            for _ in range(len(relay_ids) + 1):
                design = topology.evaluate_learnt(graph, deployed, h_max, k)
                if design is not None:
                    if not retain:
                        deployed = always_on | design.relays_used
                    return deployed, design, augmented
                hybrid = topology.hybrid_graph(graph, deployed)
                res = topology.augment(hybrid, deployed, h_max, k)
                if res is None:
                    return deployed, None, augmented
                additions, _ = res
                if not additions:
                    return deployed, None, augmented
                augmented = True
                deployed = deployed | additions
                _apply_snapshot(graph, snap, deployed, lm.p_out_target)
            return deployed, None, augmented

        # cycle 1: iterative initial design, finalized (pruned)
        initial = topology.extract_design(graph, h_max, k)
        deployed = always_on | (initial.relays_used if initial else set())
        deployed, design, _ = converge(deployed, snapshots[0], retain=False)
        if design is None:
            rows.append(
                RobustnessRow(sources, [], [], [], 0, infeasible_cycles=[1])
            )
            continue
        initial_relays = sorted(deployed & relay_ids)
        routes = design.routes
        redesigns = 0
        augmentation_cycles: list[int] = []
        infeasible_cycles: list[int] = []

        for c in range(2, n_cycles + 1):
            snap = snapshots[c - 1]
            _apply_snapshot(graph, snap, deployed, lm.p_out_target)
            pdel = _route_pdel(routes, snap, lm, qos, mac)
            violated = [s for s, vals in pdel.items() if all(v < trigger_pdel for v in vals)]
            if not violated:
                continue
            redesigns += 1
            before = set(deployed)
            deployed, design, augmented = converge(deployed, snap, retain=True)
            if design is None:
                infeasible_cycles.append(c)
                deployed = before
                continue
            if augmented:
                augmentation_cycles.append(c)
            routes = design.routes

        rows.append(
            RobustnessRow(
                source_ids=list(sources),
                initial_relays=initial_relays,
                augmentation_cycles=augmentation_cycles,
                final_relays=sorted(deployed & relay_ids),
                redesigns=redesigns,
                infeasible_cycles=infeasible_cycles,
            )
        )
    return RobustnessReport(
        k=k, n_cycles=n_cycles, trigger_pdel=trigger_pdel, seed=seed, rows=rows
    )
