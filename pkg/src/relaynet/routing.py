"""Network operation: static k-route selection and an RPL-like dynamic
routing simulator.

The dynamic side models the conservative estimation behaviour of RPL:
link PER estimates update only on links actually carrying data or control
traffic (EWMA over 20-packet windows), each node keeps a preferred parent
among its learnt-good neighbors, and rank is the additive path cost
-ln(success probability) down to the sink. Nodes detach when no eligible
parent remains, which reproduces the observed failure mode where a
QoS-satisfying path exists but the protocol cannot find it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fieldsim import GroundTruthChannel
from .graphs import Design
from .qosmap import MacParams, QoSSpec

EWMA_EPS = 1e-4
TRACEROUTE_PERIOD_S = 150.0
PER_WINDOW = 20  # packets per link-estimate window
POLICY_A_WAIT = 1  # grace windows before invoking repair
POLICY_B_WAIT = math.ceil(140 / 100)  # from 7 estimate windows of 20 packets


class RoutingError(ValueError):
    pass


def ewma_update(previous: float, window_per: float, alpha: float = 0.5) -> float:
    """current = (1-alpha)*window + alpha*previous, clamped to [eps, 1]."""
    if not 0.0 <= previous <= 1.0 or not 0.0 <= window_per <= 1.0:
        raise RoutingError("PER values must be in [0,1]")
    value = (1.0 - alpha) * window_per + alpha * previous
    return min(1.0, max(EWMA_EPS, value))


@dataclass
class RplNodeState:
    node_id: str
    potential_parents: set[str]
    link_estimate: dict[str, float]
    rank: float = math.inf
    preferred_parent: str | None = None


def _edge_cost(q_hat: float) -> float:
    if q_hat >= 1.0:
        return math.inf
    return -math.log(1.0 - max(q_hat, EWMA_EPS))


def recompute_rank_and_parent(
    node: RplNodeState, neighbor_ranks: dict[str, float]
) -> tuple[RplNodeState, bool]:
    """Pick the parent minimizing rank; detach when none is eligible.

    Only parents whose advertised rank is below the node's current rank
    are eligible (loop avoidance); a parent with estimate 1 is never
    eligible (its cost is infinite). Returns the updated state and whether
    anything moved (which would enqueue a rank broadcast).
    """
    best_parent = None
    best_rank = math.inf
    for p in sorted(node.potential_parents):
        r = neighbor_ranks.get(p, math.inf)
        if not r < node.rank:
            continue
        cost = _edge_cost(node.link_estimate.get(p, 1.0))
        candidate = r + cost
        if candidate < best_rank:
            best_rank = candidate
            best_parent = p
    changed = best_parent != node.preferred_parent or abs(best_rank - node.rank) > 1e-9
    updated = replace(node, rank=best_rank, preferred_parent=best_parent)
    return updated, changed


@dataclass
class StaticRouteState:
    routes: list[list[str]]
    active_index: int = 0
    last_traceroute_s: float = -math.inf
    failed: bool = False

    @property
    def active_route(self) -> list[str]:
        return self.routes[self.active_index]


def static_route_step(state: StaticRouteState, t_s: float, probe) -> StaticRouteState:
    """Probe the active route every 150 s; round-robin to the next on failure.

    With a single route there is nothing to switch to: the source just
    stays on it (and is delivery-failed while the route is down).
    """
    if t_s - state.last_traceroute_s < TRACEROUTE_PERIOD_S:
        return state
    state = replace(state, last_traceroute_s=t_s)
    if len(state.routes) < 2:
        return state
    if not probe(state.active_route):
        return replace(state, active_index=(state.active_index + 1) % len(state.routes))
    return state


def repair_trigger_check(
    windows: list[float], target: float, wait_windows: int = POLICY_A_WAIT
) -> str:
    """'trigger' when the violation outlives the policy's grace windows."""
    need = wait_windows + 1
    if len(windows) < need:
        return "hold"
    if all(w < target for w in windows[-need:]):
        return "trigger"
    return "hold"


# ---------------------------------------------------------------------------
# packet-level comparison of static routing vs dynamic (RPL-like) routing


@dataclass
class ProtocolTrace:
    windows: dict[str, list[float]] = field(default_factory=dict)  # source -> p_del per window

    def mean(self, source: str | None = None) -> float:
        if source is not None:
            vals = self.windows.get(source, [])
        else:
            vals = [v for ws in self.windows.values() for v in ws]
        return sum(vals) / len(vals) if vals else 0.0


@dataclass
class CompareResult:
    static: ProtocolTrace
    rpl: ProtocolTrace
    window_size: int

    def to_rows(self) -> list[tuple[int, str, float, str]]:
        rows = []
        for proto, trace in (("static", self.static), ("rpl", self.rpl)):
            for src in sorted(trace.windows):
                for i, v in enumerate(trace.windows[src]):
                    rows.append((i, src, v, proto))
        rows.sort(key=lambda r: (r[3], r[1], r[0]))
        return rows


class _LinkMeter:
    """Per-link 20-packet windows feeding the EWMA estimate."""

    __slots__ = ("q_hat", "sent", "failed")

    def __init__(self, q0: float):
        self.q_hat = max(EWMA_EPS, min(1.0, q0))
        self.sent = 0
        self.failed = 0

    def record(self, delivered: bool) -> bool:
        self.sent += 1
        self.failed += 0 if delivered else 1
        if self.sent >= PER_WINDOW:
            self.q_hat = ewma_update(self.q_hat, self.failed / self.sent)
            self.sent = 0
            self.failed = 0
            return True
        return False


class RoutingSimulator:
    """Drives static and RPL overlays over one seeded ground-truth field.

    Each protocol gets its own channel replica built by channel_factory, so
    both see an identical slow-fading evolution while drawing independent
    per-packet noise (two co-located motes on different RF channels).
    """

    def __init__(
        self,
        design: Design,
        channel_factory,
        qos: QoSSpec,
        good_pairs: set[tuple[str, str]],
        deployment_outage: dict[tuple[str, str], float],
        mac: MacParams | None = None,
        seed: int = 0,
        q_link: float = 0.05,
        rssi_min_dbm: float = -88.0,
        data_period_s: float = 15.0,
        drift_every_s: float = 4 * 3600.0,
        window_size: int = 100,
    ):
        self.design = design
        self.qos = qos
        self.mac = mac or MacParams()
        self.good_pairs = set(good_pairs)
        self.deployment_outage = dict(deployment_outage)
        self.q_link = q_link
        self.rssi_min = rssi_min_dbm
        self.data_period_s = data_period_s
        self.drift_every_s = drift_every_s
        self.window_size = window_size
        self.ch_static: GroundTruthChannel = channel_factory()
        self.ch_rpl: GroundTruthChannel = channel_factory()
        self.rng = np.random.default_rng(np.random.SeedSequence((seed, 917)))
        self.sink = self._find_sink()
        self.sources = sorted(design.routes)
        self.static_state = {
            s: StaticRouteState(routes=[list(p) for p in design.routes[s]])
            for s in self.sources
        }
        self.nodes = self._init_rpl_nodes()
        self._used_links: set[tuple[str, str]] = set()
        self._propagate_ranks()

    def _find_sink(self) -> str:
        any_route = next(iter(self.design.routes.values()))
        return any_route[0][-1]

    def _init_rpl_nodes(self) -> dict[str, RplNodeState]:
        members: set[str] = set()
        for paths in self.design.routes.values():
            for p in paths:
                members.update(p)
        nodes = {}
        for v in sorted(members):
            parents = set()
            estimates = {}
            for a, b in self.good_pairs:
                if v in (a, b):
                    other = b if v == a else a
                    if other in members:
                        parents.add(other)
                        key = (a, b)
                        estimates[other] = max(
                            EWMA_EPS, min(1.0, self.deployment_outage.get(key, 1.0))
                        )
            nodes[v] = RplNodeState(
                node_id=v,
                potential_parents=parents,
                link_estimate=estimates,
                rank=0.0 if v == self.sink else math.inf,
                preferred_parent=None,
            )
        return nodes

    def _propagate_ranks(self) -> None:
        """Settle ranks to the zero-propagation-delay fixpoint.

        Synchronous local relaxation can count to infinity through a rank
        loop (two nodes adopting each other with stale ranks, creeping up
        by the loop cost each round); with instantaneous broadcasts the
        settled ranks are exactly the shortest -ln(1-q̂) costs to the
        sink, so they are computed sink-out and every node then applies
        the local parent rule against the settled values.
        """
        import heapq

        ranks = {v: math.inf for v in self.nodes}
        ranks[self.sink] = 0.0
        children: dict[str, list[str]] = {v: [] for v in self.nodes}
        for v, node in self.nodes.items():
            for p in node.potential_parents:
                if p in children:
                    children[p].append(v)
        heap = [(0.0, self.sink)]
        done: set[str] = set()
        while heap:
            d, p = heapq.heappop(heap)
            if p in done:
                continue
            done.add(p)
            for v in sorted(children[p]):
                if v == self.sink:
                    continue
                cand = d + _edge_cost(self.nodes[v].link_estimate.get(p, 1.0))
                if cand < ranks[v]:
                    ranks[v] = cand
                    heapq.heappush(heap, (cand, v))
        for v in sorted(self.nodes):
            if v == self.sink:
                continue
            fresh = replace(self.nodes[v], rank=math.inf, preferred_parent=None)
            self.nodes[v], _ = recompute_rank_and_parent(fresh, ranks)

    def _attempt_delay_us(self, attempts: int) -> int:
        mac = self.mac
        total = attempts * mac.overhead_us
        for j in range(1, attempts + 1):
            be = min(mac.mac_min_be + j - 1, mac.mac_max_be)
            total += int(self.rng.integers(0, 1 << be)) * mac.unit_us
        return total

    def _send_over(self, channel: GroundTruthChannel, a: str, b: str) -> tuple[bool, int, int]:
        """One packet over one link: (delivered, attempts used, delay_us).

        The fade state outlives a packet's retries, so the RSSI is drawn
        once per packet; only the PER coin is independent per attempt.
        """
        rssi = float(channel.sample_rssi((a, b), n=1)[0])
        if rssi >= self.rssi_min:
            for attempt in range(1, self.mac.max_tx_attempts + 1):
                if self.rng.random() >= self.q_link:
                    return True, attempt, self._attempt_delay_us(attempt)
        n = self.mac.max_tx_attempts
        return False, n, self._attempt_delay_us(n)

    def _walk(self, channel: GroundTruthChannel, path: list[str], meters=None):
        delay = 0
        for a, b in zip(path, path[1:]):
            ok, _, d_us = self._send_over(channel, a, b)
            delay += d_us
            if meters is not None:
                self._meter_record(meters, a, b, ok)
            if not ok:
                return False, delay
        return True, delay

    def _meter_record(self, meters: dict, a: str, b: str, delivered: bool) -> None:
        key = (a, b) if a < b else (b, a)
        self._used_links.add(key)
        meter = meters.get(key)
        if meter is None:
            meter = _LinkMeter(self.deployment_outage.get(key, 1.0))
            meters[key] = meter
        if meter.record(delivered):
            # estimate moved: both endpoints re-evaluate this link
            for v in (a, b):
                node = self.nodes.get(v)
                other = b if v == a else a
                if node is not None and other in node.link_estimate:
                    node.link_estimate[other] = meter.q_hat
            self._propagate_ranks()

    def _rpl_path(self, source: str) -> list[str] | None:
        path = [source]
        seen = {source}
        v = source
        while v != self.sink:
            parent = self.nodes[v].preferred_parent
            if parent is None or parent in seen:
                return None
            path.append(parent)
            seen.add(parent)
            v = parent
        return path

    def run(
        self,
        n_packets_per_source: int,
        interventions: list[tuple[int, object]] | None = None,
    ) -> CompareResult:
        """Simulate both protocols for n data packets per source.

        interventions is a list of (packet_round, fn(static_channel,
        rpl_channel)) applied before that round (ground-truth edits).
        """
        meters: dict = {}
        pending = sorted(interventions or [], key=lambda iv: iv[0])
        d_max_us = round(self.qos.d_max_ms * 1000)
        stat_ok: dict[str, list[bool]] = {s: [] for s in self.sources}
        rpl_ok: dict[str, list[bool]] = {s: [] for s in self.sources}
        drift_rounds = max(1, round(self.drift_every_s / self.data_period_s))

        for rnd in range(n_packets_per_source):
            while pending and pending[0][0] <= rnd:
                _, fn = pending.pop(0)
                fn(self.ch_static, self.ch_rpl)
            if rnd > 0 and rnd % drift_rounds == 0:
                self.ch_static.advance_cycles(1)
                self.ch_rpl.advance_cycles(1)
            t_s = rnd * self.data_period_s

            for s in self.sources:
                # static network: probe/switch, then send over the active route
                self.static_state[s] = static_route_step(
                    self.static_state[s], t_s, lambda route: self._probe(route)
                )
                ok, delay = self._walk(self.ch_static, self.static_state[s].active_route)
                stat_ok[s].append(ok and delay <= d_max_us)

                # RPL network: data along preferred parents, metering links
                path = self._rpl_path(s)
                if path is None:
                    rpl_ok[s].append(False)
                else:
                    ok, delay = self._walk(self.ch_rpl, path, meters)
                    rpl_ok[s].append(ok and delay <= d_max_us)

            # DAO control packets along every active tree link keep
            # estimates fresh even where no data flows
            for v in sorted(self.nodes):
                parent = self.nodes[v].preferred_parent
                if parent is not None:
                    ok, _, _ = self._send_over(self.ch_rpl, v, parent)
                    self._meter_record(meters, v, parent, ok)

        def windowed(flags: dict[str, list[bool]]) -> ProtocolTrace:
            trace = ProtocolTrace()
            for s, arr in flags.items():
                wins = []
                for w in range(len(arr) // self.window_size):
                    chunk = arr[w * self.window_size : (w + 1) * self.window_size]
                    wins.append(sum(chunk) / len(chunk))
                trace.windows[s] = wins
            return trace

        return CompareResult(
            static=windowed(stat_ok), rpl=windowed(rpl_ok), window_size=self.window_size
        )

    def _probe(self, route: list[str]) -> bool:
        ok, _ = self._walk(self.ch_static, route)
        return ok


def deploy_and_compare(
    scenario,
    channel_params,
    seed: int = 0,
    n_packets_per_source: int = 3000,
    learn_packets: int = 1000,
    pre_interventions=None,
    run_interventions=None,
    q_link: float = 0.05,
    data_period_s: float = 15.0,
    drift_every_s: float = 4 * 3600.0,
) -> tuple[CompareResult, "object", set[tuple[str, str]]]:
    """Design a network on a seeded field, then race static routing vs RPL.

    pre_interventions(channel) runs before deployment learning on every
    channel replica (to shape what gets learnt); run_interventions is a
    list of (packet_round, fn(static_channel, rpl_channel)) ground-truth
    edits applied mid-run. Returns (result, session, learnt_good_pairs).
    """
    from . import designer as _designer
    from .fieldsim import channel_for_scenario

    params = channel_params.with_seed(seed)

    def factory():
        ch = channel_for_scenario(scenario, params)
        if pre_interventions is not None:
            pre_interventions(ch)
        return ch

    session = _designer.new_session(scenario, learn_packets=learn_packets)
    field = _designer.SimulatedField(factory(), n_packets=learn_packets)
    design = _designer.iterate_until_feasible(session, field)
    if design is None:
        raise RoutingError("deployment design is infeasible on this seed")

    deployed = set(session.deployed)
    good_pairs = set()
    outage = {}
    for e in session.graph.edges():
        if e.a in deployed and e.b in deployed and e.provenance == "learnt_good":
            good_pairs.add((e.a, e.b))
            outage[(e.a, e.b)] = e.p_out_hat if e.p_out_hat is not None else 0.0

    sim = RoutingSimulator(
        design,
        factory,
        session.qos,
        good_pairs,
        outage,
        mac=session.mac,
        seed=seed,
        q_link=q_link,
        rssi_min_dbm=session.link_model.rssi_min_dbm,
        data_period_s=data_period_s,
        drift_every_s=drift_every_s,
    )
    result = sim.run(n_packets_per_source, interventions=run_interventions)
    return result, session, good_pairs
