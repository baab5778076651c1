"""Event-driven simulation of beaconless CSMA/CA over a designed topology.

Packets arrive Poisson at each source and follow that source's designed
route hop by hop through FIFO relay queues. Each transmission attempt
draws a backoff (exponent grows per attempt), senses the channel against
concurrently transmitting nodes within carrier-sense range, pays the
frame/ACK overheads, and succeeds unless the per-packet RSSI drops below
the reception threshold, the PER coin fails, or an interfering frame
collides. At lone-packet rates this reduces exactly to the analytical
attempt process used for the QoS mapping, which the tests cross-check.

All bookkeeping runs on integer microseconds for bit-exact determinism.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .fieldsim import GroundTruthChannel
from .graphs import Design
from .qosmap import MacParams, QoSSpec


class MacSimError(ValueError):
    pass


@dataclass
class DeliveryWindow:
    window_index: int
    packets_sent: int
    delivered_in_time: int

    @property
    def p_del_hat(self) -> float:
        return self.delivered_in_time / self.packets_sent


@dataclass
class DeliveryLog:
    window_size: int
    per_source: dict[str, list[DeliveryWindow]] = field(default_factory=dict)

    def mean_pdel(self, source: str | None = None) -> float:
        if source is not None:
            wins = self.per_source.get(source, [])
        else:
            wins = [w for ws in self.per_source.values() for w in ws]
        if not wins:
            return 0.0
        return sum(w.delivered_in_time for w in wins) / sum(w.packets_sent for w in wins)

    def to_rows(self) -> list[tuple[int, str, float]]:
        rows = []
        for src in sorted(self.per_source):
            for w in self.per_source[src]:
                rows.append((w.window_index, src, w.p_del_hat))
        return rows

    def to_dict(self) -> dict:
        return {
            "window_size": self.window_size,
            "per_source": {
                s: [
                    {
                        "window_index": w.window_index,
                        "packets_sent": w.packets_sent,
                        "delivered_in_time": w.delivered_in_time,
                        "p_del_hat": w.p_del_hat,
                    }
                    for w in ws
                ]
                for s, ws in sorted(self.per_source.items())
            },
        }


class _Packet:
    __slots__ = ("src", "order", "path", "hop", "attempt", "nb", "be", "created", "fade_ok")

    def __init__(self, src, order, path, created):
        self.src = src
        self.order = order
        self.path = path
        self.hop = 0
        self.attempt = 1
        self.nb = 0
        self.be = 0
        self.created = created
        self.fade_ok = None  # per-hop fade state, drawn at the first attempt


class _Frame:
    __slots__ = ("tx", "rx", "start", "end", "corrupt")

    def __init__(self, tx, rx, start, end):
        self.tx = tx
        self.rx = rx
        self.start = start
        self.end = end
        self.corrupt = False


def run_mac_sim(
    design: Design,
    channel: GroundTruthChannel,
    qos: QoSSpec,
    arrival_rate_per_source: float,
    duration_s: float,
    mac: MacParams | None = None,
    seed: int = 0,
    q_link: float = 0.05,
    rssi_min_dbm: float = -88.0,
    cs_range_m: float = 12.0,
    route_index: int = 0,
    window_size: int = 100,
    max_events: int = 20_000_000,
) -> DeliveryLog:
    """Simulate the designed network and return windowed delivery ratios."""
    if arrival_rate_per_source <= 0:
        raise MacSimError("arrival rate must be positive")
    mac = mac or MacParams()
    rng = np.random.default_rng(seed)

    unit = mac.unit_us
    cca = round(mac.cca_ms * 1000)
    turn = round(mac.turnaround_ms * 1000)
    frame_us = round(mac.frame_tx_ms * 1000)
    ack = round(mac.ack_ms * 1000)
    d_max_us = round(qos.d_max_ms * 1000)
    duration_us = round(duration_s * 1_000_000)

    routes = {}
    for src, paths in design.routes.items():
        if route_index >= len(paths):
            raise MacSimError(f"source {src} has no route {route_index}")
        routes[src] = paths[route_index]
    sources = sorted(routes)

    pos = channel.positions

    def within_cs(a: str, b: str) -> bool:
        (xa, ya), (xb, yb) = pos[a], pos[b]
        return math.hypot(xa - xb, ya - yb) <= cs_range_m

    queue: dict[str, list[_Packet]] = {}
    busy: dict[str, bool] = {}
    for path in routes.values():
        for v in path:
            queue.setdefault(v, [])
            busy.setdefault(v, False)

    outcomes: dict[str, list[bool]] = {s: [] for s in sources}
    counts: dict[str, int] = {s: 0 for s in sources}
    active: list[_Frame] = []
    events: list = []
    tick = 0

    def push(t: int, kind: str, data) -> None:
        nonlocal tick
        tick += 1
        heapq.heappush(events, (t, tick, kind, data))

    def backoff_for(pkt: _Packet) -> int:
        return int(rng.integers(0, 1 << pkt.be)) * unit

    def start_attempt(node: str, pkt: _Packet, t: int) -> None:
        pkt.nb = 0
        pkt.be = min(mac.mac_min_be + pkt.attempt - 1, mac.mac_max_be)
        push(t + backoff_for(pkt) + cca, "cca", (node, pkt))

    def resolve(pkt: _Packet, delivered_at: int | None) -> None:
        in_time = delivered_at is not None and delivered_at - pkt.created <= d_max_us
        outcomes[pkt.src][pkt.order] = in_time

    def node_idle(node: str, t: int) -> None:
        busy[node] = False
        serve(node, t)

    def serve(node: str, t: int) -> None:
        if busy[node] or not queue[node]:
            return
        busy[node] = True
        start_attempt(node, queue[node][0], t)

    for s in sources:
        gap = rng.exponential(1.0 / arrival_rate_per_source)
        push(round(gap * 1_000_000), "arrival", s)

    n_events = 0
    while events:
        n_events += 1
        if n_events > max_events:
            break  # unresolved packets stay counted as not delivered
        t, _, kind, data = heapq.heappop(events)

        if kind == "arrival":
            src = data
            pkt = _Packet(src, counts[src], routes[src], t)
            counts[src] += 1
            outcomes[src].append(False)
            queue[src].append(pkt)
            gap = rng.exponential(1.0 / arrival_rate_per_source)
            nxt = t + round(gap * 1_000_000)
            if nxt < duration_us:
                push(nxt, "arrival", src)
            serve(src, t)

        elif kind == "cca":
            node, pkt = data
            channel_busy = any(f.tx != node and within_cs(node, f.tx) for f in active)
            if channel_busy:
                pkt.nb += 1
                if pkt.nb > mac.max_csma_backoffs:
                    queue[node].pop(0)
                    resolve(pkt, None)
                    node_idle(node, t)
                else:
                    pkt.be = min(pkt.be + 1, mac.mac_max_be)
                    push(t + backoff_for(pkt) + cca, "cca", (node, pkt))
            else:
                rx = pkt.path[pkt.hop + 1]
                fr = _Frame(node, rx, t + turn, t + turn + frame_us)
                for other in active:
                    if within_cs(other.rx, fr.tx):
                        other.corrupt = True
                    if within_cs(fr.rx, other.tx):
                        fr.corrupt = True
                active.append(fr)
                push(fr.end, "tx_end", (node, pkt, fr))

        elif kind == "tx_end":
            node, pkt, fr = data
            active.remove(fr)
            if pkt.fade_ok is None:
                # the fade state outlives this packet's retries on the hop
                rssi = float(channel.sample_rssi((node, fr.rx), n=1)[0])
                pkt.fade_ok = rssi >= rssi_min_dbm
            ok = pkt.fade_ok and rng.random() >= q_link and not fr.corrupt
            t_done = t + ack
            if ok:
                queue[node].pop(0)
                pkt.hop += 1
                pkt.fade_ok = None
                if pkt.hop == len(pkt.path) - 1:
                    resolve(pkt, t_done)
                else:
                    pkt.attempt = 1
                    push(t_done, "handoff", (fr.rx, pkt))
                push(t_done, "idle", node)
            else:
                pkt.attempt += 1
                if pkt.attempt > mac.max_tx_attempts:
                    queue[node].pop(0)
                    resolve(pkt, None)
                    push(t_done, "idle", node)
                else:
                    start_attempt(node, pkt, t_done)

        elif kind == "handoff":
            node, pkt = data
            queue[node].append(pkt)
            serve(node, t)

        elif kind == "idle":
            node_idle(data, t)

    log = DeliveryLog(window_size=window_size)
    for s in sources:
        flags = outcomes[s]
        wins = []
        for w in range(len(flags) // window_size):
            chunk = flags[w * window_size : (w + 1) * window_size]
            wins.append(DeliveryWindow(w, len(chunk), sum(chunk)))
        log.per_source[s] = wins
    return log


def estimate_lambda_max(
    design: Design,
    channel_factory,
    qos: QoSSpec,
    mac: MacParams | None = None,
    seed: int = 0,
    packets_per_eval: int = 400,
    lo: float = 0.05,
    rel_tol: float = 0.2,
    **sim_kw,
) -> float:
    """Largest per-source Poisson rate that still meets the delivery target.

    Geometric bracketing then bisection; every evaluation runs on a fresh
    identically-seeded channel so rates see the same field.
    """

    def feasible(rate: float) -> bool:
        duration = packets_per_eval / rate
        log = run_mac_sim(
            design, channel_factory(), qos, rate, duration, mac=mac, seed=seed, **sim_kw
        )
        vals = [log.mean_pdel(s) for s in log.per_source]
        return bool(vals) and min(vals) >= qos.p_del

    if not feasible(lo):
        raise MacSimError(f"network misses the target even at rate {lo} pkt/s")
    hi = lo
    for _ in range(24):
        hi *= 2.0
        if not feasible(hi):
            break
    else:
        return hi
    lo_ok = hi / 2.0
    while hi / lo_ok > 1.0 + rel_tol:
        mid = math.sqrt(lo_ok * hi)
        if feasible(mid):
            lo_ok = mid
        else:
            hi = mid
    return lo_ok
