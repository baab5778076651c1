"""QoS-to-hop-count mapping under the lone-packet traffic assumption.

Per-hop delay is the CSMA/CA backoff-and-attempt process: attempt j draws a
uniform backoff over {0..2^BE-1} units with BE = min(min_be + j - 1, max_be),
then pays CCA + turnaround + frame + ACK; the attempt succeeds with
probability 1-q, and a packet is dropped after max_tx_attempts failures.
Everything is computed exactly on an integer microsecond grid (the gcd of
the backoff unit and the per-attempt overhead), so h-fold convolutions and
tail probabilities carry no sampling error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class QosError(ValueError):
    pass


class InfeasibleQos(QosError):
    pass


@dataclass(frozen=True)
class MacParams:
    """Beaconless CSMA/CA timing for the 2.4 GHz PHY at 250 kb/s.

    Defaults: 0.32 ms backoff unit (20 symbols), 133-byte PHY frame
    (4.256 ms), 11-byte ACK (0.352 ms), 12-symbol turnaround, 8-symbol CCA.
    These are configuration, not constants; the per-attempt overhead is
    cca + turnaround + frame + ack.
    """

    backoff_unit_ms: float = 0.32
    mac_min_be: int = 3
    mac_max_be: int = 5
    max_csma_backoffs: int = 4
    max_tx_attempts: int = 4
    frame_tx_ms: float = 4.256
    ack_ms: float = 0.352
    turnaround_ms: float = 0.192
    cca_ms: float = 0.128

    def __post_init__(self):
        if self.max_tx_attempts < 1:
            raise QosError("max_tx_attempts must be >= 1")

    @property
    def attempt_overhead_ms(self) -> float:
        return self.cca_ms + self.turnaround_ms + self.frame_tx_ms + self.ack_ms

    def _us(self, ms: float) -> int:
        us = round(ms * 1000)
        if abs(us - ms * 1000) > 1e-6:
            raise QosError(f"timing {ms} ms is not an integer number of microseconds")
        return us

    @property
    def unit_us(self) -> int:
        return self._us(self.backoff_unit_ms)

    @property
    def overhead_us(self) -> int:
        return self._us(self.attempt_overhead_ms)


@dataclass(frozen=True)
class QoSSpec:
    d_max_ms: float
    p_del: float
    k: int = 1
    in_time_target: float = 0.9999

    def __post_init__(self):
        if self.d_max_ms <= 0:
            raise QosError("d_max_ms must be positive")
        if not 0.0 < self.p_del < 1.0:
            raise QosError("p_del must be in (0,1)")
        if self.k < 1:
            raise QosError("k must be >= 1")
        if not self.p_del < self.in_time_target:
            raise QosError("p_del must be below in_time_target")

    def to_dict(self) -> dict:
        return {
            "d_max_ms": self.d_max_ms,
            "p_del": self.p_del,
            "k": self.k,
            "in_time_target": self.in_time_target,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QoSSpec":
        return cls(**d)


@dataclass
class HopDelayPMF:
    """Delay distribution of one hop conditioned on eventual delivery.

    probs[i] is the probability of a delay of exactly i * tick_us
    microseconds; drop_prob is the unconditional probability that the
    packet is dropped after exhausting its transmission attempts.
    """

    tick_us: int
    probs: np.ndarray
    drop_prob: float

    @property
    def grid_ms(self) -> float:
        return self.tick_us / 1000.0

    @property
    def mass(self) -> dict[float, float]:
        return {
            i * self.tick_us / 1000.0: float(p)
            for i, p in enumerate(self.probs)
            if p > 0.0
        }

    def cdf(self, delay_ms: float) -> float:
        idx = math.floor(delay_ms * 1000.0 / self.tick_us)
        if idx < 0:
            return 0.0
        return float(self.probs[: idx + 1].sum())

    def mean_ms(self) -> float:
        return float((self.probs * np.arange(self.probs.size)).sum() * self.tick_us / 1000.0)


def hop_delay_pmf(q: float, mac: MacParams | None = None) -> HopDelayPMF:
    """Exact single-hop delay PMF given delivery, for link PER q.

    Assumes the lone-packet regime: the first CCA always finds the channel
    idle, so delay is backoffs plus per-attempt overheads only.
    """
    mac = mac or MacParams()
    if not 0.0 <= q < 1.0:
        raise QosError("q must be in [0,1)")
    unit, over = mac.unit_us, mac.overhead_us
    tick = math.gcd(unit, over)
    unit_t, over_t = unit // tick, over // tick
    n = mac.max_tx_attempts

    # backoff pmf of attempt j, in ticks
    def backoff(j: int) -> np.ndarray:
        be = min(mac.mac_min_be + j - 1, mac.mac_max_be)
        m = 1 << be
        arr = np.zeros((m - 1) * unit_t + 1)
        arr[:: unit_t][:m] = 1.0 / m
        return arr

    drop = q**n
    norm = 1.0 - drop
    parts: list[tuple[float, np.ndarray, int]] = []
    acc = np.array([1.0])
    for j in range(1, n + 1):
        acc = np.convolve(acc, backoff(j))
        w = (q ** (j - 1)) * (1.0 - q) / norm
        parts.append((w, acc, j * over_t))
    size = max(p.size + off for _, p, off in parts)
    probs = np.zeros(size)
    for w, p, off in parts:
        if w > 0.0:
            probs[off : off + p.size] += w * p
    return HopDelayPMF(tick_us=tick, probs=probs, drop_prob=drop)


def convolve_hops(pmf: HopDelayPMF, h: int) -> HopDelayPMF:
    """Exact h-fold convolution of a hop PMF (path delay over h hops)."""
    if h < 1:
        raise QosError("h must be >= 1")
    out = pmf.probs
    for _ in range(h - 1):
        out = np.convolve(out, pmf.probs)
    return HopDelayPMF(tick_us=pmf.tick_us, probs=out, drop_prob=pmf.drop_prob)


@lru_cache(maxsize=512)
def _delay_cdf(q: float, d_max_ms: float, h: int, mac: MacParams) -> float:
    """D^(h)_q(d_max): in-time probability over h hops given delivery.

    Convolutions are truncated just past d_max; truncation is exact for
    every probability at or below the horizon.
    """
    pmf = hop_delay_pmf(q, mac)
    horizon = math.floor(d_max_ms * 1000.0 / pmf.tick_us) + 1
    base = pmf.probs[:horizon]
    out = base
    for _ in range(h - 1):
        out = np.convolve(out, base)[:horizon]
    return float(out.sum())


@dataclass(frozen=True)
class HopBound:
    h_max: int
    h_max_1: int
    h_max_2: int | None  # None when p_out = 0 (no outage limit)

    def to_dict(self) -> dict:
        return {"h_max": self.h_max, "h_max_1": self.h_max_1, "h_max_2": self.h_max_2}


H_SEARCH_CAP = 32  # paths longer than this are useless at the scales we design for


def hop_bound(
    q_max: float,
    d_max_ms: float,
    p_out: float,
    p_del: float,
    in_time_target: float = 0.9999,
    mac: MacParams | None = None,
    h_cap: int = H_SEARCH_CAP,
) -> HopBound:
    """Map QoS targets to the hop-count bound h_max = min(h1, h2).

    h1 is the largest hop count whose in-time probability (given delivery)
    still meets in_time_target at d_max; h2 bounds the path outage budget:
    floor(ln(p_del / in_time_target) / ln(1 - p_out)).
    """
    mac = mac or MacParams()
    if not 0.0 <= p_out < 1.0:
        raise QosError("p_out must be in [0,1)")
    if not p_del < in_time_target:
        raise InfeasibleQos("p_del must be below in_time_target")

    h1 = 0
    for h in range(1, h_cap + 1):
        if _delay_cdf(q_max, d_max_ms, h, mac) >= in_time_target:
            h1 = h
        else:
            break
    if h1 == 0:
        raise InfeasibleQos("infeasible QoS: a single hop already misses the delay target")

    if p_out == 0.0:
        h2 = None
        h_max = h1
    else:
        h2 = math.floor(math.log(p_del / in_time_target) / math.log(1.0 - p_out))
        if h2 < 1:
            raise InfeasibleQos("infeasible QoS: outage budget allows no hops")
        h_max = min(h1, h2)
    return HopBound(h_max=h_max, h_max_1=h1, h_max_2=h2)


def predict_path_pdel(
    per_link_outage: list[float],
    q_max: float,
    d_max_ms: float,
    mac: MacParams | None = None,
) -> float:
    """Delay-bounded delivery probability of one path from its link outages.

    prod_i (1 - p_out_i) * (1 - q^n)^h * D^(h)_q(d_max), i.e. the delivery
    inequality evaluated with measured link outages in place of the uniform
    outage bound.
    """
    mac = mac or MacParams()
    h = len(per_link_outage)
    if h < 1:
        raise QosError("path must have at least one hop")
    for p in per_link_outage:
        if not 0.0 <= p <= 1.0:
            raise QosError(f"link outage {p} outside [0,1]")
    not_in_outage = 1.0
    for p in per_link_outage:
        not_in_outage *= 1.0 - p
    if not_in_outage == 0.0:
        return 0.0
    not_dropped = (1.0 - q_max**mac.max_tx_attempts) ** h
    return not_in_outage * not_dropped * _delay_cdf(q_max, d_max_ms, h, mac)
