"""Link quality modeling from hello-packet RSSI traces.

Distills a measurement campaign into per-link outage estimates, a
p_bad-vs-length curve, and a single communication range r_max such that
links shorter than r_max are likely to be good. A link is "good" when its
outage probability (fraction of packets arriving below rssi_min, with lost
packets counted as outage) stays within the target p_out.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LOW_CONFIDENCE_BIN = 5  # bins with fewer links are flagged in reports


class LinkModelError(ValueError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    tx_id: str
    rx_id: str
    seq: int
    rssi_dbm: float
    time_ms: float


class MeasurementTrace:
    """Received hello packets plus per-directed-pair transmit counts.

    Stored column-wise per directed pair (campaigns produce millions of
    samples); lost packets leave no sample, and n_sent carries how many
    were transmitted so losses can be counted toward outage.
    """

    def __init__(
        self,
        samples: dict[tuple[str, str], np.ndarray] | None = None,
        n_sent: dict[tuple[str, str], int] | None = None,
    ):
        self.samples = {k: np.asarray(v, dtype=float) for k, v in (samples or {}).items()}
        self.n_sent = dict(n_sent or {})
        for tx, rx in list(self.samples) + list(self.n_sent):
            if tx == rx:
                raise LinkModelError(f"self-loop pair {tx}->{rx}")

    @classmethod
    def from_records(
        cls, records: list[TraceRecord], n_sent: dict[tuple[str, str], int] | None = None
    ) -> "MeasurementTrace":
        by_pair: dict[tuple[str, str], list[TraceRecord]] = {}
        for r in records:
            by_pair.setdefault((r.tx_id, r.rx_id), []).append(r)
        samples = {}
        for key, recs in by_pair.items():
            seqs = [r.seq for r in sorted(recs, key=lambda r: r.time_ms)]
            if any(b < a for a, b in zip(seqs, seqs[1:])):
                raise LinkModelError(f"non-monotone sequence numbers on {key}")
            samples[key] = np.array([r.rssi_dbm for r in recs])
        return cls(samples=samples, n_sent=n_sent)

    def pairs(self) -> set[tuple[str, str]]:
        return set(self.samples) | set(self.n_sent)

    def iter_records(self):
        for key in sorted(self.samples):
            tx, rx = key
            for i, rssi in enumerate(self.samples[key]):
                yield TraceRecord(tx, rx, seq=i, rssi_dbm=float(rssi), time_ms=10.0 * i)

    def write_csv(self, path: str | Path, meta_path: str | Path | None = None) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["tx_id", "rx_id", "seq", "rssi_dbm", "time_ms"])
            for r in self.iter_records():
                w.writerow([r.tx_id, r.rx_id, r.seq, repr(r.rssi_dbm), repr(r.time_ms)])
        if meta_path is not None:
            meta = {f"{tx}->{rx}": n for (tx, rx), n in sorted(self.n_sent.items())}
            Path(meta_path).write_text(json.dumps({"n_sent": meta}, indent=2, sort_keys=True))

    @classmethod
    def read_csv(cls, path: str | Path, meta_path: str | Path | None = None) -> "MeasurementTrace":
        per_pair: dict[tuple[str, str], list[float]] = {}
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                per_pair.setdefault((row["tx_id"], row["rx_id"]), []).append(float(row["rssi_dbm"]))
        n_sent = {}
        if meta_path is not None:
            meta = json.loads(Path(meta_path).read_text())
            for key, n in meta["n_sent"].items():
                tx, rx = key.split("->")
                n_sent[(tx, rx)] = int(n)
        return cls(samples={k: np.array(v) for k, v in per_pair.items()}, n_sent=n_sent)


@dataclass
class LinkStats:
    """Outage estimate for one directed link."""

    tx_id: str
    rx_id: str
    length_m: float
    n_sent: int
    n_received: int
    rssi_samples: np.ndarray
    p_out_hat: float

    def __post_init__(self):
        if self.n_received != len(self.rssi_samples):
            raise LinkModelError("n_received must match the sample count")
        if self.n_received > self.n_sent:
            raise LinkModelError(
                f"{self.tx_id}->{self.rx_id}: received {self.n_received} > sent {self.n_sent}"
            )
        if not 0.0 <= self.p_out_hat <= 1.0:
            raise LinkModelError("p_out_hat outside [0,1]")


@dataclass(frozen=True)
class PBadBin:
    length_m: float
    n_links: int
    p_bad: float

    @property
    def low_confidence(self) -> bool:
        return self.n_links < LOW_CONFIDENCE_BIN


@dataclass
class PBadCurve:
    """Fraction of bad links per length bin (lengths rounded to bin centers)."""

    bin_width_m: float
    bins: list[PBadBin]

    def to_report(self) -> list[dict]:
        return [
            {
                "bin_m": b.length_m,
                "n_links": b.n_links,
                "p_bad": b.p_bad,
                "low_confidence": b.low_confidence,
            }
            for b in self.bins
        ]


@dataclass(frozen=True)
class LinkModel:
    """Distilled channel model: one number (r_max) plus its calibration targets."""

    r_max_m: float
    rssi_min_dbm: float = -88.0
    q_max: float = 0.05
    p_out_target: float = 0.04
    p_bad_target: float = 0.2

    def __post_init__(self):
        if self.r_max_m <= 0:
            raise LinkModelError("r_max_m must be positive")
        for name in ("q_max", "p_out_target", "p_bad_target"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise LinkModelError(f"{name} must be in (0,1)")

    def to_dict(self) -> dict:
        return {
            "r_max_m": self.r_max_m,
            "rssi_min_dbm": self.rssi_min_dbm,
            "q_max": self.q_max,
            "p_out_target": self.p_out_target,
            "p_bad_target": self.p_bad_target,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinkModel":
        return cls(**d)


def per_threshold_classify(rssi_dbm: float, rssi_min_dbm: float) -> bool:
    """True ("good") iff the received strength clears the PER threshold."""
    return rssi_dbm >= rssi_min_dbm


def estimate_link_outage(
    trace: MeasurementTrace,
    pair: tuple[str, str],
    n_sent: int,
    rssi_min_dbm: float,
    length_m: float = 0.0,
) -> LinkStats:
    """Estimate outage for one directed pair from a trace.

    Packets that never arrived count toward outage, as do packets received
    below rssi_min; this is strictly conservative relative to computing the
    non-outage fraction over received packets only.
    """
    if n_sent < 1:
        raise LinkModelError("n_sent must be >= 1")
    samples = trace.samples.get(tuple(pair), np.empty(0))
    if len(samples) > n_sent:
        raise LinkModelError(
            f"{pair[0]}->{pair[1]}: trace holds {len(samples)} records but n_sent={n_sent}"
        )
    n_good = int((samples >= rssi_min_dbm).sum())
    return LinkStats(
        tx_id=pair[0],
        rx_id=pair[1],
        length_m=length_m,
        n_sent=n_sent,
        n_received=len(samples),
        rssi_samples=samples,
        p_out_hat=1.0 - n_good / n_sent,
    )


def build_pbad_curve(
    stats: list[LinkStats], p_out_target: float, bin_width_m: float = 1.0
) -> PBadCurve:
    """Bin links by length and compute the fraction of bad links per bin."""
    if not stats:
        raise LinkModelError("no link statistics to bin")
    by_bin: dict[int, list[LinkStats]] = {}
    for s in stats:
        if s.length_m <= 0:
            raise LinkModelError(f"{s.tx_id}->{s.rx_id}: non-positive link length")
        by_bin.setdefault(round(s.length_m / bin_width_m), []).append(s)
    bins = []
    for idx in sorted(by_bin):
        links = by_bin[idx]
        n_bad = sum(1 for s in links if s.p_out_hat > p_out_target)
        bins.append(PBadBin(length_m=idx * bin_width_m, n_links=len(links), p_bad=n_bad / len(links)))
    return PBadCurve(bin_width_m=bin_width_m, bins=bins)


def select_rmax(curve: PBadCurve, p_bad_target: float) -> float:
    """Largest bin length with p_bad within target over an unbroken prefix.

    The empirical curve can dip back under the target at long range by
    chance; stopping at the first violation avoids designing past an
    unreliable gap.
    """
    if not curve.bins:
        raise LinkModelError("empty curve")
    best = None
    for b in curve.bins:
        if b.p_bad > p_bad_target:
            break
        best = b.length_m
    if best is None:
        raise LinkModelError("no feasible range: first bin already violates p_bad target")
    return best


def classify_bidirectional(stats_fwd: LinkStats, stats_rev: LinkStats, p_out_target: float) -> bool:
    """True iff the outage constraint is met in both directions."""
    if {stats_fwd.tx_id, stats_fwd.rx_id} != {stats_rev.tx_id, stats_rev.rx_id}:
        raise LinkModelError("stats describe different node pairs")
    return stats_fwd.p_out_hat <= p_out_target and stats_rev.p_out_hat <= p_out_target


def pair_stats_from_trace(
    trace: MeasurementTrace,
    lengths: dict[tuple[str, str], float],
    rssi_min_dbm: float,
) -> list[LinkStats]:
    """One LinkStats per unordered pair, keeping the worse direction.

    Links are unordered for binning purposes; taking the worst-case
    direction matches the bidirectional goodness rule.
    """
    pairs = sorted({(a, b) if a < b else (b, a) for a, b in trace.pairs()})
    out = []
    for a, b in pairs:
        length = lengths[(a, b)]
        fwd = estimate_link_outage(trace, (a, b), trace.n_sent[(a, b)], rssi_min_dbm, length)
        rev = estimate_link_outage(trace, (b, a), trace.n_sent[(b, a)], rssi_min_dbm, length)
        out.append(fwd if fwd.p_out_hat >= rev.p_out_hat else rev)
    return out


def estimate_from_campaign(
    trace: MeasurementTrace,
    positions: dict[str, tuple[float, float]],
    p_out_target: float,
    p_bad_target: float,
    rssi_min_dbm: float = -88.0,
    q_max: float = 0.05,
    bin_width_m: float = 1.0,
) -> tuple[LinkModel, PBadCurve]:
    """Full pipeline: trace -> per-pair outage -> p_bad curve -> r_max."""
    import math

    lengths = {}
    for a, b in {(min(t, r), max(t, r)) for t, r in trace.pairs()}:
        (xa, ya), (xb, yb) = positions[a], positions[b]
        lengths[(a, b)] = math.hypot(xa - xb, ya - yb)
    stats = pair_stats_from_trace(trace, lengths, rssi_min_dbm)
    curve = build_pbad_curve(stats, p_out_target, bin_width_m)
    r_max = select_rmax(curve, p_bad_target)
    model = LinkModel(
        r_max_m=r_max,
        rssi_min_dbm=rssi_min_dbm,
        q_max=q_max,
        p_out_target=p_out_target,
        p_bad_target=p_bad_target,
    )
    return model, curve
