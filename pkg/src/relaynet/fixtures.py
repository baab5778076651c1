"""Built-in scenarios and layouts used by the CLI, tests, and experiments.

Everything here is deterministic: layouts derive from fixed seeds, so the
same fixture name always yields byte-identical geometry.
"""

from __future__ import annotations

import numpy as np

from .fieldsim import ChannelParams
from .graphs import DeploymentScenario, Node
from .linkmodel import LinkModel
from .qosmap import QoSSpec

INDOOR_MODEL = LinkModel(
    r_max_m=8.0, rssi_min_dbm=-88.0, q_max=0.05, p_out_target=0.04, p_bad_target=0.2
)
YARD_MODEL = LinkModel(
    r_max_m=30.0, rssi_min_dbm=-88.0, q_max=0.05, p_out_target=0.004, p_bad_target=0.2
)
OFFICE_MODEL = LinkModel(
    r_max_m=8.0, rssi_min_dbm=-88.0, q_max=0.05, p_out_target=0.05, p_bad_target=0.2
)

# default link model per channel preset, for scenarios that carry none
PRESET_MODELS = {"indoor": INDOOR_MODEL, "office": OFFICE_MODEL, "yard": YARD_MODEL}
DEFAULT_QOS = QoSSpec(d_max_ms=200.0, p_del=0.73, k=1)

# deterministic, outage-free channel for closed-form cross-checks
CLEAN_CHANNEL = ChannelParams(
    pl0_db=49.0, path_loss_exp=3.0, shadow_sigma_db=0.0, fast_sigma_db=0.0
)

# no shadowing and a sharp deterministic good/bad cutoff at ~9.5 m for
# p_out_target=0.05: links under the cutoff are reliably good, links past
# it reliably bad, so forced-bad fractions are exact
SHARP_CHANNEL = ChannelParams(
    pl0_db=57.0, path_loss_exp=3.0, shadow_sigma_db=0.0, fast_sigma_db=1.0
)

# routing-comparison field: links start reliably good (small shadowing)
# but drift hard enough that routes break during a multi-day run
RPL_CHANNEL = ChannelParams(
    pl0_db=49.0,
    path_loss_exp=3.0,
    shadow_sigma_db=2.0,
    fast_sigma_db=4.0,
    drift_rho=0.9,
    drift_sigma_db=4.0,
)


def modeled_pairs(scenario: DeploymentScenario, r_max_m: float) -> list[tuple[str, str]]:
    import math

    pos = {n.id: (n.x_m, n.y_m) for n in scenario.nodes}
    ids = sorted(pos)
    return [
        (a, b)
        for i, a in enumerate(ids)
        for b in ids[i + 1 :]
        if math.hypot(pos[a][0] - pos[b][0], pos[a][1] - pos[b][1]) <= r_max_m
    ]


def force_bad_fraction(channel, scenario: DeploymentScenario, fraction: float, seed: int):
    """Blind a seeded fraction of the modeled links in the ground truth."""
    pairs = modeled_pairs(scenario, scenario.link_model.r_max_m)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 99)))
    picked = rng.choice(len(pairs), size=round(fraction * len(pairs)), replace=False)
    chosen = [pairs[i] for i in sorted(picked)]
    for a, b in chosen:
        channel.force_shadow(a, b, -40.0)
    return chosen


def calibration_positions(preset_name: str, n_nodes: int = 50) -> dict[str, tuple[float, float]]:
    """Scatter n nodes over a box sized for the preset's range regime."""
    if preset_name == "indoor":
        w, h = 30.0, 15.0
    elif preset_name == "yard":
        w, h = 90.0, 60.0
    else:
        raise ValueError(f"no calibration layout for preset {preset_name!r}")
    rng = np.random.default_rng(np.random.SeedSequence((hash_name(preset_name), 2024)))
    xs = rng.uniform(0.0, w, n_nodes)
    ys = rng.uniform(0.0, h, n_nodes)
    return {f"c{i:02d}": (float(x), float(y)) for i, (x, y) in enumerate(zip(xs, ys))}


def hash_name(name: str) -> int:
    import hashlib

    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")


def line5() -> DeploymentScenario:
    """Sink, three relays and a source on a 20 m line at 5 m spacing."""
    return DeploymentScenario(
        name="line5",
        nodes=[
            Node("sink", 0.0, 0.0, "sink"),
            Node("r5", 5.0, 0.0, "potential_relay"),
            Node("r10", 10.0, 0.0, "potential_relay"),
            Node("r15", 15.0, 0.0, "potential_relay"),
            Node("src", 20.0, 0.0, "source"),
        ],
        qos=DEFAULT_QOS,
        link_model=INDOOR_MODEL,
    )


def diamond() -> DeploymentScenario:
    """Three parallel relays between one source and the sink."""
    return DeploymentScenario(
        name="diamond",
        nodes=[
            Node("sink", 0.0, 0.0, "sink"),
            Node("A", 6.0, 4.0, "potential_relay"),
            Node("B", 6.0, -4.0, "potential_relay"),
            Node("C", 6.0, 0.0, "potential_relay"),
            Node("src", 12.0, 0.0, "source"),
        ],
        qos=QoSSpec(d_max_ms=200.0, p_del=0.73, k=2),
        link_model=INDOOR_MODEL,
    )


def chain(h: int) -> DeploymentScenario:
    """A forced h-hop chain: nodes 6 m apart with an 8 m range."""
    if h < 1:
        raise ValueError("h must be >= 1")
    nodes = [Node("sink", 0.0, 0.0, "sink")]
    for i in range(1, h):
        nodes.append(Node(f"r{i}", 6.0 * i, 0.0, "potential_relay"))
    nodes.append(Node("src", 6.0 * h, 0.0, "source"))
    return DeploymentScenario(
        name=f"chain{h}",
        nodes=nodes,
        qos=QoSSpec(d_max_ms=200.0, p_del=0.73, k=1),
        link_model=INDOOR_MODEL,
    )


def lab24() -> DeploymentScenario:
    """24 indoor locations on a jittered 6x4 grid plus a sink at the edge.

    4 m spacing keeps next-neighbor links solid while two-column skips sit
    right at the communication range, so the model predicts links that
    field learning will sometimes reject. The robustness experiments
    assign roles per source set; here every location is a potential relay.
    """
    rng = np.random.default_rng(np.random.SeedSequence((hash_name("lab24"), 7)))
    nodes = [Node("bs", -2.0, 8.0, "sink")]
    idx = 1
    for col in range(6):
        for row in range(4):
            x = 2.0 + 4.0 * col + float(rng.uniform(-0.3, 0.3))
            y = 2.0 + 4.0 * row + float(rng.uniform(-0.3, 0.3))
            nodes.append(Node(f"n{idx:02d}", round(x, 2), round(y, 2), "potential_relay"))
            idx += 1
    # scenario validation requires a source; robustness runs re-role nodes
    nodes[1] = Node(nodes[1].id, nodes[1].x_m, nodes[1].y_m, "source")
    return DeploymentScenario(
        name="lab24",
        nodes=nodes,
        qos=QoSSpec(d_max_ms=200.0, p_del=0.73, k=1),
        link_model=LinkModel(
            r_max_m=8.0, rssi_min_dbm=-88.0, q_max=0.05, p_out_target=0.05, p_bad_target=0.2
        ),
    )


def lab24_source_sets(n_sets: int = 10, set_size: int = 4) -> list[list[str]]:
    rng = np.random.default_rng(np.random.SeedSequence((hash_name("lab24-sets"), 11)))
    ids = [f"n{i:02d}" for i in range(1, 25)]
    sets = []
    for _ in range(n_sets):
        pick = rng.choice(len(ids), size=set_size, replace=False)
        sets.append(sorted(ids[i] for i in sorted(pick)))
    return sets


def with_roles(scenario: DeploymentScenario, sources: list[str]) -> DeploymentScenario:
    """Re-role a layout: given ids become sources, other non-sink nodes relays."""
    nodes = []
    for n in scenario.nodes:
        if n.role == "sink":
            nodes.append(n)
        elif n.id in sources:
            nodes.append(Node(n.id, n.x_m, n.y_m, "source"))
        else:
            nodes.append(Node(n.id, n.x_m, n.y_m, "potential_relay"))
    return DeploymentScenario(
        name=scenario.name, nodes=nodes, qos=scenario.qos, link_model=scenario.link_model
    )


def rpl9() -> DeploymentScenario:
    """Nine nodes: four sources with two node-disjoint routes each."""
    return DeploymentScenario(
        name="rpl9",
        nodes=[
            Node("bs", 0.0, 0.0, "sink"),
            Node("r1", 6.0, 3.0, "potential_relay"),
            Node("r2", 6.0, -3.0, "potential_relay"),
            Node("r3", -6.0, 3.0, "potential_relay"),
            Node("r4", -6.0, -3.0, "potential_relay"),
            Node("s1", 12.0, 0.0, "source"),
            Node("s2", -12.0, 0.0, "source"),
            Node("s3", 0.0, 6.0, "source"),
            Node("s4", 0.0, -6.0, "source"),
        ],
        qos=QoSSpec(d_max_ms=200.0, p_del=0.73, k=2),
        link_model=LinkModel(
            r_max_m=8.0, rssi_min_dbm=-88.0, q_max=0.05, p_out_target=0.05, p_bad_target=0.2
        ),
    )


def rpl_sparse() -> DeploymentScenario:
    """k=1 fixture where source s ends up with a single potential parent.

    s2's route keeps the corridor c1-c2 deployed; s-c1 is within range but
    gets forced bad at deployment, so s's only learnt parent is relay a.
    The severed-parent experiment later kills s-a and revives s-c1 in the
    ground truth: a QoS path s-c1-c2-bs then exists among deployed nodes,
    but s has no alternate parent to find it with.
    """
    return DeploymentScenario(
        name="rpl_sparse",
        nodes=[
            Node("bs", 0.0, 0.0, "sink"),
            Node("a", 7.0, 0.0, "potential_relay"),
            Node("c1", 10.0, 5.0, "potential_relay"),
            Node("c2", 3.0, 5.0, "potential_relay"),
            Node("s", 14.0, 0.0, "source"),
            Node("s2", 12.0, 10.0, "source"),
        ],
        qos=QoSSpec(d_max_ms=200.0, p_del=0.73, k=1),
        link_model=LinkModel(
            r_max_m=8.0, rssi_min_dbm=-88.0, q_max=0.05, p_out_target=0.05, p_bad_target=0.2
        ),
    )


def convergence() -> DeploymentScenario:
    """Dense grid of potential relays; used with a fraction of links forced bad."""
    rng = np.random.default_rng(np.random.SeedSequence((hash_name("convergence"), 3)))
    nodes = [Node("bs", -2.0, 8.0, "sink")]
    idx = 1
    for col in range(5):
        for row in range(4):
            x = 2.5 + 5.0 * col + float(rng.uniform(-0.4, 0.4))
            y = 2.0 + 4.0 * row + float(rng.uniform(-0.4, 0.4))
            nodes.append(Node(f"p{idx:02d}", round(x, 2), round(y, 2), "potential_relay"))
            idx += 1
    nodes.append(Node("s1", 26.0, 4.0, "source"))
    nodes.append(Node("s2", 26.0, 12.0, "source"))
    return DeploymentScenario(
        name="convergence",
        nodes=nodes,
        qos=QoSSpec(d_max_ms=200.0, p_del=0.73, k=1),
        link_model=LinkModel(
            r_max_m=8.0, rssi_min_dbm=-88.0, q_max=0.05, p_out_target=0.05, p_bad_target=0.2
        ),
    )


def random_geometric(
    seed: int, n_relays: int = 10, n_sources: int = 2, k: int = 1
) -> DeploymentScenario:
    """Small random instance for optimality experiments (<= 12 relays)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 51)))
    nodes = [Node("sink", 0.0, 0.0, "sink")]
    for i in range(n_relays):
        nodes.append(
            Node(
                f"r{i:02d}",
                round(float(rng.uniform(-11.0, 11.0)), 2),
                round(float(rng.uniform(-11.0, 11.0)), 2),
                "potential_relay",
            )
        )
    for i in range(n_sources):
        ang = rng.uniform(0, 2 * np.pi)
        rad = rng.uniform(8.5, 14.0)
        nodes.append(
            Node(
                f"s{i}",
                round(float(rad * np.cos(ang)), 2),
                round(float(rad * np.sin(ang)), 2),
                "source",
            )
        )
    return DeploymentScenario(
        name=f"geo{seed}",
        nodes=nodes,
        qos=QoSSpec(d_max_ms=200.0, p_del=0.73, k=k),
        link_model=INDOOR_MODEL,
    )


PRESET_NAMES = ("indoor", "office", "yard")

BUILTIN = {
    "line5": line5,
    "diamond": diamond,
    "lab24": lab24,
    "rpl9": rpl9,
    "rpl_sparse": rpl_sparse,
    "convergence": convergence,
}


def builtin(name: str) -> DeploymentScenario:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise ValueError(f"unknown builtin scenario {name!r} (have {sorted(BUILTIN)})") from None
