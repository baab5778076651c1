"""Deployment scenarios, network graphs with edge provenance, and designs.

The network graph holds one edge record per unordered node pair. Edges are
either predicted by the link model ("modeled") or measured on the field
("learnt_good"/"learnt_bad"); a measurement always overrides the model and
never reverts. Bad learnt edges are kept for reporting but are never
traversable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

from .linkmodel import LinkModel
from .qosmap import QoSSpec

Role = Literal["source", "potential_relay", "sink"]
Provenance = Literal["modeled", "learnt_good", "learnt_bad"]


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    x_m: float
    y_m: float
    role: Role

    def distance_to(self, other: "Node") -> float:
        return math.hypot(self.x_m - other.x_m, self.y_m - other.y_m)


@dataclass
class DeploymentScenario:
    """The design problem instance: located nodes plus QoS parameters."""

    nodes: list[Node]
    qos: QoSSpec | None = None
    link_model: LinkModel | None = None
    name: str = "scenario"

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node ids in scenario")
        sinks = [n for n in self.nodes if n.role == "sink"]
        if len(sinks) != 1:
            raise GraphError(f"scenario must have exactly one sink, found {len(sinks)}")
        if not any(n.role == "source" for n in self.nodes):
            raise GraphError("scenario has no sources")

    @property
    def sink(self) -> Node:
        return next(n for n in self.nodes if n.role == "sink")

    @property
    def sources(self) -> list[Node]:
        return [n for n in self.nodes if n.role == "source"]

    @property
    def potential_relays(self) -> list[Node]:
        return [n for n in self.nodes if n.role == "potential_relay"]

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise GraphError(f"unknown node {node_id!r}")

    def distance(self, a: str, b: str) -> float:
        return self.node(a).distance_to(self.node(b))

    def to_dict(self) -> dict:
        d: dict = {
            "name": self.name,
            "nodes": [
                {"id": n.id, "x_m": n.x_m, "y_m": n.y_m, "role": n.role} for n in self.nodes
            ],
        }
        if self.qos is not None:
            d["qos"] = self.qos.to_dict()
        if self.link_model is not None:
            d["link_model"] = self.link_model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DeploymentScenario":
        nodes = [
            Node(id=str(n["id"]), x_m=float(n["x_m"]), y_m=float(n["y_m"]), role=n["role"])
            for n in d["nodes"]
        ]
        qos = QoSSpec.from_dict(d["qos"]) if "qos" in d else None
        lm = d.get("link_model")
        link_model = LinkModel.from_dict(lm) if isinstance(lm, dict) else None
        return cls(nodes=nodes, qos=qos, link_model=link_model, name=d.get("name", "scenario"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "DeploymentScenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def pair_key(a: str, b: str) -> tuple[str, str]:
    if a == b:
        raise GraphError(f"self-loop edge {a!r}")
    return (a, b) if a < b else (b, a)


@dataclass
class Edge:
    a: str
    b: str
    provenance: Provenance
    p_out_hat: float | None = None

    @property
    def traversable(self) -> bool:
        return self.provenance in ("modeled", "learnt_good")


class NetworkGraph:
    """Nodes with deployment flags plus one provenance-tagged edge per pair."""

    def __init__(self, nodes: Iterable[Node]):
        self.nodes: dict[str, Node] = {}
        for n in nodes:
            if n.id in self.nodes:
                raise GraphError(f"duplicate node {n.id!r}")
            self.nodes[n.id] = n
        if sum(1 for n in self.nodes.values() if n.role == "sink") != 1:
            raise GraphError("graph must have exactly one sink")
        self.deployed: set[str] = set()
        self._edges: dict[tuple[str, str], Edge] = {}

    @property
    def sink_id(self) -> str:
        return next(n.id for n in self.nodes.values() if n.role == "sink")

    @property
    def source_ids(self) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.role == "source")

    @property
    def relay_ids(self) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.role == "potential_relay")

    def edges(self) -> list[Edge]:
        return [self._edges[k] for k in sorted(self._edges)]

    def edge(self, a: str, b: str) -> Edge | None:
        return self._edges.get(pair_key(a, b))

    def distance(self, a: str, b: str) -> float:
        return self.nodes[a].distance_to(self.nodes[b])

    def add_modeled_edge(self, a: str, b: str) -> None:
        key = pair_key(a, b)
        # measurements outrank the model; never downgrade a learnt edge
        if key not in self._edges:
            self._edges[key] = Edge(key[0], key[1], "modeled")

    def set_learnt(self, a: str, b: str, good: bool, p_out_hat: float) -> None:
        key = pair_key(a, b)
        self._edges[key] = Edge(
            key[0], key[1], "learnt_good" if good else "learnt_bad", p_out_hat
        )

    def traversable_pairs(self, within: set[str] | None = None) -> list[tuple[str, str]]:
        out = []
        for key in sorted(self._edges):
            e = self._edges[key]
            if not e.traversable:
                continue
            if within is not None and (e.a not in within or e.b not in within):
                continue
            out.append(key)
        return out

    def link_outage(self, a: str, b: str, default: float) -> float:
        e = self.edge(a, b)
        if e is None:
            return 1.0
        if e.p_out_hat is not None:
            return e.p_out_hat
        return default

    def copy(self) -> "NetworkGraph":
        g = NetworkGraph(self.nodes.values())
        g.deployed = set(self.deployed)
        g._edges = {k: Edge(e.a, e.b, e.provenance, e.p_out_hat) for k, e in self._edges.items()}
        return g

    def restricted(
        self,
        node_ids: set[str] | None = None,
        provenances: tuple[Provenance, ...] | None = None,
    ) -> "NetworkGraph":
        """Copy keeping only edges between node_ids with given provenances."""
        g = self.copy()
        kept = {}
        for k, e in g._edges.items():
            if provenances is not None and e.provenance not in provenances:
                continue
            if node_ids is not None and (e.a not in node_ids or e.b not in node_ids):
                continue
            kept[k] = e
        g._edges = kept
        return g

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.id,
                    "x_m": n.x_m,
                    "y_m": n.y_m,
                    "role": n.role,
                    "deployed": n.id in self.deployed,
                }
                for _, n in sorted(self.nodes.items())
            ],
            "edges": [
                {"a": e.a, "b": e.b, "provenance": e.provenance, "p_out_hat": e.p_out_hat}
                for e in self.edges()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkGraph":
        g = cls(
            Node(id=str(n["id"]), x_m=float(n["x_m"]), y_m=float(n["y_m"]), role=n["role"])
            for n in d["nodes"]
        )
        g.deployed = {str(n["id"]) for n in d["nodes"] if n.get("deployed")}
        for e in d["edges"]:
            key = pair_key(str(e["a"]), str(e["b"]))
            g._edges[key] = Edge(key[0], key[1], e["provenance"], e.get("p_out_hat"))
        return g


@dataclass
class Design:
    """A solved topology: relay set and k hop-bounded disjoint routes per source."""

    relays_used: set[str]
    routes: dict[str, list[list[str]]]
    h_max: int
    predicted_pdel: dict[str, list[float]] = field(default_factory=dict)

    @classmethod
    def from_routes(
        cls, routes: dict[str, list[list[str]]], h_max: int, relay_ids: set[str]
    ) -> "Design":
        used = set()
        for paths in routes.values():
            for p in paths:
                used.update(v for v in p[1:-1] if v in relay_ids)
        return cls(relays_used=used, routes=routes, h_max=h_max)

    def to_dict(self) -> dict:
        return {
            "relays_used": sorted(self.relays_used),
            "h_max": self.h_max,
            "routes": {s: self.routes[s] for s in sorted(self.routes)},
            "predicted_pdel": {s: self.predicted_pdel[s] for s in sorted(self.predicted_pdel)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Design":
        return cls(
            relays_used=set(d["relays_used"]),
            routes={str(s): [[str(v) for v in p] for p in paths] for s, paths in d["routes"].items()},
            h_max=int(d["h_max"]),
            predicted_pdel={str(s): list(v) for s, v in d.get("predicted_pdel", {}).items()},
        )
