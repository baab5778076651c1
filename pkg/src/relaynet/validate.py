"""Independent design validation.

Deliberately avoids the flow kernel: checks are direct edge lookups, set
intersections, and plain BFS, so a defective solver cannot vouch for its
own output.
"""

from __future__ import annotations

import math

from .graphs import Design, NetworkGraph


def validate_design(
    graph: NetworkGraph,
    design: Design,
    k: int,
    r_max_m: float | None = None,
    good_pairs: set[tuple[str, str]] | None = None,
) -> list[str]:
    """Return a list of violations (empty means the design is valid).

    When good_pairs is given, route edges are checked against that set
    instead of the graph's traversable edges (used to validate against
    ground truth).
    """
    problems: list[str] = []
    sink = graph.sink_id
    relay_ids = set(graph.relay_ids)
    source_ids = set(graph.source_ids)

    for s in source_ids:
        if s not in design.routes:
            problems.append(f"source {s} has no routes")
    for s, paths in design.routes.items():
        if s not in source_ids:
            problems.append(f"routes present for non-source {s}")
            continue
        if len(paths) < k:
            problems.append(f"source {s}: {len(paths)} routes < k={k}")
        seen: set[str] = set()
        for p in paths:
            if p[0] != s or p[-1] != sink:
                problems.append(f"source {s}: path endpoints wrong: {p}")
                continue
            if len(p) - 1 > design.h_max:
                problems.append(f"source {s}: path exceeds h_max: {p}")
            if len(set(p)) != len(p):
                problems.append(f"source {s}: path revisits a node: {p}")
            for a, b in zip(p, p[1:]):
                if good_pairs is not None:
                    key = (a, b) if a < b else (b, a)
                    if key not in good_pairs:
                        problems.append(f"source {s}: edge {a}-{b} not a good pair")
                else:
                    e = graph.edge(a, b)
                    if e is None or not e.traversable:
                        problems.append(f"source {s}: edge {a}-{b} not traversable")
            interior = set(p[1:-1])
            if sink in interior:
                problems.append(f"source {s}: sink appears mid-path: {p}")
            if interior & seen:
                problems.append(
                    f"source {s}: paths share intermediate nodes {sorted(interior & seen)}"
                )
            seen |= interior
            for v in interior:
                if v not in relay_ids and v not in source_ids:
                    problems.append(f"source {s}: intermediate {v} is neither relay nor source")
        if r_max_m is not None:
            lower = math.ceil(graph.distance(s, sink) / r_max_m - 1e-9)
            for p in paths:
                if len(p) - 1 < lower:
                    problems.append(
                        f"source {s}: {len(p) - 1} hops below geometric lower bound {lower}"
                    )

    used = {v for paths in design.routes.values() for p in paths for v in p[1:-1]}
    for r in design.relays_used:
        if r not in relay_ids:
            problems.append(f"relays_used contains non-relay {r}")
        if r not in used:
            problems.append(f"relays_used contains unused relay {r}")
    for v in used & relay_ids:
        if v not in design.relays_used:
            problems.append(f"route relay {v} missing from relays_used")
    return problems


def qos_path_exists(
    good_pairs: set[tuple[str, str]], source: str, sink: str, h_max: int
) -> bool:
    """Hop-limited BFS over an explicit set of good (unordered) pairs."""
    adj: dict[str, set[str]] = {}
    for a, b in good_pairs:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    frontier = {source}
    visited = {source}
    for _ in range(h_max):
        nxt = set()
        for u in frontier:
            for w in adj.get(u, ()):
                if w == sink:
                    return True
                if w not in visited:
                    visited.add(w)
                    nxt.add(w)
        frontier = nxt
        if not frontier:
            break
    return False
