"""Minimum-relay, hop-constrained, k-connected topology extraction.

The per-source subproblem (k node-disjoint paths of at most h_max hops
minimizing newly used relays) is solved as min-cost unit flow on a
hop-layered expansion: node v becomes (v, l) for layers 0..h_max, split
into in/out with capacity 1, relay cost on the split arc, and a per-hop
tie-break cost; sink copies collapse into a super-sink. A flow of value k
certifies layer-disjoint paths; genuine node-disjointness is verified on
the decomposition, with an exact path-pair fallback for k = 2 (the flow is
a relaxation: two paths could share a node at different layers, which is
rare under relay-cost pressure but must not leak into a Design).

Design extraction greedily accumulates relays source by source (farthest
first), then prunes: repeatedly drop the least-traversed relay and re-solve
every source over the remaining ones, keeping the removal only if all
sources stay feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

from ._kernels import solve_mcmf
from .graphs import Design, DeploymentScenario, GraphError, NetworkGraph
from .linkmodel import LinkModel

RELAY_COST = 1_000_000  # one new relay outweighs any hop-count tie-break
HOP_COST = 1
MAX_FALLBACK_PATHS = 200_000


class TopologyError(GraphError):
    pass


def build_model_graph(scenario: DeploymentScenario, model: LinkModel) -> NetworkGraph:
    """Predict a good link between every pair within r_max meters."""
    g = NetworkGraph(scenario.nodes)
    ids = sorted(g.nodes)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if g.distance(a, b) <= model.r_max_m:
                g.add_modeled_edge(a, b)
    return g


@dataclass
class _Layered:
    index: dict[str, int]
    ids: list[str]
    tails: list[int]
    heads: list[int]
    caps: list[int]
    costs: list[int]
    arc_label: list[tuple]  # ("split", v, l) | ("hop", u, v, l) | ("src",) | ("sink", l)
    super_source: int
    super_sink: int


def _build_layered(
    graph: NetworkGraph,
    source: str,
    h_max: int,
    relay_cost: dict[str, int],
    forbidden: frozenset[str],
    k: int,
    within: set[str] | None,
) -> _Layered | None:
    sink = graph.sink_id
    if source in forbidden or sink in forbidden:
        return None
    pairs = [
        (a, b)
        for a, b in graph.traversable_pairs(within)
        if a not in forbidden and b not in forbidden
    ]
    used_ids = sorted({v for p in pairs for v in p} | {source, sink})
    index = {v: i for i, v in enumerate(used_ids)}
    n = len(used_ids)
    layers = h_max + 1

    def node_in(v: int, l: int) -> int:
        return 2 * (l * n + v)

    def node_out(v: int, l: int) -> int:
        return node_in(v, l) + 1

    super_source = 2 * n * layers
    super_sink = super_source + 1
    tails: list[int] = []
    heads: list[int] = []
    caps: list[int] = []
    costs: list[int] = []
    labels: list[tuple] = []

    def arc(t: int, h: int, cap: int, cost: int, label: tuple) -> None:
        tails.append(t)
        heads.append(h)
        caps.append(cap)
        costs.append(cost)
        labels.append(label)

    si, ti = index[source], index[sink]
    # paths leave the source directly; it has no mid-path copies
    arc(super_source, node_out(si, 0), k, 0, ("src",))
    for l in range(layers):
        for v in used_ids:
            vi = index[v]
            if vi == si or vi == ti:
                continue
            arc(
                node_in(vi, l),
                node_out(vi, l),
                1,
                RELAY_COST * relay_cost.get(v, 0),
                ("split", v, l),
            )
        arc(node_in(ti, l), super_sink, k, 0, ("sink", l))
    for l in range(h_max):
        for a, b in pairs:
            ai, bi = index[a], index[b]
            for u, w in ((ai, bi), (bi, ai)):
                if u == ti or w == si:
                    continue
                arc(
                    node_out(u, l),
                    node_in(w, l + 1),
                    1,
                    HOP_COST,
                    ("hop", u, w, l),
                )
    return _Layered(
        index=index,
        ids=used_ids,
        tails=tails,
        heads=heads,
        caps=caps,
        costs=costs,
        arc_label=labels,
        super_source=super_source,
        super_sink=super_sink,
    )


def _decompose(lay: _Layered, flows: list[int], source: str, sink: str, k: int) -> list[list[str]]:
    # hop arcs with flow, keyed by (u, layer); the source's layer-0 copy
    # emits all k units, so successors are kept as lists
    step: dict[tuple[int, int], list[int]] = {}
    for i, f in enumerate(flows):
        if f <= 0:
            continue
        lab = lay.arc_label[i]
        if lab[0] == "hop":
            step.setdefault((lab[1], lab[3]), []).append(lab[2])
    for succ in step.values():
        succ.sort()
    si = lay.index[source]
    ti = lay.index[sink]
    paths = []
    for _ in range(k):
        u, l = si, 0
        path = [source]
        while u != ti:
            w = step[(u, l)].pop(0)
            path.append(lay.ids[w])
            u, l = w, l + 1
        paths.append(path)
    paths.sort(key=lambda p: (len(p), p))
    return paths


def _physically_disjoint(paths: list[list[str]]) -> bool:
    seen: set[str] = set()
    for p in paths:
        interior = set(p[1:-1])
        if interior & seen:
            return False
        seen |= interior
    return True


def _path_cost(path: list[str], relay_cost: dict[str, int]) -> int:
    return sum(relay_cost.get(v, 0) for v in path[1:-1])


def _enumerate_paths(
    graph: NetworkGraph,
    source: str,
    sink: str,
    h_max: int,
    forbidden: frozenset[str],
    within: set[str] | None,
) -> list[list[str]]:
    """All simple hop-bounded source->sink paths, pruned by BFS distance."""
    adj: dict[str, list[str]] = {}
    for a, b in graph.traversable_pairs(within):
        if a in forbidden or b in forbidden:
            continue
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for v in adj:
        adj[v].sort()
    # hop distance to sink for pruning
    dist = {sink: 0}
    frontier = [sink]
    while frontier:
        nxt = []
        for u in frontier:
            for w in adj.get(u, ()):
                if w not in dist:
                    dist[w] = dist[u] + 1
                    nxt.append(w)
        frontier = nxt
    out: list[list[str]] = []
    path = [source]
    on_path = {source}

    def dfs(u: str) -> None:
        if len(out) > MAX_FALLBACK_PATHS:
            raise TopologyError("path enumeration limit exceeded")
        for w in adj.get(u, ()):
            if w == sink:
                out.append(path + [sink])
                continue
            if w in on_path or w not in dist:
                continue
            if len(path) + dist[w] > h_max:
                continue
            path.append(w)
            on_path.add(w)
            dfs(w)
            path.pop()
            on_path.remove(w)

    if source in dist and dist[source] <= h_max:
        dfs(source)
    return out


def hop_bounded_disjoint_paths(
    graph: NetworkGraph,
    source: str,
    k: int,
    h_max: int,
    relay_cost: dict[str, int],
    forbidden: frozenset[str] = frozenset(),
    within: set[str] | None = None,
) -> list[list[str]] | None:
    """k node-disjoint source->sink paths, each within h_max hops.

    Minimizes the number of distinct cost-1 relays used (hops break ties).
    Returns None when no such path set exists.
    """
    sink = graph.sink_id
    if source == sink:
        raise TopologyError("source equals sink")
    lay = _build_layered(graph, source, h_max, relay_cost, forbidden, k, within)
    if lay is None:
        return None
    achieved, _, flows = solve_mcmf(
        lay.super_sink + 1,
        lay.tails,
        lay.heads,
        lay.caps,
        lay.costs,
        lay.super_source,
        lay.super_sink,
        k,
    )
    if achieved < k:
        return None
    paths = _decompose(lay, flows, source, sink, k)
    if _physically_disjoint(paths):
        return paths
    if k != 2:
        return None  # k=1 decompositions are always simple; k>2 not supported here
    # exact fallback: enumerate first paths by relay cost, complete each with
    # the cheapest hop-bounded path avoiding its interior
    candidates = _enumerate_paths(graph, source, sink, h_max, forbidden, within)
    candidates.sort(key=lambda p: (_path_cost(p, relay_cost), len(p), p))
    best: list[list[str]] | None = None
    best_cost = None
    for p1 in candidates:
        c1 = _path_cost(p1, relay_cost) * RELAY_COST + (len(p1) - 1) * HOP_COST
        if best_cost is not None and c1 >= best_cost:
            break
        other = hop_bounded_disjoint_paths(
            graph,
            source,
            1,
            h_max,
            relay_cost,
            forbidden=forbidden | frozenset(p1[1:-1]),
            within=within,
        )
        if other is None:
            continue
        p2 = other[0]
        cost = c1 + _path_cost(p2, relay_cost) * RELAY_COST + (len(p2) - 1) * HOP_COST
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best = sorted([p1, p2], key=lambda p: (len(p), p))
    return best


def _relays_of(paths: list[list[str]], relay_ids: set[str]) -> set[str]:
    return {v for p in paths for v in p[1:-1] if v in relay_ids}


def extract_design(
    graph: NetworkGraph,
    h_max: int,
    k: int,
    free_relays: set[str] | None = None,
    allowed_relays: set[str] | None = None,
    within: set[str] | None = None,
) -> Design | None:
    """Two-phase extraction: greedy accumulation then relay pruning.

    free_relays cost nothing (already deployed); allowed_relays restricts
    the candidate pool. Returns None when some source is infeasible.
    """
    sink = graph.sink_id
    relay_ids = set(graph.relay_ids)
    free = (free_relays or set()) & relay_ids
    pool = relay_ids if allowed_relays is None else (allowed_relays & relay_ids)
    base_forbidden = frozenset(relay_ids - pool)

    sources = sorted(
        graph.source_ids, key=lambda s: (-graph.distance(s, sink), s)
    )

    # Phase 1: farthest source first, reusing already-selected relays for free
    selected: set[str] = set()
    routes: dict[str, list[list[str]]] = {}
    for s in sources:
        cost = {r: 0 if (r in selected or r in free) else 1 for r in pool}
        paths = hop_bounded_disjoint_paths(
            graph, s, k, h_max, cost, forbidden=base_forbidden, within=within
        )
        if paths is None:
            return None
        selected |= _relays_of(paths, pool)
        routes[s] = paths

    # Phase 2: prune least-traversed relays while all sources stay feasible.
    # A committed removal stays banned, otherwise re-solves could pull a
    # zero-cost relay back in and the passes would never settle.
    banned: set[str] = set()
    while True:
        used = set()
        for paths in routes.values():
            used |= _relays_of(paths, relay_ids)
        traversals = {r: 0 for r in used}
        for paths in routes.values():
            for p in paths:
                for v in p[1:-1]:
                    if v in traversals:
                        traversals[v] += 1
        removed_any = False
        for r in sorted(used, key=lambda r: (traversals[r], r)):
            if r in banned or r not in used:
                continue
            available = (used | free) - banned - {r}
            forbidden = base_forbidden | frozenset(pool - available)
            cost = {x: 0 for x in available}
            trial: dict[str, list[list[str]]] = {}
            for s in sources:
                paths = hop_bounded_disjoint_paths(
                    graph, s, k, h_max, cost, forbidden=forbidden | {r}, within=within
                )
                if paths is None:
                    trial = {}
                    break
                trial[s] = paths
            if trial:
                routes = trial
                banned.add(r)
                used = set()
                for paths in routes.values():
                    used |= _relays_of(paths, relay_ids)
                removed_any = True
        if not removed_any:
            break

    return Design.from_routes(routes, h_max, relay_ids)


def evaluate_learnt(
    graph: NetworkGraph, deployed: set[str], h_max: int, k: int
) -> Design | None:
    """Extract a design over learnt-good links among deployed nodes only."""
    g = graph.restricted(node_ids=deployed, provenances=("learnt_good",))
    return extract_design(
        g, h_max, k, allowed_relays=deployed & set(graph.relay_ids), within=deployed
    )


def hybrid_graph(graph: NetworkGraph, deployed: set[str]) -> NetworkGraph:
    """Learnt edges among deployed pairs, modeled edges elsewhere.

    A learnt-bad measurement blocks the pair even when the model would
    predict it.
    """
    g = graph.copy()
    kept = {}
    for key, e in g._edges.items():
        both_deployed = e.a in deployed and e.b in deployed
        if both_deployed and e.provenance == "modeled":
            continue  # unlearnt deployed pair: drop the model's opinion
        kept[key] = e
    g._edges = kept
    return g


def augment(
    graph_hybrid: NetworkGraph, deployed: set[str], h_max: int, k: int
) -> tuple[set[str], Design] | None:
    """Propose additional relays over the hybrid graph; deployed ones are free."""
    design = extract_design(
        graph_hybrid, h_max, k, free_relays=deployed & set(graph_hybrid.relay_ids)
    )
    if design is None:
        return None
    return design.relays_used - deployed, design
