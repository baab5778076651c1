"""Pure-Python min-cost flow solver (successive shortest paths, SPFA).

Reference implementation for the compiled kernel in ``_mcmf_cy``; the two
must stay behaviourally identical (see tests/test_kernels.py). Costs are
integers; capacities are small integers (unit capacities except the
super-source arc). Deterministic: relaxation uses strict improvement, so
the parent choice follows arc insertion order.
"""

from __future__ import annotations

from collections import deque

INF = 1 << 60


def solve_mcmf(num_nodes, tails, heads, caps, costs, source, sink, want):
    """Send up to `want` units from source to sink at minimum total cost.

    Arcs are given as parallel sequences tails/heads/caps/costs. Returns
    ``(achieved, total_cost, flows)`` where flows[i] is the flow on input
    arc i.
    """
    m = len(tails)
    # interleaved residual arcs: 2i forward, 2i+1 backward
    rhead = [0] * (2 * m)
    rcap = [0] * (2 * m)
    rcost = [0] * (2 * m)
    adj = [[] for _ in range(num_nodes)]
    for i in range(m):
        t, h = tails[i], heads[i]
        rhead[2 * i] = h
        rcap[2 * i] = caps[i]
        rcost[2 * i] = costs[i]
        rhead[2 * i + 1] = t
        rcap[2 * i + 1] = 0
        rcost[2 * i + 1] = -costs[i]
        adj[t].append(2 * i)
        adj[h].append(2 * i + 1)

    achieved = 0
    total_cost = 0
    while achieved < want:
        dist = [INF] * num_nodes
        parent = [-1] * num_nodes
        inq = [False] * num_nodes
        dist[source] = 0
        dq = deque([source])
        while dq:
            u = dq.popleft()
            inq[u] = False
            du = dist[u]
            for a in adj[u]:
                if rcap[a] <= 0:
                    continue
                v = rhead[a]
                nd = du + rcost[a]
                if nd < dist[v]:
                    dist[v] = nd
                    parent[v] = a
                    if not inq[v]:
                        inq[v] = True
                        dq.append(v)
        if dist[sink] >= INF:
            break
        # bottleneck along the augmenting path
        push = want - achieved
        v = sink
        while v != source:
            a = parent[v]
            if rcap[a] < push:
                push = rcap[a]
            v = rhead[a ^ 1]
        v = sink
        while v != source:
            a = parent[v]
            rcap[a] -= push
            rcap[a ^ 1] += push
            v = rhead[a ^ 1]
        achieved += push
        total_cost += push * dist[sink]

    flows = [rcap[2 * i + 1] for i in range(m)]
    return achieved, total_cost, flows
