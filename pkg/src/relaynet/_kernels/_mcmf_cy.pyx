# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled min-cost flow kernel. Mirrors mcmf_py.solve_mcmf exactly."""

import numpy as np

cimport numpy as cnp

cdef long long INF = <long long>1 << 60


def solve_mcmf(num_nodes, tails, heads, caps, costs, source, sink, want):
    """Send up to `want` units from source to sink at minimum total cost.

    Same contract as the pure-Python reference: returns
    (achieved, total_cost, flows).
    """
    cdef int n = num_nodes
    cdef int src = source
    cdef int snk = sink
    cdef long long target = want

    cdef cnp.ndarray[cnp.int32_t, ndim=1] t_arr = np.asarray(tails, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] h_arr = np.asarray(heads, dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] c_arr = np.asarray(caps, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] w_arr = np.asarray(costs, dtype=np.int64)
    cdef int m = t_arr.shape[0]

    cdef cnp.ndarray[cnp.int32_t, ndim=1] rhead = np.empty(2 * m, dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rcap = np.empty(2 * m, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rcost = np.empty(2 * m, dtype=np.int64)

    # CSR adjacency over residual arcs, in arc insertion order per node
    cdef cnp.ndarray[cnp.int32_t, ndim=1] deg = np.zeros(n + 1, dtype=np.int32)
    cdef int i, u, v
    for i in range(m):
        deg[t_arr[i] + 1] += 1
        deg[h_arr[i] + 1] += 1
    cdef cnp.ndarray[cnp.int32_t, ndim=1] start = np.cumsum(deg, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] fill = start[:n].copy()
    cdef cnp.ndarray[cnp.int32_t, ndim=1] adj = np.empty(2 * m, dtype=np.int32)
    for i in range(m):
        u = t_arr[i]
        v = h_arr[i]
        rhead[2 * i] = v
        rcap[2 * i] = c_arr[i]
        rcost[2 * i] = w_arr[i]
        rhead[2 * i + 1] = u
        rcap[2 * i + 1] = 0
        rcost[2 * i + 1] = -w_arr[i]
        adj[fill[u]] = 2 * i
        fill[u] += 1
        adj[fill[v]] = 2 * i + 1
        fill[v] += 1

    cdef cnp.ndarray[cnp.int64_t, ndim=1] dist = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] parent = np.empty(n, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] inq = np.empty(n, dtype=np.uint8)
    # a node is enqueued only while not already queued -> ring of n+1 suffices
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ring = np.empty(n + 1, dtype=np.int32)
    cdef int qhead, qtail, ringsz = n + 1
    cdef int a
    cdef long long achieved = 0, total_cost = 0, du, nd, push

    while achieved < target:
        for i in range(n):
            dist[i] = INF
            parent[i] = -1
            inq[i] = 0
        dist[src] = 0
        ring[0] = src
        qhead = 0
        qtail = 1
        while qhead != qtail:
            u = ring[qhead]
            qhead = (qhead + 1) % ringsz
            inq[u] = 0
            du = dist[u]
            for i in range(start[u], start[u + 1]):
                a = adj[i]
                if rcap[a] <= 0:
                    continue
                v = rhead[a]
                nd = du + rcost[a]
                if nd < dist[v]:
                    dist[v] = nd
                    parent[v] = a
                    if not inq[v]:
                        inq[v] = 1
                        ring[qtail] = v
                        qtail = (qtail + 1) % ringsz
        if dist[snk] >= INF:
            break
        push = target - achieved
        v = snk
        while v != src:
            a = parent[v]
            if rcap[a] < push:
                push = rcap[a]
            v = rhead[a ^ 1]
        v = snk
        while v != src:
            a = parent[v]
            rcap[a] -= push
            rcap[a ^ 1] += push
            v = rhead[a ^ 1]
        achieved += push
        total_cost += push * dist[snk]

    flows = [int(rcap[2 * i + 1]) for i in range(m)]
    return int(achieved), int(total_cost), flows
