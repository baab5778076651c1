"""Equivalence of the compiled kernel and its pure-Python reference."""

import numpy as np
import pytest

from relaynet._kernels import BACKEND
from relaynet._kernels.mcmf_py import solve_mcmf as solve_py

try:
    from relaynet._kernels._mcmf_cy import solve_mcmf as solve_cy
except ImportError:
    solve_cy = None


def random_instance(rng, n_nodes=40, n_arcs=200, want=2):
    tails = rng.integers(0, n_nodes - 1, n_arcs).tolist()
    heads = rng.integers(1, n_nodes, n_arcs).tolist()
    for i in range(n_arcs):
        if tails[i] == heads[i]:
            heads[i] = (heads[i] + 1) % n_nodes
    caps = rng.integers(1, 3, n_arcs).tolist()
    costs = rng.integers(0, 50, n_arcs).tolist()
    return n_nodes, tails, heads, caps, costs, 0, n_nodes - 1, want


@pytest.mark.skipif(solve_cy is None, reason="compiled kernel not built")
class TestBackendEquivalence:
    def test_identical_results_on_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            inst = random_instance(rng)
            got_py = solve_py(*inst)
            got_cy = solve_cy(*inst)
            assert got_py[0] == got_cy[0]  # achieved flow
            assert got_py[1] == got_cy[1]  # total cost
            assert got_py[2] == got_cy[2]  # identical per-arc flows

    def test_identical_on_layered_design_graphs(self, line5_graph=None):
        from relaynet import topology
        from relaynet.fixtures import random_geometric

        for seed in range(8):
            scen = random_geometric(seed, n_relays=8, n_sources=2, k=2)
            g = topology.build_model_graph(scen, scen.link_model)
            src = scen.sources[0].id
            lay = topology._build_layered(
                g, src, 5, {n.id: 1 for n in scen.potential_relays}, frozenset(), 2, None
            )
            args = (
                lay.super_sink + 1, lay.tails, lay.heads, lay.caps, lay.costs,
                lay.super_source, lay.super_sink, 2,
            )
            assert solve_py(*args) == solve_cy(*args)


def test_backend_is_reported():
    assert BACKEND in ("cython", "python")


def test_python_backend_unit_flow():
    # two disjoint unit paths beat the expensive direct arc
    got = solve_py(4, [0, 1, 0, 2, 0], [1, 3, 2, 3, 3], [1, 1, 1, 1, 1], [1, 1, 2, 2, 10], 0, 3, 2)
    assert got == (2, 6, [1, 1, 1, 1, 0])


def test_python_backend_reports_max_flow_shortfall():
    achieved, cost, flows = solve_py(3, [0, 1], [1, 2], [1, 1], [1, 1], 0, 2, 3)
    assert achieved == 1
