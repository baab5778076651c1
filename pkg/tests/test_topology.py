import math

import pytest

from oracles import adjacency, bfs_hops, brute_force_min_relays, source_feasible
from relaynet import fixtures
from relaynet.graphs import DeploymentScenario, Node
from relaynet.topology import (
    build_model_graph,
    augment,
    evaluate_learnt,
    extract_design,
    hop_bounded_disjoint_paths,
    hybrid_graph,
)
from relaynet.validate import validate_design


def pairs_of(graph):
    return set(graph.traversable_pairs())


class TestBuildModelGraph:
    def test_line5_exact_edges(self, line5_graph):
        scen, g = line5_graph
        # pairwise distance oracle at r_max = 8
        expected = set()
        for i, a in enumerate(scen.nodes):
            for b in scen.nodes[i + 1 :]:
                if a.distance_to(b) <= 8.0:
                    expected.add((min(a.id, b.id), max(a.id, b.id)))
        assert pairs_of(g) == expected
        assert expected == {("r10", "r15"), ("r10", "r5"), ("r15", "src"), ("r5", "sink")}

    def test_far_nodes_have_no_edges(self):
        scen = DeploymentScenario(
            nodes=[Node("sink", 0, 0, "sink"), Node("src", 100, 0, "source")],
            link_model=fixtures.INDOOR_MODEL,
        )
        g = build_model_graph(scen, scen.link_model)
        assert pairs_of(g) == set()

    def test_diamond_edges_match_distance_oracle(self, diamond_graph):
        scen, g = diamond_graph
        expected = set()
        for i, a in enumerate(scen.nodes):
            for b in scen.nodes[i + 1 :]:
                if a.distance_to(b) <= 8.0:
                    expected.add((min(a.id, b.id), max(a.id, b.id)))
        assert pairs_of(g) == expected
        # the six source/sink spokes are all present (sqrt(52) <= 8)
        for spoke in [("A", "sink"), ("B", "sink"), ("C", "sink"),
                      ("A", "src"), ("B", "src"), ("C", "src")]:
            assert spoke in expected


class TestHopBoundedDisjointPaths:
    def test_diamond_k1_uses_one_relay(self, diamond_graph):
        _, g = diamond_graph
        paths = hop_bounded_disjoint_paths(g, "src", 1, 2, {r: 1 for r in "ABC"})
        assert paths is not None and len(paths) == 1
        assert len(paths[0]) == 3  # brute force: no direct edge, so 2 hops minimum
        assert paths[0][1] in "ABC"

    def test_diamond_k2_uses_two_distinct_relays(self, diamond_graph):
        _, g = diamond_graph
        paths = hop_bounded_disjoint_paths(g, "src", 2, 2, {r: 1 for r in "ABC"})
        mids = {p[1] for p in paths}
        assert len(mids) == 2 and mids <= set("ABC")

    def test_line5_k2_infeasible(self, line5_graph):
        _, g = line5_graph
        assert hop_bounded_disjoint_paths(g, "src", 2, 8, {"r5": 1, "r10": 1, "r15": 1}) is None

    def test_prefers_zero_cost_relays(self, diamond_graph):
        _, g = diamond_graph
        paths = hop_bounded_disjoint_paths(g, "src", 1, 2, {"A": 1, "B": 1, "C": 0})
        assert paths[0][1] == "C"

    def test_hop_bound_respected(self, line5_graph):
        _, g = line5_graph
        assert hop_bounded_disjoint_paths(g, "src", 1, 3, {"r5": 1, "r10": 1, "r15": 1}) is None
        paths = hop_bounded_disjoint_paths(g, "src", 1, 4, {"r5": 1, "r10": 1, "r15": 1})
        assert [len(p) - 1 for p in paths] == [4]


class TestExtractDesign:
    def test_line5_minimum_relays(self, line5_graph):
        scen, g = line5_graph
        design = extract_design(g, 4, 1)
        assert design.relays_used == {"r5", "r10", "r15"}
        # subset-enumeration oracle confirms 3 is the minimum
        opt = brute_force_min_relays(
            pairs_of(g), ["src"], "sink", ["r5", "r10", "r15"], 1, 4
        )
        assert opt == 3
        assert validate_design(g, design, 1, r_max_m=8.0) == []

    def test_line5_h3_infeasible(self, line5_graph):
        scen, g = line5_graph
        # geometric lower bound: 20 m / 8 m means at least 3 hops, and the
        # edge set has no 3-hop chain
        assert math.ceil(scen.distance("src", "sink") / 8.0) == 3
        assert extract_design(g, 3, 1) is None

    def test_direct_hop_needs_no_relays(self):
        scen = DeploymentScenario(
            nodes=[
                Node("sink", 0, 0, "sink"),
                Node("r", 3, 0, "potential_relay"),
                Node("src", 5, 0, "source"),
            ],
            link_model=fixtures.INDOOR_MODEL,
        )
        g = build_model_graph(scen, scen.link_model)
        design = extract_design(g, 4, 1)
        assert design.relays_used == set()
        assert design.routes["src"] == [["src", "sink"]]

    def test_pruning_never_adds(self, diamond_graph):
        _, g = diamond_graph
        design = extract_design(g, 2, 2)
        assert len(design.relays_used) == 2  # phase-1 could pick 2 or 3; pruned to 2

    def test_determinism(self, diamond_graph):
        _, g = diamond_graph
        d1 = extract_design(g, 2, 2)
        d2 = extract_design(g, 2, 2)
        assert d1.to_dict() == d2.to_dict()

    def test_k2_single_relay_failure_leaves_a_route(self, diamond_graph):
        _, g = diamond_graph
        design = extract_design(g, 2, 2)
        for r in design.relays_used:
            for paths in design.routes.values():
                intact = [p for p in paths if r not in p]
                assert intact, f"removing {r} broke every route"


class TestEvaluateAndAugment:
    def as_learnt(self, g, deployed):
        g = g.copy()
        for a, b in list(g.traversable_pairs()):
            if a in deployed and b in deployed:
                g.set_learnt(a, b, True, 0.01)
        return g

    def test_confirmed_links_reproduce_model_design(self, line5_graph):
        _, g = line5_graph
        deployed = {"sink", "r5", "r10", "r15", "src"}
        learnt = self.as_learnt(g, deployed)
        model_design = extract_design(g, 4, 1)
        learnt_design = evaluate_learnt(learnt, deployed, 4, 1)
        assert len(learnt_design.relays_used) == len(model_design.relays_used)

    def test_disconnected_source_infeasible(self, line5_graph):
        _, g = line5_graph
        deployed = {"sink", "r5", "r10", "r15", "src"}
        learnt = self.as_learnt(g, deployed)
        learnt.set_learnt("r15", "src", False, 0.9)  # source cut off
        assert evaluate_learnt(learnt, deployed, 4, 1) is None

    def test_minimal_subnetwork_matches_brute_force(self):
        scen = fixtures.random_geometric(3, n_relays=9, n_sources=2, k=1)
        g = build_model_graph(scen, scen.link_model)
        deployed = {n.id for n in scen.nodes}
        learnt = self.as_learnt(g, deployed)
        design = evaluate_learnt(learnt, deployed, 6, 1)
        sources = [n.id for n in scen.sources]
        opt = brute_force_min_relays(
            pairs_of(g), sources, "sink", [n.id for n in scen.potential_relays], 1, 6,
            other_ok=sources,
        )
        if design is None:
            assert opt is None
        else:
            assert len(design.relays_used) == opt

    def test_augment_noop_when_feasible(self, line5_graph):
        _, g = line5_graph
        deployed = {"sink", "r5", "r10", "r15", "src"}
        learnt = self.as_learnt(g, deployed)
        hybrid = hybrid_graph(learnt, deployed)
        additions, design = augment(hybrid, deployed, 4, 1)
        assert additions == set()

    def test_augment_reconnects_with_minimum_relays(self):
        # learnt graph disconnected: the deployed chain lost its middle hop;
        # a parallel undeployed corridor must be proposed
        nodes = [
            Node("sink", 0, 0, "sink"),
            Node("m", 7, 0, "potential_relay"),
            Node("u1", 5, 5, "potential_relay"),
            Node("u2", 11, 5, "potential_relay"),
            Node("src", 14, 0, "source"),
        ]
        scen = DeploymentScenario(nodes=nodes, link_model=fixtures.INDOOR_MODEL)
        g = build_model_graph(scen, scen.link_model)
        deployed = {"sink", "m", "src"}
        g.set_learnt("sink", "m", True, 0.01)
        g.set_learnt("m", "src", False, 0.8)  # chain broken on field
        hybrid = hybrid_graph(g, deployed)
        result = augment(hybrid, deployed, 4, 1)
        assert result is not None
        additions, design = result
        # subset oracle over undeployed relays (deployed m stays free):
        # src-u2-m-sink works, so one addition is the minimum
        opt = brute_force_min_relays(
            set(hybrid.traversable_pairs()), ["src"], "sink",
            ["u1", "u2"], 1, 4, other_ok=["m"],
        )
        assert opt == 1
        assert additions == {"u2"}

    def test_augment_infeasible_when_nothing_left(self, line5_graph):
        _, g = line5_graph
        deployed = {"sink", "r5", "r10", "r15", "src"}
        learnt = self.as_learnt(g, deployed)
        learnt.set_learnt("r15", "src", False, 0.9)
        hybrid = hybrid_graph(learnt, deployed)
        assert augment(hybrid, deployed, 4, 1) is None

    def test_learnt_bad_blocks_hybrid_even_within_range(self, line5_graph):
        _, g = line5_graph
        deployed = {"sink", "r5", "r10", "r15", "src"}
        learnt = self.as_learnt(g, deployed)
        learnt.set_learnt("r10", "r15", False, 0.7)
        hybrid = hybrid_graph(learnt, deployed)
        assert ("r10", "r15") not in set(hybrid.traversable_pairs())


class TestAgainstBruteForce:
    @pytest.mark.parametrize("seed", range(12))
    @pytest.mark.parametrize("k", [1, 2])
    def test_random_instances(self, seed, k):
        scen = fixtures.random_geometric(seed, n_relays=8, n_sources=2, k=k)
        g = build_model_graph(scen, scen.link_model)
        h_max = 5
        design = extract_design(g, h_max, k)
        sources = [n.id for n in scen.sources]
        relays = [n.id for n in scen.potential_relays]
        opt = brute_force_min_relays(
            pairs_of(g), sources, "sink", relays, k, h_max, other_ok=sources
        )
        if design is None:
            assert opt is None
        else:
            assert opt is not None
            assert len(design.relays_used) <= opt + 2
            assert validate_design(g, design, k, r_max_m=8.0) == []


class TestValidator:
    def test_catches_shared_intermediate(self, diamond_graph):
        _, g = diamond_graph
        design = extract_design(g, 2, 2)
        design.routes["src"][1][1] = design.routes["src"][0][1]  # force overlap
        problems = validate_design(g, design, 2)
        assert any("share intermediate" in p for p in problems)

    def test_catches_hop_violation(self, line5_graph):
        _, g = line5_graph
        design = extract_design(g, 4, 1)
        design.h_max = 3
        assert any("exceeds h_max" in p for p in validate_design(g, design, 1))

    def test_catches_untraversable_edge(self, line5_graph):
        _, g = line5_graph
        design = extract_design(g, 4, 1)
        g.set_learnt("r15", "src", False, 0.9)
        assert any("not traversable" in p for p in validate_design(g, design, 1))

    def test_oracle_helpers_agree(self, diamond_graph):
        _, g = diamond_graph
        adj = adjacency(pairs_of(g))
        allowed = {"A", "B", "C"}
        assert bfs_hops(adj, allowed, "src", "sink") == 2
        assert source_feasible(adj, allowed, "src", "sink", 2, 2)
        assert not source_feasible(adj, {"A"}, "src", "sink", 2, 2)
