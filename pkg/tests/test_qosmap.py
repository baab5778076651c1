import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import mc_attempt_delays
from relaynet.qosmap import (
    HopDelayPMF,
    InfeasibleQos,
    MacParams,
    QosError,
    QoSSpec,
    convolve_hops,
    hop_bound,
    hop_delay_pmf,
    predict_path_pdel,
)

MAC = MacParams()


class TestHopDelayPmf:
    def test_q0_is_single_attempt(self):
        pmf = hop_delay_pmf(0.0, MAC)
        assert pmf.drop_prob == 0.0
        mass = pmf.mass
        # uniform over 8 backoff slots, shifted by one attempt overhead
        assert len(mass) == 8
        expected = sorted(
            MAC.attempt_overhead_ms + i * MAC.backoff_unit_ms for i in range(8)
        )
        assert sorted(mass) == pytest.approx(expected)
        assert all(p == pytest.approx(1 / 8) for p in mass.values())

    def test_drop_prob_arithmetic(self):
        assert hop_delay_pmf(0.05, MAC).drop_prob == pytest.approx(0.05**4)

    def test_mass_sums_to_one(self):
        for q in (0.0, 0.05, 0.3, 0.7):
            assert hop_delay_pmf(q, MAC).probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_mean_increasing_in_q(self):
        means = [hop_delay_pmf(q, MAC).mean_ms() for q in (0.0, 0.1, 0.3, 0.5, 0.8)]
        assert all(a < b for a, b in zip(means, means[1:]))

    def test_q_one_rejected(self):
        with pytest.raises(QosError):
            hop_delay_pmf(1.0, MAC)

    def test_matches_monte_carlo_at_q_half(self):
        pmf = hop_delay_pmf(0.5, MAC)
        delays, dropped = mc_attempt_delays(0.5, MAC, 200_000, seed=2)
        n = delays.size
        mc_mean = delays.mean()
        se_mean = delays.std(ddof=1) / math.sqrt(n)
        assert abs(pmf.mean_ms() - mc_mean) <= 3 * se_mean
        for d in (6.0, 10.0, 20.0, 35.0):
            p = pmf.cdf(d)
            p_hat = float((delays <= d).mean())
            se = math.sqrt(max(p_hat * (1 - p_hat), 1e-9) / n)
            assert abs(p - p_hat) <= 3 * se + 1e-9
        drop_hat = dropped / 200_000
        se_drop = math.sqrt(drop_hat * (1 - drop_hat) / 200_000)
        assert abs(pmf.drop_prob - drop_hat) <= 3 * se_drop


class TestConvolve:
    def test_identity(self):
        pmf = hop_delay_pmf(0.05, MAC)
        out = convolve_hops(pmf, 1)
        assert np.array_equal(out.probs, pmf.probs)

    def test_point_mass_shifts(self):
        probs = np.zeros(6)
        probs[5] = 1.0  # point mass at 5 ticks
        pmf = HopDelayPMF(tick_us=1000, probs=probs, drop_prob=0.0)
        out = convolve_hops(pmf, 2)
        assert out.mass == {10.0: pytest.approx(1.0)}

    def test_mass_preserved(self):
        pmf = hop_delay_pmf(0.05, MAC)
        out = convolve_hops(pmf, 6)
        assert out.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_three_hops_match_monte_carlo(self):
        pmf3 = convolve_hops(hop_delay_pmf(0.05, MAC), 3)
        rng_seeds = (3, 4, 5)
        per_hop = [mc_attempt_delays(0.05, MAC, 120_000, seed=s)[0] for s in rng_seeds]
        n = min(d.size for d in per_hop)
        totals = per_hop[0][:n] + per_hop[1][:n] + per_hop[2][:n]
        for d in (18.0, 25.0, 40.0):
            p_hat = float((totals <= d).mean())
            se = math.sqrt(max(p_hat * (1 - p_hat), 1e-9) / n)
            assert abs(pmf3.cdf(d) - p_hat) <= 3 * se + 1e-9

    def test_cdf_non_increasing_in_h(self):
        pmf = hop_delay_pmf(0.05, MAC)
        vals = [convolve_hops(pmf, h).cdf(60.0) for h in range(1, 8)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestHopBound:
    def test_outage_budget_five_hops(self):
        hb = hop_bound(0.05, 200.0, 0.05, 0.77)
        assert hb.h_max_2 == 5
        assert hb.h_max == 5

    def test_outage_budget_six_hops(self):
        assert hop_bound(0.05, 200.0, 0.05, 0.73).h_max == 6

    def test_zero_outage_limit(self):
        hb = hop_bound(0.05, 200.0, 0.0, 0.73)
        assert hb.h_max_2 is None
        assert hb.h_max == hb.h_max_1

    def test_h2_monotone_in_pout(self):
        h2 = [hop_bound(0.05, 200.0, p, 0.73).h_max_2 for p in (0.02, 0.05, 0.1, 0.2)]
        assert all(a >= b for a, b in zip(h2, h2[1:]))

    def test_h2_monotone_in_pdel(self):
        # looser delivery target allows more hops
        h2 = [hop_bound(0.05, 200.0, 0.02, p).h_max_2 for p in (0.95, 0.9, 0.8, 0.73)]
        assert all(a <= b for a, b in zip(h2, h2[1:]))

    def test_infeasible_delay(self):
        with pytest.raises(InfeasibleQos):
            hop_bound(0.05, 1.0, 0.05, 0.73)  # 1 ms budget: one hop cannot fit

    def test_infeasible_outage(self):
        with pytest.raises(InfeasibleQos):
            hop_bound(0.05, 200.0, 0.9, 0.73)


class TestPredictPathPdel:
    def test_single_clean_hop(self):
        v = predict_path_pdel([0.0], 0.05, 200.0, MAC)
        assert v >= 0.9999 * (1 - 0.05**4)
        assert v <= 1.0

    def test_matches_closed_form_at_five_hops(self):
        v = predict_path_pdel([0.05] * 5, 0.05, 200.0, MAC)
        pmf5 = convolve_hops(hop_delay_pmf(0.05, MAC), 5)
        expected = (0.95**5) * ((1 - 0.05**4) ** 5) * pmf5.cdf(200.0)
        assert v == pytest.approx(expected, rel=1e-12)
        assert v >= 0.77  # the design inequality holds at h = 5

    def test_absorbing_outage(self):
        assert predict_path_pdel([0.0, 1.0, 0.0], 0.05, 200.0, MAC) == 0.0

    def test_outage_out_of_range_rejected(self):
        with pytest.raises(QosError):
            predict_path_pdel([0.5, 1.2], 0.05, 200.0, MAC)

    @given(
        st.lists(st.floats(min_value=0.0, max_value=0.3), min_size=2, max_size=6),
        st.integers(min_value=0, max_value=5),
    )
    @settings(max_examples=40, deadline=None)
    def test_permutation_invariant_and_monotone(self, outages, bump_idx):
        base = predict_path_pdel(outages, 0.05, 200.0, MAC)
        shuffled = list(reversed(outages))
        assert predict_path_pdel(shuffled, 0.05, 200.0, MAC) == pytest.approx(base)
        idx = bump_idx % len(outages)
        worse = list(outages)
        worse[idx] = min(1.0, worse[idx] + 0.2)
        assert predict_path_pdel(worse, 0.05, 200.0, MAC) <= base + 1e-12


class TestQoSSpec:
    def test_pdel_must_stay_below_in_time_target(self):
        with pytest.raises(QosError):
            QoSSpec(d_max_ms=200.0, p_del=0.99995)

    def test_roundtrip(self):
        q = QoSSpec(d_max_ms=200.0, p_del=0.77, k=2)
        assert QoSSpec.from_dict(q.to_dict()) == q
