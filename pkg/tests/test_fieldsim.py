import math

import numpy as np
import pytest

from oracles import gaussian_outage
from relaynet.fieldsim import (
    ChannelParams,
    FieldError,
    GroundTruthChannel,
    channel_for_scenario,
    preset,
)
from relaynet.linkmodel import estimate_link_outage
from relaynet import fixtures

POS = {"a": (0.0, 0.0), "b": (1.0, 0.0), "c": (2.0, 0.0), "far": (500.0, 0.0)}


def flat_channel(**kw):
    defaults = dict(
        pl0_db=50.0, path_loss_exp=2.0, shadow_sigma_db=0.0, fast_sigma_db=0.0, seed=1
    )
    defaults.update(kw)
    return GroundTruthChannel(ChannelParams(**defaults), POS)


class TestSampleRssi:
    def test_reference_distance_exact(self):
        ch = flat_channel()
        assert ch.sample_rssi(("a", "b"))[0] == pytest.approx(-50.0)

    def test_zero_distance_rejected(self):
        ch = GroundTruthChannel(
            ChannelParams(pl0_db=50, path_loss_exp=2, shadow_sigma_db=0, fast_sigma_db=0),
            {"a": (0, 0), "b": (0, 0)},
        )
        with pytest.raises(FieldError):
            ch.sample_rssi(("a", "b"))

    def test_doubling_distance_drops_by_path_loss_slope(self):
        ch = flat_channel()
        d1 = ch.mean_rssi("a", "b")
        d2 = ch.mean_rssi("a", "c")
        assert d1 - d2 == pytest.approx(10 * 2.0 * math.log10(2.0))

    def test_empirical_mean_matches_analytic(self):
        ch = flat_channel(fast_sigma_db=4.0, shadow_sigma_db=3.0)
        mean = ch.mean_rssi("a", "b")
        samples = ch.sample_rssi(("a", "b"), n=100_000)
        se = 4.0 / math.sqrt(100_000)
        assert abs(samples.mean() - mean) <= 3 * se

    def test_symmetry(self):
        ch = flat_channel(shadow_sigma_db=6.0, fast_sigma_db=2.0)
        assert ch.mean_rssi("a", "b") == ch.mean_rssi("b", "a")


class TestCampaign:
    def test_record_budget(self):
        ch = flat_channel()
        trace = ch.hello_campaign({"a", "b"}, 5000)
        total = sum(len(v) for v in trace.samples.values())
        assert total <= 2 * 5000
        assert trace.n_sent == {("a", "b"): 5000, ("b", "a"): 5000}

    def test_unreachable_pair_yields_empty_trace(self):
        ch = flat_channel()
        trace = ch.hello_campaign({"a", "far"}, 100)
        assert trace.samples == {}
        assert trace.n_sent[("a", "far")] == 100

    def test_campaign_outage_recovers_analytic_value(self):
        ch = flat_channel(fast_sigma_db=4.0, pl0_db=84.0)  # mean -84: near threshold
        trace = ch.hello_campaign({"a", "b"}, 5000)
        stats = estimate_link_outage(trace, ("a", "b"), 5000, -88.0)
        expected = gaussian_outage(ch.mean_rssi("a", "b"), -88.0, 4.0)
        assert stats.p_out_hat == pytest.approx(expected, abs=0.02)

    def test_determinism(self):
        t1 = flat_channel(fast_sigma_db=3.0).hello_campaign({"a", "b", "c"}, 500)
        t2 = flat_channel(fast_sigma_db=3.0).hello_campaign({"a", "b", "c"}, 500)
        assert t1.samples.keys() == t2.samples.keys()
        for k in t1.samples:
            assert np.array_equal(t1.samples[k], t2.samples[k])

    def test_pair_states_independent_of_deployment(self):
        full = flat_channel(shadow_sigma_db=5.0)
        partial = flat_channel(shadow_sigma_db=5.0)
        full.hello_campaign({"a", "b", "c"}, 10)
        partial.hello_campaign({"a", "b"}, 10)
        assert full.mean_rssi("a", "b") == partial.mean_rssi("a", "b")


class TestDrift:
    def test_zero_drift_changes_nothing(self):
        ch = flat_channel(drift_rho=0.9, drift_sigma_db=0.0, shadow_sigma_db=4.0)
        before = ch.mean_rssi("a", "b")
        ch.advance_cycles(40)
        assert ch.mean_rssi("a", "b") == before

    def test_rho_zero_is_white_noise(self):
        ch = flat_channel(drift_rho=0.0, drift_sigma_db=3.0)
        values = []
        for _ in range(4000):
            ch.advance_cycles(1)
            values.append(ch.mean_rssi("a", "b") + 50.0)
        z = np.array(values)
        lag1 = np.corrcoef(z[:-1], z[1:])[0, 1]
        assert abs(lag1) < 0.06
        assert z.std() == pytest.approx(3.0, rel=0.1)

    def test_late_materialization_catches_up(self):
        ch1 = flat_channel(drift_rho=0.8, drift_sigma_db=3.0)
        ch2 = flat_channel(drift_rho=0.8, drift_sigma_db=3.0)
        ch1.mean_rssi("a", "b")  # materialize early
        ch1.advance_cycles(7)
        ch2.advance_cycles(7)  # pair materializes only now
        assert ch1.mean_rssi("a", "b") == pytest.approx(ch2.mean_rssi("a", "b"))

    def test_boundary_crossings_on_lab24(self):
        # default indoor drift flips at least one link good<->bad in nearly
        # every seeded 40-cycle run
        scen = fixtures.lab24()
        crossed_runs = 0
        n_runs = 20
        for seed in range(n_runs):
            ch = channel_for_scenario(scen, preset("indoor", seed=seed))
            ids = sorted(ch.positions)
            pairs = [
                (a, b)
                for i, a in enumerate(ids)
                for b in ids[i + 1 :]
                if ch.distance(a, b) <= 8.0
            ]
            initial = {p: ch.link_outage(*p, -88.0) <= 0.05 for p in pairs}
            crossed = False
            for _ in range(40):
                ch.advance_cycles(1)
                for p in pairs:
                    if (ch.link_outage(*p, -88.0) <= 0.05) != initial[p]:
                        crossed = True
                        break
                if crossed:
                    break
            crossed_runs += crossed
        assert crossed_runs >= 0.9 * n_runs


class TestPresets:
    def test_unknown_preset_rejected(self):
        with pytest.raises(FieldError):
            preset("underwater")

    def test_seed_override(self):
        assert preset("indoor", seed=9).seed == 9

    def test_forced_shadow_overrides(self):
        ch = flat_channel(shadow_sigma_db=5.0)
        ch.force_shadow("a", "b", -40.0)
        assert ch.mean_rssi("a", "b") == pytest.approx(-90.0)
