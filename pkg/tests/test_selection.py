from itertools import combinations, product

import numpy as np
import pytest

from afrelay.channel import AntennaPair, ChannelRealization, NetworkConfig, candidate_pairs, draw_network
from afrelay.link import build_link, equivalent_link, mse_direct, relay_gains
from afrelay.selection import (
    BudgetExceededError,
    InsufficientRelaysError,
    SelectionResult,
    SelectionState,
    apply_global_power_constraint,
    dors_select,
    exhaustive_select,
    exhaustive_trial_count,
    gmm_select,
    harmonic_gain,
    incremental_mse,
    score_candidates,
    so_select,
    subchannel_angle,
)


def direct(channels, pairs, config, power=None):
    power = config.ploc if power is None else power
    link = build_link(channels, pairs, config.sigma_x2, power)
    return mse_direct(equivalent_link(link), config.ns, config.nd)


def state_with(config, channels, pairs):
    state = SelectionState.initial(config)
    for p in pairs:
        state.accept(p, channels, np.nan)
    return state


def test_state_invariants():
    config = NetworkConfig.from_db(4, 4, 2, 8, 10.0)
    ch = draw_network(config, 1, 0)
    state = state_with(config, ch, [AntennaPair(2, 0, 1), AntennaPair(5, 1, 1)])
    gwh = state.gwh
    np.testing.assert_allclose(state.a_l, state.phi_l + config.sigma_x2 * gwh @ gwh.conj().T, atol=1e-9)
    np.testing.assert_allclose(state.a_l @ state.a_l_inv, np.eye(4), atol=1e-9)
    assert {p.relay for p in state.remaining}.isdisjoint({2, 5})
    assert len(state.remaining) == 6 * 4


class TestIncrementalMse:
    def test_first_level_matches_direct(self):
        config = NetworkConfig.from_db(4, 4, 2, 8, 5.0)
        ch = draw_network(config, 3, 0)
        state = SelectionState.initial(config)
        for cand in candidate_pairs(config):
            q = incremental_mse(state, cand, ch, config.sigma_x2, config.ploc)
            assert q == pytest.approx(direct(ch, [cand], config), rel=1e-9)

    def test_zero_gain_candidate(self):
        config = NetworkConfig.from_db(4, 4, 2, 8, 5.0)
        ch = draw_network(config, 3, 1)
        state = state_with(config, ch, [AntennaPair(0, 1, 0), AntennaPair(3, 0, 0)])
        q = incremental_mse(state, AntennaPair(6, 1, 1), ch, config.sigma_x2, 0.0)
        assert q == pytest.approx(state.current_mse(), rel=1e-12)
        assert q == pytest.approx(direct(ch, state.pairs, config), rel=1e-9)

    def test_level_two_matches_augmented(self, rng):
        config = NetworkConfig.from_db(4, 4, 2, 8, 20.0)
        for trial in range(20):
            ch = draw_network(config, 9, trial)
            relays = rng.permutation(8)
            pairs = [AntennaPair(int(r), int(rng.integers(2)), int(rng.integers(2))) for r in relays[:3]]
            state = state_with(config, ch, pairs[:2])
            q = incremental_mse(state, pairs[2], ch, config.sigma_x2, config.ploc)
            assert q == pytest.approx(direct(ch, pairs, config), rel=1e-9)

    def test_equivalence_property(self, rng):
        worst = 0.0
        for i in range(1000):
            ns = int(rng.choice([2, 4]))
            k = int(rng.choice([4, 8]))
            level = int(rng.integers(0, 4))
            config = NetworkConfig.from_db(ns, ns, 2, k, float(rng.choice([5.0, 20.0])))
            ch = draw_network(config, 77, i)
            relays = rng.permutation(k)[: level + 1]
            pairs = [AntennaPair(int(r), int(rng.integers(2)), int(rng.integers(2))) for r in relays]
            state = state_with(config, ch, pairs[:-1])
            q = incremental_mse(state, pairs[-1], ch, config.sigma_x2, config.ploc)
            ref = direct(ch, pairs, config)
            worst = max(worst, abs(q - ref) / ref)
        assert worst <= 1e-9

    def test_batched_scores_match_single(self):
        config = NetworkConfig.from_db(4, 6, 2, 8, 10.0)
        ch = draw_network(config, 5, 0)
        state = state_with(config, ch, [AntennaPair(1, 0, 0), AntennaPair(4, 1, 0), AntennaPair(7, 1, 1)])
        batched = score_candidates(state, state.remaining, ch)
        single = [incremental_mse(state, c, ch, config.sigma_x2, config.ploc) for c in state.remaining]
        np.testing.assert_allclose(batched, single, rtol=1e-12)

    def test_degenerate_update_scores_inf(self):
        config = NetworkConfig.from_db(2, 2, 1, 2, 10.0)
        ch = draw_network(config, 5, 0)
        state = SelectionState.initial(config)
        cand = AntennaPair(0, 0, 0)
        g = ch.g(cand)
        w = relay_gains(ch.h(cand), config.sigma_x2, config.ploc)
        u = w**2 * g  # l = 0 so the G W H term vanishes
        state.a_l_inv = -np.eye(2) / np.vdot(g, u)  # forces 1 + g^H A^-1 u = 0
        scores = score_candidates(state, [cand, AntennaPair(1, 0, 0)], ch)
        assert scores[0] == np.inf and np.isfinite(scores[1])


class TestGmm:
    def test_single_candidate(self):
        config = NetworkConfig.from_db(1, 1, 1, 1, 5.0)
        ch = draw_network(config, 0, 0)
        res = gmm_select(ch, config)
        assert res.pairs == (AntennaPair(0, 0, 0),)
        assert res.mse < config.sigma_x2 * config.nd

    def test_strong_relay_first(self):
        backward = np.array([[[10.0]], [[0.1]]], dtype=complex)
        forward = np.array([[[10.0]], [[0.1]]], dtype=complex)
        ch = ChannelRealization(backward, forward)
        config = NetworkConfig.from_db(1, 1, 1, 2, 5.0)
        q0 = direct(ch, [AntennaPair(0, 0, 0)], config)
        q1 = direct(ch, [AntennaPair(1, 0, 0)], config)
        assert q0 < q1
        assert gmm_select(ch, config).pairs[0].relay == 0

    def test_result_matches_direct_and_is_monotone(self):
        for snr in (0.0, 5.0, 20.0):
            config = NetworkConfig.from_db(4, 4, 2, 12, snr)
            for trial in range(30):
                ch = draw_network(config, 11, trial)
                res = gmm_select(ch, config)
                assert res.mse == pytest.approx(direct(ch, res.pairs, config), rel=1e-9)
                assert all(b < a for a, b in zip(res.mse_trace, res.mse_trace[1:]))
                assert res.mse == res.mse_trace[-1]
                assert len({p.relay for p in res.pairs}) == res.size >= 1

    def test_against_exhaustive(self):
        # equality count frozen from the exhaustive oracle for this seed
        config = NetworkConfig.from_db(2, 2, 2, 4, 5.0)
        equal = 0
        for trial in range(100):
            ch = draw_network(config, 3, trial)
            g = gmm_select(ch, config)
            e = exhaustive_select(ch, config)
            assert e.mse <= g.mse * (1 + 1e-12)
            equal += abs(g.mse - e.mse) <= 1e-9 * e.mse
        assert equal == 43

    def test_stops_when_pool_empty(self):
        config = NetworkConfig.from_db(2, 2, 1, 2, 30.0)
        ch = draw_network(config, 0, 2)
        res = gmm_select(ch, config)
        assert 1 <= res.size <= 2


class TestDors:
    def test_harmonic_arithmetic(self):
        assert harmonic_gain(np.array([2.0]), np.array([2.0])) == pytest.approx(4.0)
        assert harmonic_gain(np.array([1.0]), np.array([10.0])) == pytest.approx(200 / 101)
        assert harmonic_gain(np.zeros(2), np.zeros(2)) == 0.0

    def test_single_stream_picks_global_max(self):
        config = NetworkConfig.from_db(1, 1, 2, 6, 5.0)
        ch = draw_network(config, 2, 0)
        pool = candidate_pairs(config)
        metric = [harmonic_gain(ch.h(p), ch.g(p)) for p in pool]
        assert dors_select(ch, config).pairs == (pool[int(np.argmax(metric))],)

    def test_matches_ranking_oracle(self):
        config = NetworkConfig.from_db(4, 4, 2, 8, 5.0)
        for trial in range(20):
            ch = draw_network(config, 8, trial)
            pool = candidate_pairs(config)
            ranked = sorted(pool, key=lambda p: -harmonic_gain(ch.h(p), ch.g(p)))
            chosen, used = [], set()
            for p in ranked:
                if p.relay not in used:
                    chosen.append(p)
                    used.add(p.relay)
                if len(chosen) == config.m:
                    break
            res = dors_select(ch, config)
            assert res.pairs == tuple(chosen)
            assert res.mse == pytest.approx(direct(ch, chosen, config))

    def test_insufficient_relays(self):
        config = NetworkConfig.from_db(4, 4, 2, 3, 5.0)
        with pytest.raises(InsufficientRelaysError):
            dors_select(draw_network(config, 0, 0), config)
        with pytest.raises(InsufficientRelaysError):
            so_select(draw_network(config, 0, 0), config)


class TestSo:
    def test_angle_extremes(self):
        assert subchannel_angle(np.array([1, 0j]), np.array([0, 1j])) == pytest.approx(np.pi / 2)
        assert subchannel_angle(np.array([1, 1j]), np.array([2j, -2])) == pytest.approx(0.0, abs=1e-7)

    def test_prefers_orthogonal(self):
        backward = np.array([[[1, 0]], [[0, 1]], [[1, 0]]], dtype=complex)
        forward = np.array([[[3], [0]], [[0], [1]], [[1], [0]]], dtype=complex)
        ch = ChannelRealization(2 * backward, forward)
        config = NetworkConfig.from_db(2, 2, 1, 3, 5.0)
        res = so_select(ch, config)
        assert [p.relay for p in res.pairs] == [0, 1]

    def test_single_stream_equals_dors(self):
        config = NetworkConfig.from_db(1, 2, 2, 6, 5.0)
        for trial in range(10):
            ch = draw_network(config, 4, trial)
            assert so_select(ch, config).pairs == dors_select(ch, config).pairs

    def test_each_step_maximises_angle_sum(self):
        config = NetworkConfig.from_db(3, 3, 2, 5, 5.0)
        for trial in range(20):
            ch = draw_network(config, 6, trial)
            res = so_select(ch, config)
            pool = candidate_pairs(config)
            for step in range(1, config.m):
                chosen = res.pairs[:step]
                used = {p.relay for p in chosen}

                def score(p):
                    return sum(subchannel_angle(ch.h(p), ch.h(q)) + subchannel_angle(ch.g(p), ch.g(q))
                               for q in chosen)

                best = max((p for p in pool if p.relay not in used), key=score)
                assert score(res.pairs[step]) == pytest.approx(score(best), abs=1e-12)
                assert res.pairs[step].relay not in used


class TestExhaustive:
    def test_counts(self):
        assert exhaustive_trial_count(NetworkConfig(4, 4, 2, 8, 1.0, 1.0), 8) == 386_560
        assert exhaustive_trial_count(NetworkConfig(1, 1, 1, 1, 1.0, 1.0), 1) == 1
        assert exhaustive_trial_count(NetworkConfig(4, 4, 1, 4, 1.0, 1.0)) == 1

    def test_count_by_enumeration(self):
        config = NetworkConfig(4, 4, 2, 10, 1.0, 1.0)
        brute = sum(
            sum(1 for _ in product(range(4), repeat=size))
            for size in range(4, 11) for _ in combinations(range(10), size)
        )
        assert brute == 9_757_184 == exhaustive_trial_count(config, 10)

    def test_count_errors(self):
        with pytest.raises(ValueError):
            exhaustive_trial_count(NetworkConfig(1, 1, 1, 3, 1.0, 1.0), 4)
        with pytest.raises(OverflowError):
            exhaustive_trial_count(NetworkConfig(1, 1, 10, 200, 1.0, 1.0))

    def test_budget(self):
        config = NetworkConfig(4, 4, 2, 8, 1.0, 1.0)
        with pytest.raises(BudgetExceededError, match="386560") as info:
            exhaustive_select(draw_network(config, 0, 0), config, budget=1000)
        assert info.value.count == 386_560

    def test_trivial_instance(self):
        config = NetworkConfig.from_db(1, 1, 1, 1, 5.0)
        ch = draw_network(config, 0, 0)
        res = exhaustive_select(ch, config)
        assert res.pairs == (AntennaPair(0, 0, 0),)
        assert res.mse == pytest.approx(direct(ch, res.pairs, config))

    def test_matches_brute_force(self):
        config = NetworkConfig.from_db(2, 2, 2, 3, 10.0)
        ch = draw_network(config, 12, 0)
        per_relay = {k: [AntennaPair(k, m, n) for m in range(2) for n in range(2)] for k in range(3)}
        best = min(
            (direct(ch, list(choice), config), choice)
            for size in (2, 3) for subset in combinations(range(3), size)
            for choice in product(*(per_relay[k] for k in subset))
        )
        res = exhaustive_select(ch, config)
        assert res.mse == pytest.approx(best[0], rel=1e-10)
        assert res.pairs == best[1]

    def test_lower_bound_on_all_schemes(self):
        config = NetworkConfig.from_db(2, 2, 2, 5, 5.0)
        for trial in range(20):
            ch = draw_network(config, 13, trial)
            e = exhaustive_select(ch, config).mse
            for scheme in (gmm_select, dors_select, so_select):
                assert e <= scheme(ch, config).mse * (1 + 1e-12)


class TestGlobalPower:
    def test_dilution_factor_one(self):
        config = NetworkConfig.from_db(4, 4, 2, 8, 5.0)
        ch = draw_network(config, 1, 0)
        res = dors_select(ch, config)
        diluted = apply_global_power_constraint(res, ch, config)
        assert diluted.pairs == res.pairs
        assert diluted.mse == pytest.approx(res.mse, rel=1e-12)
        assert diluted.scheme == "DORS-global-power"

    def test_half_power_scales_gains(self):
        config = NetworkConfig.from_db(2, 2, 2, 6, 5.0)
        ch = draw_network(config, 1, 0)
        pairs = tuple(AntennaPair(k, 0, 1) for k in range(4))
        res = apply_global_power_constraint(
            SelectionResult(pairs, "X", 0.0, (), config.ploc), ch, config)
        assert res.per_relay_power_used == pytest.approx(config.ploc / 2)
        full = build_link(ch, pairs, config.sigma_x2, config.ploc).w_diag
        half = build_link(ch, pairs, config.sigma_x2, res.per_relay_power_used).w_diag
        np.testing.assert_allclose(half, full / np.sqrt(2), rtol=1e-14)
        assert res.mse == pytest.approx(direct(ch, pairs, config, config.ploc / 2))

    def test_dilution_hurts_on_average(self):
        config = NetworkConfig.from_db(4, 4, 2, 12, 5.0)
        full, diluted = [], []
        for trial in range(100):
            ch = draw_network(config, 21, trial)
            res = gmm_select(ch, config)
            assert res.size > config.m
            full.append(res.mse)
            diluted.append(apply_global_power_constraint(res, ch, config).mse)
        assert np.mean(diluted) >= np.mean(full)

    def test_needs_a_pair(self):
        config = NetworkConfig.from_db(1, 1, 1, 1, 5.0)
        empty = SelectionResult((), "X", 1.0, (), 1.0)
        with pytest.raises(ValueError):
            apply_global_power_constraint(empty, draw_network(config, 0, 0), config)


def test_gain_scale_coherence():
    config = NetworkConfig.from_db(4, 4, 2, 8, 5.0)
    ch = draw_network(config, 2, 0)
    pairs = candidate_pairs(config)[::4]
    w = build_link(ch, pairs, config.sigma_x2, config.ploc).w_diag
    w3 = build_link(ch, pairs, config.sigma_x2, 9 * config.ploc).w_diag
    np.testing.assert_allclose(w3, 3 * w, rtol=1e-14)
