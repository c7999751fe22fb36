import math

import numpy as np
import pytest

from groupmdp.bounds import eps_perf_vi, resource_costs
from groupmdp.envs import random_grouped_mdp, random_mdp
from groupmdp.estimation import RngSpec
from groupmdp.grouping import GroupingFunction, beta_p_star, beta_r_star
from groupmdp.selector import (
    MdpSampler,
    ResourceGrid,
    UtilityConfig,
    estimate_deviation_factors,
    optimize_resources,
    parse_feasible_set,
    select_grouping_exact,
    select_grouping_practical,
)

LOSS_ONLY = UtilityConfig(alpha=(-1.0, -1e-30, -1e-30))
COST_ONLY = UtilityConfig(alpha=(-1e-30, -1.0, -1.0))
MIXED = UtilityConfig(alpha=(-1.0, -1e-7, -1e-7))


class TestOptimizeResources:
    def test_loss_dominated_picks_largest_resources(self):
        grid = ResourceGrid(k_values=(100, 1000, 10000), t_values=(5, 20, 80))
        choice = optimize_resources(4, 0.01, 0.01, LOSS_ONLY, grid, 5, 0.9, 0.1)
        assert (choice.k_star, choice.t_star) == (10000, 80)

    def test_cost_dominated_picks_smallest_resources(self):
        grid = ResourceGrid(k_values=(100, 1000, 10000), t_values=(5, 20, 80))
        choice = optimize_resources(4, 0.01, 0.01, COST_ONLY, grid, 5, 0.9, 0.1)
        assert (choice.k_star, choice.t_star) == (100, 5)

    def test_matches_exhaustive_evaluation(self):
        grid = ResourceGrid(k_values=(200, 2000, 20000), t_values=(10, 40, 160))
        utility = UtilityConfig(alpha=(-1.0, -1e-5, -1e-4))
        choice = optimize_resources(3, 0.02, 0.01, utility, grid, 4, 0.8, 0.1)
        cells = []
        for k in grid.k_values:
            for t in grid.t_values:
                bd = eps_perf_vi(0.02, 0.01, 4, 3, k, t, 0.8, 0.1)
                costs = resource_costs(4, 3, k, t)
                cells.append((utility.value(bd.eps_perf, costs.c_samp, costs.c_comp), k, t))
        best_util = max(c[0] for c in cells)
        assert choice.utility == pytest.approx(best_util, rel=1e-14)

    def test_tie_breaks_toward_smaller_resources(self):
        flat = UtilityConfig(custom=lambda e, cs, cc: 0.0)
        grid = ResourceGrid(k_values=(10, 100), t_values=(2, 8))
        choice = optimize_resources(2, 0.0, 0.0, flat, grid, 2, 0.5, 0.1)
        assert (choice.k_star, choice.t_star) == (10, 2)

    def test_singleton_grid_reduces_to_one_bounds_call(self):
        grid = ResourceGrid(k_values=(5000,), t_values=(60,))
        choice = optimize_resources(4, 0.03, 0.02, MIXED, grid, 5, 0.9, 0.05)
        bd = eps_perf_vi(0.03, 0.02, 5, 4, 5000, 60, 0.9, 0.05)
        costs = resource_costs(5, 4, 5000, 60)
        assert choice.utility == pytest.approx(
            MIXED.value(bd.eps_perf, costs.c_samp, costs.c_comp), rel=1e-14
        )
        assert choice.breakdown.eps_perf == bd.eps_perf


class TestSelectExact:
    def test_single_candidate_wins_by_default(self):
        m = random_mdp(4, 6, 0.9, seed=0)
        g = GroupingFunction.contiguous_blocks(6, 3)
        grid = ResourceGrid(k_values=(100, 1000), t_values=(10, 50))
        result = select_grouping_exact(m, [g], MIXED, grid, delta=0.1)
        assert result.best_index == 0
        assert result.mode == "exact"
        assert result.best.k_star in grid.k_values

    def test_lossless_coarse_beats_fine_when_costs_matter(self):
        m, natural = random_grouped_mdp(4, 12, 3, 0.9, seed=1)  # exact duplicates
        fine = GroupingFunction.singletons(12)
        grid = ResourceGrid(k_values=(10**4, 10**5), t_values=(50, 100))
        utility = UtilityConfig(alpha=(-1.0, -1e-6, -1e-6))
        result = select_grouping_exact(m, [fine, natural], utility, grid, delta=0.1)
        assert result.best.n_groups == 3

    def test_loss_only_prefers_the_finest_candidate(self):
        m = random_mdp(4, 12, 0.9, seed=2)
        candidates = [
            GroupingFunction.single_group(12),
            GroupingFunction.contiguous_blocks(12, 3),
            GroupingFunction.singletons(12),
        ]
        grid = ResourceGrid(k_values=(10**9,), t_values=(500,))
        result = select_grouping_exact(m, candidates, LOSS_ONLY, grid, delta=0.1)
        assert result.best.n_groups == 12

    def test_order_invariant_up_to_tie_break(self):
        m = random_mdp(4, 8, 0.9, seed=3)
        candidates = [
            GroupingFunction.contiguous_blocks(8, 2),
            GroupingFunction.contiguous_blocks(8, 4),
            GroupingFunction.singletons(8),
        ]
        grid = ResourceGrid(k_values=(10**4,), t_values=(50,))
        forward = select_grouping_exact(m, candidates, MIXED, grid, delta=0.1)
        backward = select_grouping_exact(m, candidates[::-1], MIXED, grid, delta=0.1)
        winner_fwd = candidates[forward.best_index]
        winner_bwd = candidates[::-1][backward.best_index]
        assert np.array_equal(winner_fwd.assignment, winner_bwd.assignment)

    def test_ties_break_to_smaller_group_count_then_index(self):
        m, _ = random_grouped_mdp(3, 8, 2, 0.9, seed=4)
        duplicate_a = GroupingFunction.contiguous_blocks(8, 4)
        duplicate_b = GroupingFunction.contiguous_blocks(8, 4)
        coarse = GroupingFunction.contiguous_blocks(8, 2)
        flat = UtilityConfig(custom=lambda e, cs, cc: 1.0)
        grid = ResourceGrid(k_values=(100,), t_values=(10,))
        result = select_grouping_exact(m, [duplicate_a, duplicate_b, coarse], flat, grid, delta=0.1)
        assert result.best_index == 2  # smallest |g| wins the tie
        result2 = select_grouping_exact(m, [duplicate_a, duplicate_b], flat, grid, delta=0.1)
        assert result2.best_index == 0  # equal |g|: lowest index

    def test_empty_feasible_set_rejected(self):
        m = random_mdp(3, 3, 0.9, seed=5)
        grid = ResourceGrid(k_values=(100,), t_values=(10,))
        with pytest.raises(ValueError):
            select_grouping_exact(m, [], MIXED, grid, delta=0.1)


class TestEstimateDeviationFactors:
    def test_full_groups_with_exact_rows_recover_the_truth(self):
        m = random_mdp(4, 9, 0.9, seed=6)
        g = GroupingFunction.contiguous_blocks(9, 3)
        est = estimate_deviation_factors(MdpSampler(m, exact=True), g, m_per_group=3,
                                         k1=36, rng=RngSpec(0))
        assert est.beta_p_hat == pytest.approx(beta_p_star(m, g), abs=1e-14)
        assert est.beta_r_hat == beta_r_star(m, g)
        assert est.n_sampled_actions == 9

    def test_single_action_groups_have_zero_deviation(self):
        m = random_mdp(3, 4, 0.9, seed=7)
        g = GroupingFunction.singletons(4)
        est = estimate_deviation_factors(MdpSampler(m, exact=True), g, m_per_group=1,
                                         k1=12, rng=RngSpec(0))
        assert est.beta_p_hat == pytest.approx(0.0, abs=1e-12)
        assert est.beta_r_hat == 0.0

    def test_subset_estimates_never_exceed_the_truth_with_exact_rows(self):
        for seed in range(10):
            m = random_mdp(4, 12, 0.9, seed=seed)
            g = GroupingFunction.contiguous_blocks(12, 3)
            est = estimate_deviation_factors(MdpSampler(m, exact=True), g, m_per_group=2,
                                             k1=1000, rng=RngSpec(seed))
            assert est.beta_p_hat <= beta_p_star(m, g) + 1e-12
            assert est.beta_r_hat <= beta_r_star(m, g) + 1e-12

    def test_sampled_beta_r_uses_exact_rewards(self):
        m = random_mdp(3, 6, 0.9, seed=8)
        g = GroupingFunction.contiguous_blocks(6, 2)
        noisy = estimate_deviation_factors(MdpSampler(m), g, m_per_group=3,
                                           k1=600, rng=RngSpec(1))
        assert noisy.beta_r_hat == beta_r_star(m, g)  # full groups, rewards exact

    def test_noise_obeys_the_concentration_bound(self):
        # Duplicated rows: the truth is 0, the estimate is pure sampling noise.
        S, A, G, m_sub, k1, delta = 3, 8, 4, 2, 24000, 0.1
        m, g = random_grouped_mdp(S, A, G, 0.9, seed=9)
        n_bar = G * m_sub
        bound = S * math.sqrt(S * n_bar * math.log(2 * S * n_bar / delta) / (2 * k1))
        hits = 0
        for seed in range(100):
            est = estimate_deviation_factors(MdpSampler(m), g, m_per_group=m_sub,
                                             k1=k1, rng=RngSpec(seed))
            hits += est.beta_p_hat <= bound
        assert hits >= 90

    def test_oversized_subset_rejected(self):
        m = random_mdp(3, 4, 0.9, seed=10)
        g = GroupingFunction.contiguous_blocks(4, 2)
        with pytest.raises(ValueError):
            estimate_deviation_factors(MdpSampler(m), g, m_per_group=3, k1=100, rng=RngSpec(0))

    def test_insufficient_budget_rejected(self):
        m = random_mdp(3, 4, 0.9, seed=11)
        g = GroupingFunction.contiguous_blocks(4, 2)
        with pytest.raises(ValueError):
            estimate_deviation_factors(MdpSampler(m), g, m_per_group=2, k1=5, rng=RngSpec(0))


class TestSelectPractical:
    def test_exact_hook_with_full_sampling_matches_exact_selection(self):
        m = random_mdp(4, 8, 0.9, seed=12)
        # Both candidates have two-action groups, so m_per_group=2 samples fully.
        candidates = [
            GroupingFunction.contiguous_blocks(8, 4),
            GroupingFunction([0, 1, 2, 3, 0, 1, 2, 3]),
        ]
        grid = ResourceGrid(k_values=(10**4, 10**5), t_values=(50,))
        exact = select_grouping_exact(m, candidates, MIXED, grid, delta=0.1)
        practical = select_grouping_practical(
            MdpSampler(m, exact=True), candidates, MIXED, grid,
            m_per_group=2, k1=64, delta=0.1, rng=RngSpec(0),
        )
        assert practical.mode == "estimated"
        assert practical.best_index == exact.best_index
        for pc, ec in zip(practical.candidates, exact.candidates):
            assert pc.utility == pytest.approx(ec.utility, rel=1e-12)

    def test_duplicated_groups_keep_the_exact_winner(self):
        # Refinement-chain candidates: every candidate's groups are exact
        # duplicates, so the within-group spread caps hold for all of them.
        grid = ResourceGrid(k_values=(10**5, 10**6), t_values=(100,))
        matches = 0
        runs = 20
        for seed in range(runs):
            m, natural = random_grouped_mdp(4, 48, 6, 0.5, seed=seed)
            candidates = [natural, natural.split_each(2), natural.split_each(4)]
            exact = select_grouping_exact(m, candidates, MIXED, grid, delta=0.1)
            practical = select_grouping_practical(
                MdpSampler(m), candidates, MIXED, grid,
                m_per_group=2, k1=10**5, delta=0.1, rng=RngSpec(seed),
            )
            matches += practical.best_index == exact.best_index
        assert matches >= int(0.95 * runs)

    def test_tiny_budget_gap_still_below_prop1_bound(self):
        m, natural = random_grouped_mdp(4, 48, 6, 0.5, seed=99)
        candidates = [natural, natural.split_each(2), natural.split_each(4)]
        grid = ResourceGrid(k_values=(10**5, 10**6), t_values=(100,))
        exact = select_grouping_exact(m, candidates, MIXED, grid, delta=0.1)
        n_bar = 24 * 2  # finest candidate: 24 groups, two sampled actions each
        k1 = 4 * n_bar  # one sample per sampled state-action pair
        practical = select_grouping_practical(
            MdpSampler(m), candidates, MIXED, grid,
            m_per_group=2, k1=k1, delta=0.1, rng=RngSpec(3), eta_p=0.0, eta_r=0.0,
        )
        true_utils = [c.utility for c in exact.candidates]
        gap = true_utils[exact.best_index] - true_utils[practical.best_index]
        assert practical.prop1_bound is not None
        assert gap <= practical.prop1_bound

    def test_prop1_bound_reported_only_with_eta_inputs(self):
        m, natural = random_grouped_mdp(3, 8, 2, 0.9, seed=13)
        grid = ResourceGrid(k_values=(1000,), t_values=(20,))
        with_eta = select_grouping_practical(
            MdpSampler(m), [natural], MIXED, grid, 1, 1000, 0.1, RngSpec(0),
            eta_p=0.0, eta_r=0.0,
        )
        without = select_grouping_practical(
            MdpSampler(m), [natural], MIXED, grid, 1, 1000, 0.1, RngSpec(0),
        )
        assert with_eta.prop1_bound is not None and with_eta.prop1_bound >= 0.0
        assert without.prop1_bound is None


class TestConfigParsing:
    def test_utility_json_round_trip(self):
        cfg = UtilityConfig.from_dict({"kind": "weighted_sum", "alpha": [-1, -2, -3], "lipschitz": 4})
        assert cfg.alpha == (-1.0, -2.0, -3.0)
        assert cfg.lipschitz_value == 4.0
        assert UtilityConfig.from_dict(cfg.to_dict()).alpha == cfg.alpha

    def test_nonnegative_weight_rejected(self):
        with pytest.raises(ValueError):
            UtilityConfig(alpha=(-1.0, 0.0, -1.0))

    def test_lipschitz_defaults_to_loss_weight(self):
        assert UtilityConfig(alpha=(-2.5, -1.0, -1.0)).lipschitz_value == 2.5

    def test_feasible_set_parsing(self):
        sets = parse_feasible_set([[0, 0, 1], [0, 1, 2]])
        assert [g.n_groups for g in sets] == [2, 3]
        with pytest.raises(ValueError):
            parse_feasible_set([])
        with pytest.raises(ValueError):
            parse_feasible_set([[0, 2]])  # gap in group labels

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            ResourceGrid(k_values=(), t_values=(1,))
        with pytest.raises(ValueError):
            ResourceGrid(k_values=(10, 5), t_values=(1,))
        grid = ResourceGrid.build([10, 100, 1000], [5, 50], k_max=500)
        assert grid.k_values == (10, 100)
