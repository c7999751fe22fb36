import math

import numpy as np
import pytest

from groupmdp.bounds import (
    Prop1Inputs,
    eps_approx,
    eps_opt_vi,
    eps_perf_vi,
    eps_samp,
    gamma_power,
    prop1_gap_bound,
    resource_costs,
    sample_size_threshold,
)
from groupmdp.envs import TightnessConfig, random_mdp, tightness_closed_forms
from groupmdp.grouping import GroupingFunction, beta_p_star, beta_r_star
from groupmdp.mdp import evaluate_policy, value_iteration


class TestEpsApprox:
    def test_zero_betas_zero_error(self):
        assert eps_approx(0.0, 0.0, 0.9) == 0.0

    def test_hand_computed_value(self):
        # 2 * (0.1/0.5 + 0.5*0.2/0.25) = 2 * (0.2 + 0.4) = 1.2
        assert eps_approx(0.2, 0.1, 0.5) == pytest.approx(1.2, abs=1e-14)

    def test_invalid_gamma_rejected(self):
        with pytest.raises(ValueError):
            eps_approx(0.1, 0.1, 1.0)

    def test_tightness_corridor_identity(self):
        gamma = 0.5
        grid = np.linspace(0.0, 0.1, 11)
        for bp in grid:
            for br in grid:
                closed = tightness_closed_forms(TightnessConfig(beta_p=bp, beta_r=br, gamma=gamma))
                half_bound = eps_approx(bp, br, gamma) / 2.0
                assert abs(half_bound - closed.approx_gap) == pytest.approx(
                    closed.identity_gap, abs=1e-12
                )

    def test_corridor_condition_bounds_the_gap(self):
        gamma = 0.5
        grid = np.linspace(0.0, 0.1, 11)
        for eps in (0.01, 0.05):
            bp_cap = math.sqrt(2.0) * (1.0 - gamma) ** 2 * eps
            br_cap = (1.0 - gamma) / (math.sqrt(2.0) * gamma)
            checked = 0
            for bp in grid:
                for br in grid:
                    if bp <= bp_cap and br <= br_cap:
                        closed = tightness_closed_forms(TightnessConfig(bp, br, gamma))
                        assert closed.identity_gap <= eps
                        checked += 1
            assert checked > 0


class TestEpsPerfVi:
    def test_vanishes_with_unbounded_resources(self):
        bd = eps_perf_vi(0.0, 0.0, 5, 10, 10**18, 10**6, 0.9, 0.1)
        assert bd.eps_perf < 1e-4
        assert bd.eps_opt == 0.0  # gamma^T underflows cleanly
        bigger = eps_perf_vi(0.0, 0.0, 5, 10, 10**24, 10**6, 0.9, 0.1)
        assert bigger.eps_perf < bd.eps_perf

    def test_dual_implementation_oracle(self):
        S, G, K, T, gamma, delta, beta = 5, 10, 5 * 10 * 500, 100, 0.9, 0.1, 0.01
        bd = eps_perf_vi(beta, beta, S, G, K, T, gamma, delta)
        approx = 2.0 * (beta / (1 - gamma) + gamma * beta / (1 - gamma) ** 2)
        samp = 20.0 * gamma * math.sqrt(
            S * G * math.log(8 * S * G / (delta * (1 - gamma))) / (K * (1 - gamma) ** 3)
        )
        alg = 8.0 * gamma**T / (1 - gamma) ** 3
        assert bd.eps_approx == pytest.approx(approx, rel=1e-12)
        assert bd.eps_samp == pytest.approx(samp, rel=1e-12)
        assert bd.eps_alg == pytest.approx(alg, rel=1e-12)
        assert bd.eps_perf == pytest.approx(approx + samp + alg, rel=1e-12)

    def test_breakdown_identity(self):
        bd = eps_perf_vi(0.05, 0.02, 4, 3, 1000, 50, 0.8, 0.05)
        assert bd.eps_perf == pytest.approx(
            bd.eps_approx + bd.eps_samp + 4.0 * bd.eps_opt / (1.0 - bd.gamma), rel=1e-14
        )
        assert min(bd.eps_approx, bd.eps_samp, bd.eps_alg, bd.eps_opt) >= 0.0

    def test_fewer_groups_shrink_sampling_error(self):
        full = eps_samp(5, 10, 25000, 0.9, 0.1)
        half = eps_samp(5, 5, 25000, 0.9, 0.1)
        assert half < full

    def test_monotone_in_resources(self):
        base = eps_perf_vi(0.01, 0.01, 5, 10, 10**4, 100, 0.9, 0.1).eps_perf
        assert eps_perf_vi(0.01, 0.01, 5, 10, 10**5, 100, 0.9, 0.1).eps_perf < base
        assert eps_perf_vi(0.01, 0.01, 5, 10, 10**4, 200, 0.9, 0.1).eps_perf <= base

    def test_sample_size_flag(self):
        threshold = sample_size_threshold(2, 2, 0.5, 0.1)
        below = eps_perf_vi(0.0, 0.0, 2, 2, int(threshold) - 10, 10, 0.5, 0.1)
        above = eps_perf_vi(0.0, 0.0, 2, 2, int(threshold) + 10, 10, 0.5, 0.1)
        assert not below.sample_size_ok
        assert above.sample_size_ok

    def test_eps_opt_override(self):
        bd = eps_perf_vi(0.0, 0.0, 2, 2, 100, 5, 0.5, 0.1, eps_opt_override=0.25)
        assert bd.eps_opt == 0.25
        assert bd.eps_alg == pytest.approx(4 * 0.25 / 0.5)

    def test_invalid_delta_rejected(self):
        with pytest.raises(ValueError):
            eps_perf_vi(0.0, 0.0, 2, 2, 100, 5, 0.5, 0.0)

    def test_approx_error_grows_under_coarsening(self):
        for seed in range(5):
            m = random_mdp(4, 12, 0.9, seed=seed)
            fine = GroupingFunction.contiguous_blocks(12, 6)
            prev = eps_approx(beta_p_star(m, fine), beta_r_star(m, fine), m.gamma)
            for coarser in (3, 2, 1):
                coarse = fine.merge_adjacent(coarser)
                cur = eps_approx(beta_p_star(m, coarse), beta_r_star(m, coarse), m.gamma)
                assert cur >= prev - 1e-12
                prev, fine = cur, coarse


class TestPlanningGap:
    def test_gamma_power_log_space(self):
        assert gamma_power(0.9, 10) == pytest.approx(0.9**10, rel=1e-12)
        assert gamma_power(0.999, 10**6) == 0.0  # underflow, no error
        assert gamma_power(0.0, 5) == 0.0
        assert gamma_power(0.0, 0) == 1.0

    def test_vi_policy_gap_obeys_the_planning_bound(self):
        # Finite-sweep VI against the converged optimum on the same model.
        for seed in range(10):
            gamma = 0.9 if seed % 2 else 0.5
            m = random_mdp(6, 5, gamma, seed=seed)
            v_star = value_iteration(m, tolerance=1e-13)[0].v
            for t in (5, 20, 50):
                _, policy = value_iteration(m, max_iters=t)
                v_pi = evaluate_policy(m, policy, tolerance=1e-13).v
                assert np.max(v_star - v_pi) <= eps_opt_vi(t, gamma) + 1e-9


class TestResourceCosts:
    def test_hand_computed_compute_cost(self):
        costs = resource_costs(5, 10, 25000, 100)
        assert costs.c_comp == (25 * 10 + 2 * 5 * 10) * 100 == 35000
        assert costs.c_samp == 25000

    def test_sample_cost_is_identity(self):
        assert resource_costs(3, 2, 10**4, 7).c_samp == 10**4

    def test_minimal_case(self):
        assert resource_costs(1, 1, 1, 1).c_comp == 3

    def test_nonpositive_inputs_rejected(self):
        with pytest.raises(ValueError):
            resource_costs(0, 1, 1, 1)


class TestProp1:
    def test_vanishes_with_exact_structure_and_huge_budget(self):
        bound = prop1_gap_bound(Prop1Inputs(
            lipschitz=1.0, eta_p=0.0, eta_r=0.0, n_sampled_actions=4,
            k1=10**16, n_states=3, gamma=0.9, delta=0.1,
        ))
        assert bound < 1e-4

    def test_dual_implementation_oracle(self):
        L, gamma, S, eta_r, eta_p, n_bar, k1, delta = 1.0, 0.5, 2, 0.01, 0.005, 4, 10**6, 0.1
        bound = prop1_gap_bound(Prop1Inputs(
            lipschitz=L, eta_p=eta_p, eta_r=eta_r, n_sampled_actions=n_bar,
            k1=k1, n_states=S, gamma=gamma, delta=delta,
        ))
        expected = (
            4 * L * eta_r / (1 - gamma)
            + 4 * L * gamma * S * eta_p / (1 - gamma) ** 2
            + (4 * L * gamma * S / (1 - gamma) ** 2)
            * math.sqrt(S * n_bar * math.log(2 * S * n_bar / delta) / (2 * k1))
        )
        assert bound == pytest.approx(expected, rel=1e-12)

    def test_linear_in_lipschitz(self):
        base = Prop1Inputs(lipschitz=1.0, eta_p=0.01, eta_r=0.01, n_sampled_actions=6,
                           k1=10**4, n_states=4, gamma=0.8, delta=0.1)
        doubled = Prop1Inputs(lipschitz=2.0, eta_p=0.01, eta_r=0.01, n_sampled_actions=6,
                              k1=10**4, n_states=4, gamma=0.8, delta=0.1)
        assert prop1_gap_bound(doubled) == pytest.approx(2.0 * prop1_gap_bound(base), rel=1e-12)

    def test_invalid_inputs_rejected(self):
        with pytest.raises(ValueError):
            prop1_gap_bound(Prop1Inputs(lipschitz=0.0, eta_p=0.0, eta_r=0.0,
                                        n_sampled_actions=1, k1=1, n_states=1,
                                        gamma=0.5, delta=0.1))
