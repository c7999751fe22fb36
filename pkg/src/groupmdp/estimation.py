"""Generative-model sampling, empirical grouped MDPs, and the planning pipeline.

The pipeline builds the grouped MDP, draws K' next-state samples per
(state, group) pair, plans on the empirical model with value iteration,
and lifts the resulting group-level policy back to the action space.
Rewards are never sampled: the deterministic-reward assumption makes the
empirical rewards exact copies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grouping import GroupingFunction, InnerPolicy, build_grouped_mdp, lift_policy
from .mdp import PolicyTable, TabularMdp, ValueTables, evaluate_policy, value_iteration

# Substream namespaces so the per-pair streams, subset draws, and per-(s,a)
# row estimates never collide.
PAIR_NS = 0
SUBSET_NS = 1
ROW_NS = 2


@dataclass(frozen=True)
class RngSpec:
    """Seed plus a fixed substream derivation rule.

    Streams are derived from the seed and an integer key, never from
    iteration order, so concurrent sampling schedules produce identical
    results. The per-(state, group) substream index is s * n_groups + h.
    """

    seed: int

    def stream(self, *key: int) -> np.random.Generator:
        return np.random.default_rng([int(self.seed), *(int(k) for k in key)])

    def pair_stream(self, s: int, h: int, n_groups: int) -> np.random.Generator:
        return self.stream(PAIR_NS, s * n_groups + h)


def derive_seed(master_seed: int, *key: int) -> int:
    """Mix a master seed with an index tuple into a fresh 64-bit seed.

    Uses numpy's SeedSequence spawn keys, so adding new settings or trials
    never perturbs previously derived streams.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SampleBudget:
    """K' generative samples per (state, group) pair; total K = S * |g| * K'."""

    per_pair: int

    def __post_init__(self):
        if self.per_pair < 1:
            raise ValueError("per_pair must be >= 1")

    def total_for(self, n_states: int, n_groups: int) -> int:
        return n_states * n_groups * self.per_pair


@dataclass(frozen=True)
class EmpiricalGroupedMdp:
    """Empirical grouped model: hat-P rows are exact count/K' ratios.

    ``counts`` is None when built through the exact-model test hook.
    """

    mdp: TabularMdp
    counts: np.ndarray | None
    per_pair: int


def sample_generative(
    gmdp: TabularMdp,
    budget: SampleBudget,
    rng: RngSpec,
    exact: bool = False,
) -> EmpiricalGroupedMdp:
    """Draw K' next states i.i.d. from every (state, group) row and count them.

    The empirical transition is count/K'; rewards are copied exactly. With
    ``exact=True`` (test hook) the true rows are copied instead of sampled.
    """
    S, G = gmdp.n_states, gmdp.n_actions
    if exact:
        return EmpiricalGroupedMdp(mdp=gmdp, counts=None, per_pair=budget.per_pair)
    counts = np.zeros((S, G, S), dtype=np.int64)
    for s in range(S):
        for h in range(G):
            row = np.maximum(gmdp.transition[s, h], 0.0)
            row = row / row.sum()
            counts[s, h] = rng.pair_stream(s, h, G).multinomial(budget.per_pair, row)
    p_hat = counts / float(budget.per_pair)
    empirical = TabularMdp(transition=p_hat, reward=gmdp.reward, gamma=gmdp.gamma)
    return EmpiricalGroupedMdp(mdp=empirical, counts=counts, per_pair=budget.per_pair)


@dataclass(frozen=True)
class PipelineResult:
    lifted: PolicyTable
    outer: PolicyTable
    empirical: EmpiricalGroupedMdp
    values: ValueTables


def run_pipeline(
    mdp: TabularMdp,
    grouping: GroupingFunction,
    inner: InnerPolicy,
    budget: SampleBudget,
    rng: RngSpec,
    vi_iters: int | None = None,
    vi_tolerance: float | None = None,
    exact: bool = False,
) -> PipelineResult:
    """Full generative-model pipeline: group, sample, plan, lift.

    Value iteration runs for a fixed ``vi_iters`` sweep count (the planner's
    cost accounting) or, for oracle runs, to ``vi_tolerance``.
    """
    gmdp = build_grouped_mdp(mdp, grouping, inner)
    empirical = sample_generative(gmdp, budget, rng, exact=exact)
    values, outer = value_iteration(empirical.mdp, max_iters=vi_iters, tolerance=vi_tolerance)
    lifted = lift_policy(outer, inner, grouping)
    return PipelineResult(lifted=lifted, outer=outer, empirical=empirical, values=values)


def measure_loss(
    mdp: TabularMdp,
    policy: PolicyTable,
    tolerance: float = 1e-12,
    v_star: np.ndarray | None = None,
) -> float:
    """Sup-norm performance loss ||V* - V^pi||_inf, clamped at zero.

    ``v_star`` may be supplied to reuse a previously computed optimum.
    """
    if v_star is None:
        tables, _ = value_iteration(mdp, tolerance=tolerance)
        v_star = tables.v
    v_pi = evaluate_policy(mdp, policy, tolerance=tolerance).v
    return max(float(np.max(v_star - v_pi)), 0.0)


def per_state_loss(
    mdp: TabularMdp,
    policy: PolicyTable,
    tolerance: float = 1e-12,
    v_star: np.ndarray | None = None,
) -> np.ndarray:
    """Per-initial-state loss V*(s) - V^pi(s), clamped at zero elementwise."""
    if v_star is None:
        tables, _ = value_iteration(mdp, tolerance=tolerance)
        v_star = tables.v
    v_pi = evaluate_policy(mdp, policy, tolerance=tolerance).v
    return np.maximum(v_star - v_pi, 0.0)
