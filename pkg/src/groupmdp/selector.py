"""Grouping-strategy selection.

Exact selection scores every candidate grouping with its true deviation
factors and a grid-optimized (K, T); practical selection replaces the
deviation factors with estimates built from a sampled subset of actions
per group, trading exactness for a per-candidate cost independent of the
action-space size.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import bounds
from .bounds import BoundBreakdown, Prop1Inputs, prop1_gap_bound, resource_costs
from .estimation import ROW_NS, SUBSET_NS, RngSpec
from .grouping import GroupingFunction, beta_p_star, beta_r_star
from .mdp import TabularMdp


@dataclass(frozen=True)
class UtilityConfig:
    """Monotone-decreasing utility over (loss bound, sample cost, compute cost).

    The weighted-sum form is alpha1*x + alpha2*y + alpha3*z with every
    weight strictly negative; ``custom`` installs an arbitrary hook instead.
    ``lipschitz`` bounds the utility's sensitivity to the loss argument and
    feeds the practical-method gap bound.
    """

    alpha: tuple[float, float, float] = (-1.0, -1e-6, -1e-6)
    lipschitz: float | None = None
    custom: Callable[[float, float, float], float] | None = None

    def __post_init__(self):
        if self.custom is None and not all(a < 0 for a in self.alpha):
            raise ValueError("weighted-sum weights must be strictly negative")
        if self.lipschitz is not None and self.lipschitz <= 0:
            raise ValueError("lipschitz must be > 0")

    @property
    def kind(self) -> str:
        return "custom" if self.custom is not None else "weighted_sum"

    @property
    def lipschitz_value(self) -> float:
        if self.lipschitz is not None:
            return self.lipschitz
        return abs(self.alpha[0])

    def value(self, eps_perf: float, c_samp: float, c_comp: float) -> float:
        if self.custom is not None:
            return float(self.custom(eps_perf, c_samp, c_comp))
        a1, a2, a3 = self.alpha
        return a1 * eps_perf + a2 * c_samp + a3 * c_comp

    def to_dict(self) -> dict:
        return {"kind": "weighted_sum", "alpha": list(self.alpha), "lipschitz": self.lipschitz_value}

    @classmethod
    def from_dict(cls, data: dict) -> "UtilityConfig":
        try:
            kind = data.get("kind", "weighted_sum")
            if kind != "weighted_sum":
                raise ValueError(f"unsupported utility kind {kind!r} in JSON (custom hooks are code-only)")
            alpha = tuple(float(a) for a in data["alpha"])
            lipschitz = float(data["lipschitz"]) if "lipschitz" in data else None
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed utility JSON: {exc}") from exc
        if len(alpha) != 3:
            raise ValueError("utility alpha must have exactly three weights")
        return cls(alpha=alpha, lipschitz=lipschitz)


@dataclass(frozen=True)
class ResourceGrid:
    """Candidate (K, T) values for the per-grouping resource optimization."""

    k_values: tuple[int, ...]
    t_values: tuple[int, ...]

    def __post_init__(self):
        for name, vals in (("k_values", self.k_values), ("t_values", self.t_values)):
            if not vals:
                raise ValueError(f"{name} must be nonempty")
            if any(v < 1 for v in vals):
                raise ValueError(f"{name} must be positive")
            if list(vals) != sorted(vals):
                raise ValueError(f"{name} must be sorted ascending")

    @classmethod
    def build(cls, k_values: Sequence[int], t_values: Sequence[int],
              k_max: int | None = None, t_max: int | None = None) -> "ResourceGrid":
        ks = tuple(int(k) for k in k_values if k_max is None or k <= k_max)
        ts = tuple(int(t) for t in t_values if t_max is None or t <= t_max)
        if not ks or not ts:
            raise ValueError("hard caps filtered out every grid value")
        return cls(k_values=ks, t_values=ts)


def parse_feasible_set(data) -> list[GroupingFunction]:
    """Feasible-set JSON: an array of grouping-assignment arrays."""
    if not isinstance(data, list) or not data:
        raise ValueError("feasible set must be a nonempty array of assignment arrays")
    return [GroupingFunction.from_dict({"assignment": entry}) for entry in data]


@dataclass(frozen=True)
class ResourceChoice:
    k_star: int
    t_star: int
    utility: float
    breakdown: BoundBreakdown


def optimize_resources(
    n_groups: int,
    beta_p: float,
    beta_r: float,
    utility: UtilityConfig,
    grid: ResourceGrid,
    n_states: int,
    gamma: float,
    delta: float,
) -> ResourceChoice:
    """Exhaustive grid search over (K, T) for one candidate grouping.

    Ties break toward smaller K, then smaller T (strict-improvement scan in
    ascending grid order).
    """
    best: ResourceChoice | None = None
    for k in grid.k_values:
        for t in grid.t_values:
            bd = bounds.eps_perf_vi(beta_p, beta_r, n_states, n_groups, k, t, gamma, delta)
            costs = resource_costs(n_states, n_groups, k, t)
            util = utility.value(bd.eps_perf, costs.c_samp, costs.c_comp)
            if best is None or util > best.utility:
                best = ResourceChoice(k_star=k, t_star=t, utility=util, breakdown=bd)
    return best


@dataclass(frozen=True)
class CandidateEvaluation:
    index: int
    n_groups: int
    beta_p: float
    beta_r: float
    k_star: int
    t_star: int
    utility: float
    breakdown: BoundBreakdown
    wall_ms: float
    sampled_actions: tuple[tuple[int, ...], ...] | None = None

    def to_dict(self) -> dict:
        out = {
            "index": self.index,
            "n_groups": self.n_groups,
            "beta_p": self.beta_p,
            "beta_r": self.beta_r,
            "K_star": self.k_star,
            "T_star": self.t_star,
            "utility": self.utility,
            "bound": self.breakdown.to_dict(),
            "wall_ms": self.wall_ms,
        }
        if self.sampled_actions is not None:
            out["sampled_actions"] = [list(m) for m in self.sampled_actions]
        return out


@dataclass(frozen=True)
class SelectionResult:
    """Winner index plus the per-candidate audit trail; mode is exact|estimated."""

    mode: str
    best_index: int
    candidates: tuple[CandidateEvaluation, ...]
    prop1_bound: float | None = None

    @property
    def best(self) -> CandidateEvaluation:
        return self.candidates[self.best_index]

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "best_index": self.best_index,
            "candidates": [c.to_dict() for c in self.candidates],
        }
        if self.prop1_bound is not None:
            out["prop1_bound"] = self.prop1_bound
        return out


def _pick_best(candidates: Sequence[CandidateEvaluation]) -> int:
    """Highest utility; ties toward smaller |g|, then lower candidate index."""
    best = 0
    for i in range(1, len(candidates)):
        c, b = candidates[i], candidates[best]
        if (c.utility, -c.n_groups, -c.index) > (b.utility, -b.n_groups, -b.index):
            best = i
    return best


def select_grouping_exact(
    mdp: TabularMdp,
    feasible: Sequence[GroupingFunction],
    utility: UtilityConfig,
    grid: ResourceGrid,
    delta: float,
) -> SelectionResult:
    """Score every candidate with its true deviation factors and pick the argmax."""
    if not feasible:
        raise ValueError("feasible set is empty")
    evals = []
    for i, g in enumerate(feasible):
        start = time.perf_counter()
        bp = beta_p_star(mdp, g)
        br = beta_r_star(mdp, g)
        choice = optimize_resources(g.n_groups, bp, br, utility, grid, mdp.n_states, mdp.gamma, delta)
        wall_ms = (time.perf_counter() - start) * 1e3
        evals.append(
            CandidateEvaluation(
                index=i, n_groups=g.n_groups, beta_p=bp, beta_r=br,
                k_star=choice.k_star, t_star=choice.t_star,
                utility=choice.utility, breakdown=choice.breakdown, wall_ms=wall_ms,
            )
        )
    return SelectionResult(mode="exact", best_index=_pick_best(evals), candidates=tuple(evals))


@dataclass(frozen=True)
class MdpSampler:
    """Generative access to the full MDP for deviation-factor estimation.

    ``exact=True`` is the test hook that returns true rows instead of
    sampled frequencies.
    """

    mdp: TabularMdp
    exact: bool = False

    def estimate_row(self, s: int, a: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        row = self.mdp.transition[s, a]
        if self.exact:
            return row
        p = np.maximum(row, 0.0)
        p = p / p.sum()
        return rng.multinomial(n_samples, p) / float(n_samples)

    def reward(self, s: int, a: int) -> float:
        return float(self.mdp.reward[s, a])


@dataclass(frozen=True)
class DeviationEstimate:
    beta_p_hat: float
    beta_r_hat: float
    sampled_actions: tuple[tuple[int, ...], ...]
    samples_per_pair: int

    @property
    def n_sampled_actions(self) -> int:
        return sum(len(m) for m in self.sampled_actions)


def estimate_deviation_factors(
    sampler: MdpSampler,
    grouping: GroupingFunction,
    m_per_group: int,
    k1: int,
    rng: RngSpec,
) -> DeviationEstimate:
    """Deviation factors from a uniformly sampled subset of actions per group.

    Each group contributes m_per_group actions drawn without replacement on a
    dedicated substream (so the per-(s, a) row-estimation streams are shared
    across candidate groupings). The k1 budget is split equally over the
    S * |A_bar| sampled state-action pairs; rewards are read exactly.
    """
    if m_per_group < 1:
        raise ValueError("m_per_group must be >= 1")
    min_size = min(m.size for m in grouping.members)
    if m_per_group > min_size:
        raise ValueError(f"m_per_group={m_per_group} exceeds the smallest group size {min_size}")

    sampled: list[np.ndarray] = []
    for h, members in enumerate(grouping.members):
        if m_per_group == members.size:
            chosen = members
        else:
            chosen = rng.stream(SUBSET_NS, h).choice(members, size=m_per_group, replace=False)
        sampled.append(np.sort(chosen))

    S = sampler.mdp.n_states
    A = sampler.mdp.n_actions
    n_bar = sum(m.size for m in sampled)
    n_per_pair = k1 // (S * n_bar)
    if n_per_pair < 1:
        raise ValueError(f"k1={k1} gives no samples for {S * n_bar} sampled state-action pairs")

    beta_p_hat = 0.0
    beta_r_hat = 0.0
    for h, chosen in enumerate(sampled):
        rows = np.empty((S, chosen.size, S))
        rewards = np.empty((S, chosen.size))
        for j, a in enumerate(chosen):
            for s in range(S):
                rows[s, j] = sampler.estimate_row(s, a, n_per_pair, rng.stream(ROW_NS, s * A + a))
                rewards[s, j] = sampler.reward(s, a)
        beta_p_hat = max(beta_p_hat, float(np.max(1.0 - rows.min(axis=1).sum(axis=1))))
        beta_r_hat = max(beta_r_hat, float(np.max(rewards.max(axis=1) - rewards.min(axis=1))))

    return DeviationEstimate(
        beta_p_hat=beta_p_hat,
        beta_r_hat=beta_r_hat,
        sampled_actions=tuple(tuple(int(a) for a in m) for m in sampled),
        samples_per_pair=n_per_pair,
    )


def select_grouping_practical(
    sampler: MdpSampler,
    feasible: Sequence[GroupingFunction],
    utility: UtilityConfig,
    grid: ResourceGrid,
    m_per_group: int,
    k1: int,
    delta: float,
    rng: RngSpec,
    eta_p: float | None = None,
    eta_r: float | None = None,
) -> SelectionResult:
    """Sampled-action counterpart of exact selection.

    The result is flagged ``estimated``; when the within-group spread caps
    (eta_p, eta_r) are supplied, the utility-gap bound for this run's
    (L, eta, |A_bar|, K1) is attached.
    """
    if not feasible:
        raise ValueError("feasible set is empty")
    mdp = sampler.mdp
    evals = []
    n_bar_max = 0
    for i, g in enumerate(feasible):
        start = time.perf_counter()
        est = estimate_deviation_factors(sampler, g, m_per_group, k1, rng)
        n_bar_max = max(n_bar_max, est.n_sampled_actions)
        choice = optimize_resources(
            g.n_groups, est.beta_p_hat, est.beta_r_hat, utility, grid, mdp.n_states, mdp.gamma, delta
        )
        wall_ms = (time.perf_counter() - start) * 1e3
        evals.append(
            CandidateEvaluation(
                index=i, n_groups=g.n_groups, beta_p=est.beta_p_hat, beta_r=est.beta_r_hat,
                k_star=choice.k_star, t_star=choice.t_star,
                utility=choice.utility, breakdown=choice.breakdown, wall_ms=wall_ms,
                sampled_actions=est.sampled_actions,
            )
        )
    prop1 = None
    if eta_p is not None and eta_r is not None:
        prop1 = prop1_gap_bound(
            Prop1Inputs(
                lipschitz=utility.lipschitz_value,
                eta_p=eta_p,
                eta_r=eta_r,
                n_sampled_actions=n_bar_max,
                k1=k1,
                n_states=mdp.n_states,
                gamma=mdp.gamma,
                delta=delta,
            )
        )
    return SelectionResult(
        mode="estimated", best_index=_pick_best(evals), candidates=tuple(evals), prop1_bound=prop1
    )
