"""Action grouping: grouped MDPs, lifted policies, deviation factors, witnesses.

A grouping maps every action to a group. The grouped MDP averages each
group's transition rows and rewards under a lower-level (inner) policy.
The deviation factors ``beta_p_star`` / ``beta_r_star`` are the minimal
mixture weights splitting each action's row/reward into a group-common
part and an individual part; ``decomposition_witness`` constructs an
explicit optimal split.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import PolicyTable, TabularMdp, _frozen

_EPS = 1e-15


class GroupingFunction:
    """Surjective action -> group map with a per-group member index.

    Groups must be labelled 0..n_groups-1 with no gaps and every group
    nonempty.
    """

    def __init__(self, assignment):
        assignment = np.asarray(assignment, dtype=int)
        if assignment.ndim != 1 or assignment.size == 0:
            raise ValueError("assignment must be a nonempty 1-D array of group indices")
        if assignment.min() < 0:
            raise ValueError("group indices must be nonnegative")
        n_groups = int(assignment.max()) + 1
        members = tuple(np.flatnonzero(assignment == h) for h in range(n_groups))
        for h, m in enumerate(members):
            if m.size == 0:
                raise ValueError(f"group {h} is empty; groups must be 0..n_groups-1 with no gaps")
        self.assignment = _frozen(assignment, dtype=int)
        self.n_groups = n_groups
        self.members = members

    @property
    def n_actions(self) -> int:
        return self.assignment.size

    @classmethod
    def singletons(cls, n_actions: int) -> "GroupingFunction":
        """Each action its own group (the non-grouping baseline)."""
        return cls(np.arange(n_actions))

    @classmethod
    def single_group(cls, n_actions: int) -> "GroupingFunction":
        return cls(np.zeros(n_actions, dtype=int))

    @classmethod
    def contiguous_blocks(cls, n_actions: int, n_groups: int) -> "GroupingFunction":
        """n_actions // n_groups actions per group, remainder folded into the last."""
        if not 1 <= n_groups <= n_actions:
            raise ValueError("need 1 <= n_groups <= n_actions")
        per = n_actions // n_groups
        assignment = np.minimum(np.arange(n_actions) // per, n_groups - 1)
        return cls(assignment)

    def merge_adjacent(self, n_super: int) -> "GroupingFunction":
        """Coarsen by merging adjacent groups into n_super blocks (a true coarsening)."""
        block = GroupingFunction.contiguous_blocks(self.n_groups, n_super)
        return GroupingFunction(block.assignment[self.assignment])

    def split_each(self, factor: int) -> "GroupingFunction":
        """Refine by splitting every group's member list into ``factor`` chunks."""
        if factor < 1:
            raise ValueError("factor must be >= 1")
        if any(m.size < factor for m in self.members):
            raise ValueError(f"cannot split groups smaller than factor={factor}")
        assignment = np.empty(self.n_actions, dtype=int)
        nxt = 0
        for members in self.members:
            for chunk in np.array_split(members, factor):
                assignment[chunk] = nxt
                nxt += 1
        return GroupingFunction(assignment)

    def to_dict(self) -> dict:
        return {"assignment": self.assignment.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "GroupingFunction":
        try:
            assignment = data["assignment"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed grouping JSON: {exc}") from exc
        return cls(assignment)


class InnerPolicy:
    """Lower-level policy: a probability row over each group's member actions.

    Stored as a dense (n_groups, n_actions) weight matrix whose support is
    contained in the group's members.
    """

    def __init__(self, grouping: GroupingFunction, weights):
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (grouping.n_groups, grouping.n_actions):
            raise ValueError(
                f"weights shape {weights.shape} does not match "
                f"({grouping.n_groups}, {grouping.n_actions})"
            )
        if np.any(weights < 0):
            raise ValueError("inner-policy weights must be nonnegative")
        for h, m in enumerate(grouping.members):
            off = np.delete(weights[h], m)
            if off.size and np.max(off) > 0:
                raise ValueError(f"group {h} puts probability outside its member actions")
            total = weights[h, m].sum()
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"group {h} weights sum to {total:.15g}, not 1")
        self.weights = _frozen(weights)

    @classmethod
    def uniform(cls, grouping: GroupingFunction) -> "InnerPolicy":
        """Uniform over each group's members (the default lower-level policy)."""
        weights = np.zeros((grouping.n_groups, grouping.n_actions))
        for h, m in enumerate(grouping.members):
            weights[h, m] = 1.0 / m.size
        return cls(grouping, weights)

    @classmethod
    def point_mass(cls, grouping: GroupingFunction, choices) -> "InnerPolicy":
        """Deterministic pick per group; choices[h] must belong to group h."""
        choices = np.asarray(choices, dtype=int)
        weights = np.zeros((grouping.n_groups, grouping.n_actions))
        for h, a in enumerate(choices):
            if int(grouping.assignment[a]) != h:
                raise ValueError(f"action {a} is not a member of group {h}")
            weights[h, a] = 1.0
        return cls(grouping, weights)


@dataclass(frozen=True)
class DeviationFactors:
    beta_p_star: float
    beta_r_star: float


@dataclass(frozen=True)
class DecompositionWitness:
    """A feasible optimal split (beta, P1, P2, R1, R2) certifying the deviation factors.

    Per action, ``transition[s, a] == (1 - beta_p_pairs[s, a]) * p1[s, g(a)]
    + beta_p_pairs[s, a] * p2[s, a]`` and analogously for rewards. Per-pair
    betas never exceed the group-level optima stored in beta_p / beta_r.
    """

    beta_p: float
    beta_r: float
    p1: np.ndarray  # (S, G, S')
    p2: np.ndarray  # (S, A, S')
    r1: np.ndarray  # (S, G)
    r2: np.ndarray  # (S, A)
    beta_p_pairs: np.ndarray  # (S, A)
    beta_r_pairs: np.ndarray  # (S, A)

    def max_residuals(self, mdp: TabularMdp, grouping: GroupingFunction) -> tuple[float, float]:
        """Sup-norm reconstruction errors of the transition and reward splits."""
        g = grouping.assignment
        bp = self.beta_p_pairs[:, :, None]
        recon_p = (1.0 - bp) * self.p1[:, g, :] + bp * self.p2
        br = self.beta_r_pairs
        recon_r = (1.0 - br) * self.r1[:, g] + br * self.r2
        return (
            float(np.max(np.abs(recon_p - mdp.transition))),
            float(np.max(np.abs(recon_r - mdp.reward))),
        )


def _check_dims(mdp: TabularMdp, grouping: GroupingFunction) -> None:
    if grouping.n_actions != mdp.n_actions:
        raise ValueError(
            f"grouping covers {grouping.n_actions} actions but the MDP has {mdp.n_actions}"
        )


def build_grouped_mdp(mdp: TabularMdp, grouping: GroupingFunction, inner: InnerPolicy) -> TabularMdp:
    """Grouped MDP over (state, group): inner-policy expectations of P and R."""
    _check_dims(mdp, grouping)
    if inner.weights.shape != (grouping.n_groups, mdp.n_actions):
        raise ValueError("inner policy does not match the grouping/MDP dimensions")
    p_g = np.einsum("ha,saj->shj", inner.weights, mdp.transition)
    r_g = np.einsum("ha,sa->sh", inner.weights, mdp.reward)
    return TabularMdp(transition=p_g, reward=r_g, gamma=mdp.gamma)


def lift_policy(outer: PolicyTable, inner: InnerPolicy, grouping: GroupingFunction) -> PolicyTable:
    """Compose an outer (group-level) policy with the inner policy:
    lifted(a|s) = outer(g(a)|s) * inner(a|g(a))."""
    outer_matrix = outer.matrix(grouping.n_groups)
    lifted = outer_matrix @ inner.weights
    return PolicyTable.stochastic(lifted)


def beta_p_star_table(mdp: TabularMdp, grouping: GroupingFunction) -> np.ndarray:
    """Per-(state, group) minimal transition deviation:
    beta_P*(s, h) = 1 - sum_s' min_{a in group h} P(s'|s, a)."""
    _check_dims(mdp, grouping)
    out = np.empty((mdp.n_states, grouping.n_groups))
    for h, m in enumerate(grouping.members):
        out[:, h] = 1.0 - mdp.transition[:, m, :].min(axis=1).sum(axis=1)
    return out


def beta_p_star(mdp: TabularMdp, grouping: GroupingFunction) -> float:
    return float(beta_p_star_table(mdp, grouping).max())


def beta_r_star_table(mdp: TabularMdp, grouping: GroupingFunction) -> np.ndarray:
    """Per-(state, group) within-group reward range max R - min R."""
    _check_dims(mdp, grouping)
    out = np.empty((mdp.n_states, grouping.n_groups))
    for h, m in enumerate(grouping.members):
        rows = mdp.reward[:, m]
        out[:, h] = rows.max(axis=1) - rows.min(axis=1)
    return out


def beta_r_star(mdp: TabularMdp, grouping: GroupingFunction) -> float:
    return float(beta_r_star_table(mdp, grouping).max())


def deviation_factors(mdp: TabularMdp, grouping: GroupingFunction) -> DeviationFactors:
    return DeviationFactors(
        beta_p_star=beta_p_star(mdp, grouping),
        beta_r_star=beta_r_star(mdp, grouping),
    )


def decomposition_feasible_at(mdp: TabularMdp, grouping: GroupingFunction, beta: float) -> bool:
    """Feasibility certificate for a transition split at mixture level ``beta``.

    Any valid split at level beta forces (1-beta) * P1(s'|s,h) <= min_a P(s'|s,a)
    for every s'; summing over s' yields 1 - beta <= sum_s' min_a P, so a split
    exists iff beta >= beta_P*(s, h) for every (s, h) (and beta is a probability).
    """
    if beta < 0.0 or beta > 1.0:
        return False
    return bool(beta >= beta_p_star_table(mdp, grouping).max())


def decomposition_witness(mdp: TabularMdp, grouping: GroupingFunction) -> DecompositionWitness:
    """Constructive optimal split achieving beta_p_star / beta_r_star.

    Transitions: P1(.|s,h) is the component-wise group minimum renormalized by
    1 - beta_P*(s,h); each action then takes the smallest per-pair beta that
    keeps its residual P2 a distribution. Rewards: R1(s,h) is the group minimum
    renormalized by 1 - beta_R*(s,h); R2 sits at 0/1 extremes so the per-pair
    beta is minimal. Degenerate groups (beta = 0 or 1) fall back to the copies
    described below.
    """
    _check_dims(mdp, grouping)
    S, A = mdp.n_states, mdp.n_actions
    G = grouping.n_groups
    p1 = np.zeros((S, G, S))
    p2 = np.array(mdp.transition)  # default when the split is vacuous
    r1 = np.zeros((S, G))
    r2 = np.array(mdp.reward)
    bp_pairs = np.zeros((S, A))
    br_pairs = np.zeros((S, A))

    bp_table = beta_p_star_table(mdp, grouping)
    br_table = beta_r_star_table(mdp, grouping)

    for h, m in enumerate(grouping.members):
        rows = mdp.transition[:, m, :]  # (S, |m|, S')
        min_rows = rows.min(axis=1)  # (S, S')
        for s in range(S):
            beta_sh = bp_table[s, h]
            if beta_sh <= _EPS:
                # All member rows identical: the shared row is the common part,
                # per-pair beta 0 and P2 = P (vacuous).
                p1[s, h] = min_rows[s]
                continue
            if beta_sh >= 1.0 - _EPS:
                # Disjoint supports: the constraint is vacuous at beta = 1,
                # keep P1 a valid distribution by taking the uniform one.
                common = np.full(S, 1.0 / S)
            else:
                common = min_rows[s] / (1.0 - beta_sh)
            p1[s, h] = common
            support = common > 0.0
            for a in m:
                row = mdp.transition[s, a]
                ratio = np.min(row[support] / common[support])
                beta_sa = min(max(1.0 - ratio, 0.0), beta_sh)
                bp_pairs[s, a] = beta_sa
                if beta_sa > _EPS:
                    resid = (row - (1.0 - beta_sa) * common) / beta_sa
                    p2[s, a] = np.maximum(resid, 0.0)
                # else keep the default P2 = P.

        # Reward split per (s, h): group minimum renormalized, extremes at 0/1.
        r_rows = mdp.reward[:, m]
        r_min = r_rows.min(axis=1)
        for s in range(S):
            beta_sh = br_table[s, h]
            if beta_sh <= _EPS:
                r1[s, h] = r_min[s]
                r2[s, m] = r_min[s]
                continue
            common = r_min[s] if beta_sh >= 1.0 - _EPS else r_min[s] / (1.0 - beta_sh)
            r1[s, h] = common
            for a in m:
                r = mdp.reward[s, a]
                if abs(r - common) <= _EPS:
                    br_pairs[s, a] = 0.0
                    r2[s, a] = common
                elif r > common:
                    br_pairs[s, a] = min(max((r - common) / (1.0 - common), 0.0), beta_sh)
                    r2[s, a] = 1.0
                else:
                    br_pairs[s, a] = min(max((common - r) / common, 0.0), beta_sh)
                    r2[s, a] = 0.0

    return DecompositionWitness(
        beta_p=float(bp_table.max()),
        beta_r=float(br_table.max()),
        p1=p1,
        p2=p2,
        r1=r1,
        r2=r2,
        beta_p_pairs=bp_pairs,
        beta_r_pairs=br_pairs,
    )
