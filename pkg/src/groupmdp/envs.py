"""Concrete environment constructors plus a seeded random-MDP generator.

Three families: the 2-state/2-action bound-tightness example with its
closed-form values, a downlink scheduling queue whose users fall into
similarity groups, and a wireless-access system with a collision-based
two-group structure. ``random_mdp`` builds seeded fixtures, optionally
with duplicated-group structure whose within-group spreads are capped by
construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .grouping import GroupingFunction, InnerPolicy
from .mdp import TabularMdp


# ---------------------------------------------------------------------------
# Tightness example
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TightnessConfig:
    beta_p: float
    beta_r: float
    gamma: float

    def __post_init__(self):
        if not (0.0 <= self.beta_p <= 1.0 and 0.0 <= self.beta_r <= 1.0):
            raise ValueError("beta_p and beta_r must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")


@dataclass(frozen=True)
class TightnessValues:
    """Closed-form values for the tightness MDP.

    v_star / v_group are the optimal and group-wise-optimal state values;
    approx_gap is their common per-state difference, and identity_gap the
    exact discrepancy between half the approximation-error bound and the
    realized gap.
    """

    v_star: np.ndarray
    v_group: np.ndarray
    approx_gap: float
    identity_gap: float


def tightness_closed_forms(cfg: TightnessConfig) -> TightnessValues:
    bp, br, gamma = cfg.beta_p, cfg.beta_r, cfg.gamma
    d = 1.0 - (1.0 - bp) * gamma
    v_star = np.array([
        br / d + gamma * bp / (d * (1.0 - gamma)),
        1.0 / (1.0 - gamma),
    ])
    v_group = np.array([0.0, (1.0 - br) / d])
    approx_gap = br / d + gamma * bp / (d * (1.0 - gamma))
    identity_gap = (
        bp * br * gamma / ((1.0 - gamma) * d)
        + (bp * gamma) ** 2 / ((1.0 - gamma) ** 2 * d)
    )
    return TightnessValues(v_star=v_star, v_group=v_group, approx_gap=approx_gap,
                           identity_gap=identity_gap)


def build_tightness_mdp(
    cfg: TightnessConfig,
) -> tuple[TabularMdp, GroupingFunction, InnerPolicy, TightnessValues]:
    """The 2-state, 2-action example showing the approximation bound is 2-tight.

    Both actions share one group; the inner policy always picks action 0,
    which is optimal at neither state once beta_p/beta_r are positive.
    """
    bp, br = cfg.beta_p, cfg.beta_r
    transition = np.array([
        [[1.0, 0.0], [1.0 - bp, bp]],   # state 0: a0 stays, a1 leaks toward s1
        [[bp, 1.0 - bp], [0.0, 1.0]],   # state 1: a0 leaks toward s0, a1 stays
    ])
    reward = np.array([
        [0.0, br],
        [1.0 - br, 1.0],
    ])
    mdp = TabularMdp(transition=transition, reward=reward, gamma=cfg.gamma)
    grouping = GroupingFunction.single_group(2)
    inner = InnerPolicy.point_mass(grouping, [0])
    return mdp, grouping, inner, tightness_closed_forms(cfg)


# ---------------------------------------------------------------------------
# Downlink transmission queue
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DownlinkConfig:
    """Base-station packet queue served by one of A users per step.

    Users are split into G similarity groups (A // G per group, remainder
    folded into the last). Group h (1-indexed) has base service rate
    (2h-1)/G and base reward 1-(2h-1)/G; per-user normal perturbations are
    mixed in with weights beta_tilde_p / beta_tilde_r, rates and rewards
    clipped to [0, 1]. The queue penalty is (s-1)/S.
    """

    n_states: int
    n_users: int
    n_groups: int
    arrival: float
    beta_tilde_p: float
    beta_tilde_r: float
    gamma: float
    seed: int = 0

    def __post_init__(self):
        if self.n_states < 2:
            raise ValueError("need at least two queue states")
        if not 1 <= self.n_groups <= self.n_users:
            raise ValueError("need 1 <= n_groups <= n_users")
        if not 0.0 <= self.arrival <= 1.0:
            raise ValueError("arrival rate must lie in [0, 1]")
        if not (0.0 <= self.beta_tilde_p <= 1.0 and 0.0 <= self.beta_tilde_r <= 1.0):
            raise ValueError("beta_tilde scales must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")


def birth_death_row(n_states: int, s: int, arrival: float, service: float) -> np.ndarray:
    """Single-server discrete-time queue step with reflecting boundaries.

    up = arrival*(1-service), down = service*(1-arrival), remainder stays;
    boundary mass folds back onto the current state.
    """
    up = arrival * (1.0 - service)
    down = service * (1.0 - arrival)
    row = np.zeros(n_states)
    if s + 1 < n_states:
        row[s + 1] = up
    else:
        row[s] += up
    if s - 1 >= 0:
        row[s - 1] = down
    else:
        row[s] += down
    row[s] += 1.0 - up - down
    return row


def build_downlink(
    cfg: DownlinkConfig,
) -> tuple[TabularMdp, GroupingFunction, list[GroupingFunction]]:
    """Downlink queue MDP, its natural grouping, and a feasible coarsening set.

    The feasible set contains every divisor-of-G adjacent-merge coarsening of
    the natural grouping plus the singleton (non-grouping) candidate.
    """
    S, A, G = cfg.n_states, cfg.n_users, cfg.n_groups
    grouping = GroupingFunction.contiguous_blocks(A, G)
    rng = np.random.default_rng(cfg.seed)
    w_p = rng.standard_normal(A)
    w_r = rng.standard_normal(A)

    groups_1idx = grouping.assignment + 1
    mu1 = (2.0 * groups_1idx - 1.0) / G
    r1 = 1.0 - (2.0 * groups_1idx - 1.0) / G
    mu = np.clip((1.0 - cfg.beta_tilde_p) * mu1 + cfg.beta_tilde_p * w_p, 0.0, 1.0)
    base_reward = np.clip((1.0 - cfg.beta_tilde_r) * r1 + cfg.beta_tilde_r * w_r, 0.0, 1.0)

    penalty = (np.arange(S) - 1.0) / S
    reward = np.clip(base_reward[None, :] - penalty[:, None], 0.0, 1.0)

    transition = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            transition[s, a] = birth_death_row(S, s, cfg.arrival, mu[a])

    mdp = TabularMdp(transition=transition, reward=reward, gamma=cfg.gamma)

    feasible = [grouping.merge_adjacent(c) for c in sorted(d for d in range(1, G + 1) if G % d == 0)]
    feasible.append(GroupingFunction.singletons(A))
    return mdp, grouping, feasible


# ---------------------------------------------------------------------------
# Wireless access
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WirelessAccessConfig:
    """N users with finite buffers contend for one access point.

    The joint action is the transmission indicator vector; exactly one
    transmitter succeeds with probability alpha_good (serving that user's
    queue), otherwise the step degrades to arrivals only. Two or more
    transmitters collide and the step is arrivals only, identically for
    every colliding action. Reward max(w1.a - w2.q, 0) is paid to
    single-transmitter actions; everything else earns 0.
    """

    n_users: int
    buffer: int
    arrival: float
    alpha_good: float = 0.9
    w1: tuple[float, ...] | None = None
    w2: tuple[float, ...] | None = None
    gamma: float = 0.9

    MAX_USERS = 4
    MAX_BUFFER = 3

    def __post_init__(self):
        if not 1 <= self.n_users <= self.MAX_USERS:
            raise ValueError(f"n_users must be in [1, {self.MAX_USERS}] (joint space cap)")
        if not 1 <= self.buffer <= self.MAX_BUFFER:
            raise ValueError(f"buffer must be in [1, {self.MAX_BUFFER}] (joint space cap)")
        if not 0.0 <= self.arrival <= 1.0:
            raise ValueError("arrival rate must lie in [0, 1]")
        if not 0.0 <= self.alpha_good <= 1.0:
            raise ValueError("alpha_good must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        w1 = np.full(self.n_users, 1.0 / self.n_users) if self.w1 is None else np.asarray(self.w1, float)
        w2 = (
            np.full(self.n_users, 1.0 / (self.n_users * self.buffer))
            if self.w2 is None
            else np.asarray(self.w2, float)
        )
        if w1.shape != (self.n_users,) or w2.shape != (self.n_users,):
            raise ValueError("w1 and w2 must have one weight per user")
        return w1, w2


def build_wireless_access(cfg: WirelessAccessConfig) -> tuple[TabularMdp, GroupingFunction]:
    """Joint-queue wireless access MDP with the collision two-group structure.

    Grouping: single-transmitter actions form group 0, all others
    (idle or colliding) form group 1.
    """
    N, B = cfg.n_users, cfg.buffer
    levels = B + 1
    states = list(product(range(levels), repeat=N))  # q[0] varies slowest
    index = {q: i for i, q in enumerate(states)}
    S = len(states)
    actions = list(product((0, 1), repeat=N))
    A = len(actions)
    w1, w2 = cfg.weights()

    def arrival_row(q: tuple[int, ...]) -> np.ndarray:
        """Independent per-user arrivals with probability cfg.arrival; full buffers drop."""
        row = np.zeros(S)
        movable = [n for n in range(N) if q[n] < B]
        for arrivals in product((0, 1), repeat=len(movable)):
            prob = 1.0
            nxt = list(q)
            for bit, n in zip(arrivals, movable):
                prob *= cfg.arrival if bit else (1.0 - cfg.arrival)
                nxt[n] += bit
            row[index[tuple(nxt)]] += prob
        return row

    arrival_rows = np.array([arrival_row(q) for q in states])

    transition = np.zeros((S, A, S))
    reward = np.zeros((S, A))
    assignment = np.empty(A, dtype=int)
    for ai, act in enumerate(actions):
        transmitters = [n for n in range(N) if act[n]]
        assignment[ai] = 0 if len(transmitters) == 1 else 1
        for si, q in enumerate(states):
            if len(transmitters) == 1:
                n = transmitters[0]
                if q[n] >= 1:
                    served = list(q)
                    served[n] -= 1
                    transition[si, ai] = (
                        cfg.alpha_good * arrival_rows[index[tuple(served)]]
                        + (1.0 - cfg.alpha_good) * arrival_rows[si]
                    )
                else:
                    transition[si, ai] = arrival_rows[si]
                reward[si, ai] = max(float(w1 @ np.array(act) - w2 @ np.array(q)), 0.0)
            else:
                # Idle or collision: the transmission fails, arrivals only.
                transition[si, ai] = arrival_rows[si]

    mdp = TabularMdp(transition=transition, reward=reward, gamma=cfg.gamma)
    return mdp, GroupingFunction(assignment)


# ---------------------------------------------------------------------------
# Random fixtures
# ---------------------------------------------------------------------------

def random_mdp(
    n_states: int,
    n_actions: int,
    gamma: float,
    seed: int,
) -> TabularMdp:
    """Seeded dense MDP with normalized-positive random rows and random rewards."""
    rng = np.random.default_rng(seed)
    transition = rng.random((n_states, n_actions, n_states)) + 1e-9
    transition /= transition.sum(axis=2, keepdims=True)
    reward = rng.random((n_states, n_actions))
    return TabularMdp(transition=transition, reward=reward, gamma=gamma)


def random_grouped_mdp(
    n_states: int,
    n_actions: int,
    n_groups: int,
    gamma: float,
    seed: int,
    eta_p: float = 0.0,
    eta_r: float = 0.0,
) -> tuple[TabularMdp, GroupingFunction]:
    """Random MDP with duplicated-group structure and capped within-group spreads.

    Each action's row is a mixture (1-t) * base + t * noise with t <= eta_p/2,
    so any two same-group rows differ by at most eta_p in sup norm; same-group
    rewards stay within a range of eta_r. With eta_p = eta_r = 0 the groups are
    exact duplicates.
    """
    rng = np.random.default_rng(seed)
    grouping = GroupingFunction.contiguous_blocks(n_actions, n_groups)

    base_p = rng.random((n_states, n_groups, n_states)) + 1e-9
    base_p /= base_p.sum(axis=2, keepdims=True)
    base_r = rng.uniform(eta_r / 2.0, 1.0 - eta_r / 2.0, size=(n_states, n_groups))

    transition = np.empty((n_states, n_actions, n_states))
    reward = np.empty((n_states, n_actions))
    for a in range(n_actions):
        h = int(grouping.assignment[a])
        if eta_p > 0.0:
            noise = rng.random((n_states, n_states)) + 1e-9
            noise /= noise.sum(axis=1, keepdims=True)
            t = rng.uniform(0.0, eta_p / 2.0, size=(n_states, 1))
            transition[:, a, :] = (1.0 - t) * base_p[:, h, :] + t * noise
        else:
            transition[:, a, :] = base_p[:, h, :]
        if eta_r > 0.0:
            reward[:, a] = np.clip(
                base_r[:, h] + rng.uniform(-eta_r / 2.0, eta_r / 2.0, size=n_states), 0.0, 1.0
            )
        else:
            reward[:, a] = base_r[:, h]
    return TabularMdp(transition=transition, reward=reward, gamma=gamma), grouping


def random_grouping(n_actions: int, n_groups: int, seed: int) -> GroupingFunction:
    """Random surjective grouping: one anchor action per group, the rest uniform."""
    rng = np.random.default_rng(seed)
    assignment = rng.integers(0, n_groups, size=n_actions)
    anchors = rng.permutation(n_actions)[:n_groups]
    assignment[anchors] = np.arange(n_groups)
    return GroupingFunction(assignment)
