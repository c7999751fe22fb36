"""Tabular MDP core: validation, Bellman operator, value iteration, policy evaluation.

Everything here works on dense tables: ``transition[s, a, s']`` and
``reward[s, a]``. Grouped MDPs reuse the same type with groups playing the
role of actions.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-12


def _frozen(arr: np.ndarray, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TabularMdp:
    """Discounted MDP with dense transition/reward tables.

    transition: P[s, a, s'], each row a probability distribution.
    reward: R[s, a] in [0, 1].
    gamma: discount factor in [0, 1).
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.transition.ndim != 3 or self.transition.shape[0] != self.transition.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {self.transition.shape}")
        if self.reward.shape != self.transition.shape[:2]:
            raise ValueError(
                f"reward shape {self.reward.shape} does not match transition {self.transition.shape[:2]}"
            )

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def horizon(self) -> float:
        """Effective horizon 1/(1-gamma); also the value-scale upper bound."""
        return 1.0 / (1.0 - self.gamma)


@dataclass(frozen=True)
class PolicyTable:
    """Deterministic (per-state action index) or stochastic (per-state row) policy."""

    kind: str
    actions: np.ndarray | None = None
    probs: np.ndarray | None = None

    @classmethod
    def deterministic(cls, actions) -> "PolicyTable":
        return cls(kind="deterministic", actions=_frozen(actions, dtype=int))

    @classmethod
    def stochastic(cls, probs) -> "PolicyTable":
        return cls(kind="stochastic", probs=_frozen(probs))

    @property
    def n_states(self) -> int:
        return len(self.actions) if self.kind == "deterministic" else self.probs.shape[0]

    def matrix(self, n_actions: int | None = None) -> np.ndarray:
        """Policy as a dense (S, A) probability matrix."""
        if self.kind == "stochastic":
            return self.probs
        if n_actions is None:
            raise ValueError("n_actions is required to densify a deterministic policy")
        out = np.zeros((self.n_states, n_actions))
        out[np.arange(self.n_states), self.actions] = 1.0
        return out


@dataclass(frozen=True)
class ValueTables:
    """Q/V tables plus how they were produced (sweep count, last residual)."""

    q: np.ndarray
    v: np.ndarray
    iterations_used: int
    residual: float


def validate_mdp(mdp: TabularMdp) -> list[str]:
    """Return a list of invariant violations (empty iff the MDP is valid).

    Checks: rows sum to 1 within ROW_SUM_TOL with no negative entries,
    rewards within [0, 1], and gamma within [0, 1).
    """
    violations: list[str] = []
    if not 0.0 <= mdp.gamma < 1.0:
        violations.append(f"gamma={mdp.gamma} outside [0, 1)")
    row_sums = mdp.transition.sum(axis=2)
    bad_sum = np.argwhere(np.abs(row_sums - 1.0) > ROW_SUM_TOL)
    for s, a in bad_sum:
        violations.append(f"transition row (s={s}, a={a}) sums to {row_sums[s, a]:.15g}, not 1")
    bad_neg = np.argwhere(mdp.transition < 0.0)
    for s, a, s2 in bad_neg:
        violations.append(f"transition[{s}][{a}][{s2}] = {mdp.transition[s, a, s2]:.15g} is negative")
    bad_reward = np.argwhere((mdp.reward < 0.0) | (mdp.reward > 1.0))
    for s, a in bad_reward:
        violations.append(
            f"reward[{s}][{a}] = {mdp.reward[s, a]:.15g} outside the bounded-reward range [0, 1]"
        )
    return violations


def require_valid(mdp: TabularMdp) -> None:
    violations = validate_mdp(mdp)
    if violations:
        raise ValueError("invalid MDP: " + "; ".join(violations[:5]))


def bellman_optimal_update(mdp: TabularMdp, q: np.ndarray) -> ValueTables:
    """One application of the Bellman optimality operator to a Q table.

    new_q[s, a] = R[s, a] + gamma * sum_s' P[s, a, s'] * max_a' q[s', a'].
    The residual is the sup-norm of the change.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"q shape {q.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})")
    v = q.max(axis=1)
    new_q = mdp.reward + mdp.gamma * np.einsum("saj,j->sa", mdp.transition, v)
    residual = float(np.max(np.abs(new_q - q)))
    return ValueTables(q=new_q, v=new_q.max(axis=1), iterations_used=1, residual=residual)


def greedy_policy(q: np.ndarray) -> PolicyTable:
    """Greedy deterministic policy; argmax ties broken toward the lowest action index."""
    return PolicyTable.deterministic(np.argmax(q, axis=1))


def value_iteration(
    mdp: TabularMdp,
    max_iters: int | None = None,
    tolerance: float | None = None,
) -> tuple[ValueTables, PolicyTable]:
    """Value iteration from the all-zeros Q table.

    Exactly one stopping rule must be given: a fixed sweep count ``max_iters``
    (matching the planner's cost accounting) or a sup-norm ``tolerance`` on
    the update residual. Guarantees ||Q^T - Q*||_inf <= gamma^T / (1-gamma)
    after T sweeps from zero init.
    """
    if (max_iters is None) == (tolerance is None):
        raise ValueError("provide exactly one of max_iters or tolerance")
    if max_iters is not None and max_iters < 0:
        raise ValueError("max_iters must be >= 0")
    if tolerance is not None and tolerance <= 0:
        raise ValueError("tolerance must be > 0")

    q = np.zeros((mdp.n_states, mdp.n_actions))
    residual = math.inf
    sweeps = 0
    while True:
        if max_iters is not None and sweeps >= max_iters:
            break
        if tolerance is not None and residual < tolerance:
            break
        updated = bellman_optimal_update(mdp, q)
        q = updated.q
        residual = updated.residual
        sweeps += 1
    tables = ValueTables(q=q, v=q.max(axis=1), iterations_used=sweeps, residual=residual)
    return tables, greedy_policy(q)


def evaluate_policy(mdp: TabularMdp, policy: PolicyTable, tolerance: float = 1e-12) -> ValueTables:
    """Iterative policy evaluation to the given sup-norm residual tolerance.

    Returns Q^pi and V^pi with V^pi(s) = sum_a pi(a|s) Q^pi(s, a).
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    pi = policy.matrix(mdp.n_actions)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {pi.shape} does not match MDP")
    q = np.zeros((mdp.n_states, mdp.n_actions))
    sweeps = 0
    while True:
        v = np.sum(pi * q, axis=1)
        new_q = mdp.reward + mdp.gamma * np.einsum("saj,j->sa", mdp.transition, v)
        residual = float(np.max(np.abs(new_q - q)))
        q = new_q
        sweeps += 1
        if residual < tolerance:
            break
    return ValueTables(q=q, v=np.sum(pi * q, axis=1), iterations_used=sweeps, residual=residual)


def optimal_values(mdp: TabularMdp, tolerance: float = 1e-12) -> np.ndarray:
    """V* via tolerance-based value iteration."""
    tables, _ = value_iteration(mdp, tolerance=tolerance)
    return tables.v


# ---------------------------------------------------------------------------
# JSON wire format: {"n_states", "n_actions", "gamma", "transition", "reward"}
# ---------------------------------------------------------------------------

def mdp_to_dict(mdp: TabularMdp) -> dict:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "transition": mdp.transition.tolist(),
        "reward": mdp.reward.tolist(),
    }


def mdp_from_dict(data: dict) -> TabularMdp:
    try:
        n_states = int(data["n_states"])
        n_actions = int(data["n_actions"])
        transition = np.asarray(data["transition"], dtype=float)
        reward = np.asarray(data["reward"], dtype=float)
        gamma = float(data["gamma"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed MDP JSON: {exc}") from exc
    if transition.shape != (n_states, n_actions, n_states):
        raise ValueError(
            f"transition shape {transition.shape} inconsistent with n_states={n_states}, n_actions={n_actions}"
        )
    if reward.shape != (n_states, n_actions):
        raise ValueError(f"reward shape {reward.shape} inconsistent with declared dimensions")
    return TabularMdp(transition=transition, reward=reward, gamma=gamma)


def save_mdp(mdp: TabularMdp, path) -> None:
    with open(path, "w") as fh:
        json.dump(mdp_to_dict(mdp), fh, indent=2, sort_keys=True)


def load_mdp(path) -> TabularMdp:
    with open(path) as fh:
        return mdp_from_dict(json.load(fh))
