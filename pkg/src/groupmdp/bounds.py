"""Closed-form performance-loss bounds and resource-cost formulas.

The headline bound splits the loss of the grouped pipeline into an
approximation term driven by the deviation factors, a sampling term driven
by the generative budget, and a planning term driven by the iteration
count. All functions are pure double-precision arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

SAMPLE_SIZE_CONSTANT = 648.0


def gamma_power(gamma: float, t: float) -> float:
    """gamma**t computed in log space so huge t underflows cleanly to 0."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    if gamma == 0.0:
        return 1.0 if t == 0 else 0.0
    return math.exp(t * math.log(gamma))


def eps_approx(beta_p_star: float, beta_r_star: float, gamma: float) -> float:
    """Approximation error 2 * (beta_R*/(1-gamma) + gamma*beta_P*/(1-gamma)^2)."""
    if gamma >= 1.0 or gamma < 0.0:
        raise ValueError("gamma must be in [0, 1)")
    return 2.0 * (beta_r_star / (1.0 - gamma) + gamma * beta_p_star / (1.0 - gamma) ** 2)


def eps_samp(n_states: int, n_groups: int, total_samples: int, gamma: float, delta: float) -> float:
    """Sampling error 20*gamma*sqrt(S|g| log(8S|g|/(delta(1-gamma))) / (K (1-gamma)^3))."""
    _check_delta_gamma(gamma, delta)
    sg = n_states * n_groups
    log_term = math.log(8.0 * sg / (delta * (1.0 - gamma)))
    return 20.0 * gamma * math.sqrt(sg * log_term / (total_samples * (1.0 - gamma) ** 3))


def eps_opt_vi(vi_iters: int, gamma: float) -> float:
    """Value-iteration planning gap 2*gamma^T/(1-gamma)^2 after T sweeps."""
    return 2.0 * gamma_power(gamma, vi_iters) / (1.0 - gamma) ** 2


def sample_size_threshold(n_states: int, n_groups: int, gamma: float, delta: float) -> float:
    """Minimum total K for the sampling-error guarantee to hold at confidence delta."""
    _check_delta_gamma(gamma, delta)
    sg = n_states * n_groups
    log_term = math.log(8.0 * sg / (delta * (1.0 - gamma)))
    return SAMPLE_SIZE_CONSTANT * sg * log_term / (1.0 - gamma) ** 2


def _check_delta_gamma(gamma: float, delta: float) -> None:
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")


@dataclass(frozen=True)
class BoundBreakdown:
    """Full loss-bound decomposition plus the inputs it was evaluated at.

    Identity: eps_perf = eps_approx + eps_samp + 4 * eps_opt / (1 - gamma).
    ``sample_size_ok`` flags whether K clears the guarantee threshold; small-K
    regimes are reported, not rejected.
    """

    eps_approx: float
    eps_samp: float
    eps_alg: float
    eps_opt: float
    eps_perf: float
    beta_p_star: float
    beta_r_star: float
    n_states: int
    n_groups: int
    total_samples: int
    vi_iters: int
    gamma: float
    delta: float
    sample_size_ok: bool

    def to_dict(self) -> dict:
        return {
            "eps_approx": self.eps_approx,
            "eps_samp": self.eps_samp,
            "eps_alg": self.eps_alg,
            "eps_opt": self.eps_opt,
            "eps_perf": self.eps_perf,
            "beta_p_star": self.beta_p_star,
            "beta_r_star": self.beta_r_star,
            "n_states": self.n_states,
            "n_groups": self.n_groups,
            "K": self.total_samples,
            "T": self.vi_iters,
            "gamma": self.gamma,
            "delta": self.delta,
            "sample_size_ok": self.sample_size_ok,
        }


def eps_perf_vi(
    beta_p_star: float,
    beta_r_star: float,
    n_states: int,
    n_groups: int,
    total_samples: int,
    vi_iters: int,
    gamma: float,
    delta: float,
    eps_opt_override: float | None = None,
) -> BoundBreakdown:
    """Loss bound for the value-iteration pipeline at (K, T, gamma, delta).

    eps_opt defaults to the value-iteration planning gap 2*gamma^T/(1-gamma)^2
    (so eps_alg = 8*gamma^T/(1-gamma)^3); a user-supplied override covers
    other planners.
    """
    if total_samples < 1 or vi_iters < 0:
        raise ValueError("need total_samples >= 1 and vi_iters >= 0")
    _check_delta_gamma(gamma, delta)
    approx = eps_approx(beta_p_star, beta_r_star, gamma)
    samp = eps_samp(n_states, n_groups, total_samples, gamma, delta)
    opt = eps_opt_vi(vi_iters, gamma) if eps_opt_override is None else float(eps_opt_override)
    alg = 4.0 * opt / (1.0 - gamma)
    return BoundBreakdown(
        eps_approx=approx,
        eps_samp=samp,
        eps_alg=alg,
        eps_opt=opt,
        eps_perf=approx + samp + alg,
        beta_p_star=beta_p_star,
        beta_r_star=beta_r_star,
        n_states=n_states,
        n_groups=n_groups,
        total_samples=total_samples,
        vi_iters=vi_iters,
        gamma=gamma,
        delta=delta,
        sample_size_ok=bool(total_samples >= sample_size_threshold(n_states, n_groups, gamma, delta)),
    )


@dataclass(frozen=True)
class ResourceCosts:
    """Sample cost K and compute cost (S^2|g| + 2S|g|) * T."""

    c_samp: int
    c_comp: int


def resource_costs(n_states: int, n_groups: int, total_samples: int, vi_iters: int) -> ResourceCosts:
    if min(n_states, n_groups, total_samples, vi_iters) < 1:
        raise ValueError("all resource-cost inputs must be positive integers")
    comp = (n_states**2 * n_groups + 2 * n_states * n_groups) * vi_iters
    return ResourceCosts(c_samp=int(total_samples), c_comp=int(comp))


@dataclass(frozen=True)
class Prop1Inputs:
    """Inputs to the practical-selection gap bound.

    eta_p / eta_r cap the within-group transition-row and reward spreads;
    n_sampled_actions is the size of the sampled action subset and k1 the
    total sample budget spent estimating the deviation factors.
    """

    lipschitz: float
    eta_p: float
    eta_r: float
    n_sampled_actions: int
    k1: int
    n_states: int
    gamma: float
    delta: float


def prop1_gap_bound(inputs: Prop1Inputs) -> float:
    """Utility gap between exact and sampled-action grouping selection:

    4*L*eta_R/(1-gamma) + 4*L*gamma*S*eta_P/(1-gamma)^2
      + (4*L*gamma*S/(1-gamma)^2) * sqrt(S|A_bar| log(2S|A_bar|/delta) / (2*K1)).
    """
    if inputs.lipschitz <= 0 or inputs.eta_p < 0 or inputs.eta_r < 0:
        raise ValueError("need lipschitz > 0 and eta_p, eta_r >= 0")
    if inputs.n_sampled_actions < 1 or inputs.k1 < 1 or inputs.n_states < 1:
        raise ValueError("counts must be positive")
    _check_delta_gamma(inputs.gamma, inputs.delta)
    L, gamma, S = inputs.lipschitz, inputs.gamma, inputs.n_states
    n_bar = inputs.n_sampled_actions
    one_minus = 1.0 - gamma
    action_sampling = 4.0 * L * inputs.eta_r / one_minus + 4.0 * L * gamma * S * inputs.eta_p / one_minus**2
    estimation = (
        4.0 * L * gamma * S / one_minus**2
    ) * math.sqrt(S * n_bar * math.log(2.0 * S * n_bar / inputs.delta) / (2.0 * inputs.k1))
    return action_sampling + estimation
