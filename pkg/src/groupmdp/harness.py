"""Configuration-driven experiment harness.

Each experiment kind expands into a list of settings; every (setting, trial)
cell runs with a seed derived from the master seed by a fixed mixing formula,
so re-running a config reproduces every numeric column and adding settings
never perturbs existing trials. Results land in a CSV with a stable header
that the plot scripts consume bit-exactly.
"""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bounds
from .envs import (
    DownlinkConfig,
    TightnessConfig,
    WirelessAccessConfig,
    build_downlink,
    build_tightness_mdp,
    build_wireless_access,
    random_grouped_mdp,
    tightness_closed_forms,
)
from .estimation import RngSpec, SampleBudget, derive_seed, measure_loss, per_state_loss, run_pipeline
from .grouping import GroupingFunction, InnerPolicy, beta_p_star, beta_r_star, build_grouped_mdp, lift_policy
from .mdp import PolicyTable, TabularMdp, evaluate_policy, value_iteration
from .selector import MdpSampler, ResourceGrid, UtilityConfig, select_grouping_exact, select_grouping_practical

REQUIRED_COLUMNS = [
    "experiment", "trial", "groups", "K", "Kprime", "T",
    "loss_sup", "eps_perf", "eps_approx", "eps_samp", "eps_alg", "wall_ms",
]
# Optional columns, always appended in this order when an experiment emits them.
OPTIONAL_COLUMNS = [
    "loss_per_state", "beta_p", "beta_r", "gamma", "delta", "covered",
    "loss_closed_form", "gap", "gap_closed_form", "utility", "selected", "mode",
]

EXPERIMENT_KINDS = (
    "fig1_grouping_vs_flat",
    "fig2_sample_sweep",
    "tightness_surface",
    "bound_validity",
    "selection_demo",
)


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field path."""


def _need(cfg: dict, key: str, path: str = ""):
    where = f"{path}.{key}" if path else key
    if not isinstance(cfg, dict) or key not in cfg:
        raise ConfigError(f"missing required field '{where}'")
    return cfg[key]


def _num_list(cfg: dict, key: str, path: str = "") -> list:
    val = _need(cfg, key, path)
    where = f"{path}.{key}" if path else key
    if not isinstance(val, list) or not val:
        raise ConfigError(f"field '{where}' must be a nonempty list")
    return val


def deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    env: dict
    params: dict
    n_trials: int
    seed: int
    out: str

    @classmethod
    def from_dict(cls, raw: dict, scale: str = "desk") -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("experiment config must be a JSON object")
        raw = dict(raw)
        scales = raw.pop("scales", {})
        if scale != "desk":
            if scale not in scales:
                raise ConfigError(f"scale '{scale}' not defined under field 'scales'")
            raw = deep_merge(raw, scales[scale])
        kind = _need(raw, "kind")
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"field 'kind' must be one of {EXPERIMENT_KINDS}, got {kind!r}")
        n_trials = int(raw.get("n_trials", 1))
        if n_trials < 1:
            raise ConfigError("field 'n_trials' must be >= 1")
        env = raw.get("env", {})
        params = {
            k: v for k, v in raw.items() if k not in {"kind", "env", "n_trials", "seed", "out"}
        }
        return cls(
            kind=kind,
            env=env,
            params=params,
            n_trials=n_trials,
            seed=int(raw.get("seed", 0)),
            out=str(raw.get("out", f"{kind}.csv")),
        )


# ---------------------------------------------------------------------------
# Environment construction from config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvBundle:
    mdp: TabularMdp
    grouping: GroupingFunction
    feasible: list[GroupingFunction]
    inner: InnerPolicy


def build_env(env_cfg: dict) -> EnvBundle:
    kind = _need(env_cfg, "kind", "env")
    if kind == "downlink":
        cfg = DownlinkConfig(
            n_states=int(_need(env_cfg, "n_states", "env")),
            n_users=int(_need(env_cfg, "n_users", "env")),
            n_groups=int(_need(env_cfg, "n_groups", "env")),
            arrival=float(_need(env_cfg, "arrival", "env")),
            beta_tilde_p=float(_need(env_cfg, "beta_tilde_p", "env")),
            beta_tilde_r=float(_need(env_cfg, "beta_tilde_r", "env")),
            gamma=float(_need(env_cfg, "gamma", "env")),
            seed=int(env_cfg.get("seed", 0)),
        )
        mdp, grouping, feasible = build_downlink(cfg)
        return EnvBundle(mdp, grouping, feasible, InnerPolicy.uniform(grouping))
    if kind == "tightness":
        cfg = TightnessConfig(
            beta_p=float(_need(env_cfg, "beta_p", "env")),
            beta_r=float(_need(env_cfg, "beta_r", "env")),
            gamma=float(_need(env_cfg, "gamma", "env")),
        )
        mdp, grouping, inner, _ = build_tightness_mdp(cfg)
        return EnvBundle(mdp, grouping, [grouping, GroupingFunction.singletons(2)], inner)
    if kind == "wireless":
        cfg = WirelessAccessConfig(
            n_users=int(_need(env_cfg, "n_users", "env")),
            buffer=int(_need(env_cfg, "buffer", "env")),
            arrival=float(_need(env_cfg, "arrival", "env")),
            alpha_good=float(env_cfg.get("alpha_good", 0.9)),
            gamma=float(_need(env_cfg, "gamma", "env")),
        )
        mdp, grouping = build_wireless_access(cfg)
        feasible = [grouping, GroupingFunction.singletons(mdp.n_actions)]
        return EnvBundle(mdp, grouping, feasible, InnerPolicy.uniform(grouping))
    if kind == "random_grouped":
        mdp, grouping = random_grouped_mdp(
            n_states=int(_need(env_cfg, "n_states", "env")),
            n_actions=int(_need(env_cfg, "n_actions", "env")),
            n_groups=int(_need(env_cfg, "n_groups", "env")),
            gamma=float(_need(env_cfg, "gamma", "env")),
            seed=int(env_cfg.get("seed", 0)),
            eta_p=float(env_cfg.get("eta_p", 0.0)),
            eta_r=float(env_cfg.get("eta_r", 0.0)),
        )
        feasible = [grouping, GroupingFunction.singletons(mdp.n_actions)]
        return EnvBundle(mdp, grouping, feasible, InnerPolicy.uniform(grouping))
    raise ConfigError(f"field 'env.kind' must be downlink|tightness|wireless|random_grouped, got {kind!r}")


# ---------------------------------------------------------------------------
# Experiment execution
# ---------------------------------------------------------------------------

@dataclass
class ExperimentOutput:
    columns: list[str]
    rows: list[dict]
    summary: str

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _pipeline_row(
    experiment: str,
    trial: int,
    mdp: TabularMdp,
    grouping: GroupingFunction,
    inner: InnerPolicy,
    kprime: int,
    vi_iters: int,
    delta: float,
    seed: int,
    v_star: np.ndarray,
    bp: float,
    br: float,
) -> dict:
    start = time.perf_counter()
    budget = SampleBudget(per_pair=kprime)
    result = run_pipeline(mdp, grouping, inner, budget, RngSpec(seed), vi_iters=vi_iters)
    losses = per_state_loss(mdp, result.lifted, v_star=v_star)
    loss = float(losses.max())
    total = budget.total_for(mdp.n_states, grouping.n_groups)
    bd = bounds.eps_perf_vi(bp, br, mdp.n_states, grouping.n_groups, total, vi_iters, mdp.gamma, delta)
    wall_ms = (time.perf_counter() - start) * 1e3
    return {
        "experiment": experiment,
        "trial": trial,
        "groups": grouping.n_groups,
        "K": total,
        "Kprime": kprime,
        "T": vi_iters,
        "loss_sup": _fmt(loss),
        "eps_perf": _fmt(bd.eps_perf),
        "eps_approx": _fmt(bd.eps_approx),
        "eps_samp": _fmt(bd.eps_samp),
        "eps_alg": _fmt(bd.eps_alg),
        "wall_ms": _fmt(wall_ms),
        "loss_per_state": ";".join(format(x, ".17g") for x in losses),
        "beta_p": _fmt(bp),
        "beta_r": _fmt(br),
        "gamma": _fmt(mdp.gamma),
        "delta": _fmt(delta),
        "covered": int(loss <= bd.eps_perf),
    }


_PIPELINE_OPTIONAL = ["loss_per_state", "beta_p", "beta_r", "gamma", "delta", "covered"]


def _run_settings(
    settings: list,
    run_one: Callable[[int, int, int], dict],
    n_trials: int,
    master_seed: int,
    threads: int,
) -> list[dict]:
    """Run every (setting, trial) cell; rows come back sorted by (setting, trial)."""
    cells = [
        (si, trial, derive_seed(master_seed, si, trial))
        for si in range(len(settings))
        for trial in range(n_trials)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda c: run_one(*c), cells))
    else:
        rows = [run_one(*c) for c in cells]
    return rows


def _coverage_summary(rows: list[dict], group_keys: list[str]) -> str:
    lines = []
    seen: dict[tuple, list[dict]] = {}
    for row in rows:
        key = tuple(row[k] for k in group_keys)
        seen.setdefault(key, []).append(row)
    for key, bucket in seen.items():
        losses = [float(r["loss_sup"]) for r in bucket]
        covered = [int(r.get("covered", 1)) for r in bucket]
        label = " ".join(f"{k}={v}" for k, v in zip(group_keys, key))
        lines.append(
            f"{label}: mean_loss={np.mean(losses):.6g} "
            f"coverage={np.mean(covered):.3f} ({len(bucket)} trials)"
        )
    return "\n".join(lines)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentOutput:
    if config.kind == "fig1_grouping_vs_flat":
        return _run_fig1(config, threads)
    if config.kind == "fig2_sample_sweep":
        return _run_fig2(config, threads)
    if config.kind == "tightness_surface":
        return _run_tightness_surface(config)
    if config.kind == "bound_validity":
        return _run_bound_validity(config, threads)
    if config.kind == "selection_demo":
        return _run_selection_demo(config)
    raise ConfigError(f"unknown experiment kind {config.kind!r}")


def _run_fig1(config: ExperimentConfig, threads: int) -> ExperimentOutput:
    env = build_env(config.env)
    kprimes = [int(k) for k in _num_list(config.params, "kprime_values")]
    vi_iters = int(config.params.get("vi_iters", 200))
    delta = float(config.params.get("delta", 0.1))
    mdp = env.mdp

    flat = GroupingFunction.singletons(mdp.n_actions)
    variants = [(env.grouping, env.inner), (flat, InnerPolicy.uniform(flat))]
    settings = [(kp, g, inner) for kp in kprimes for (g, inner) in variants]
    betas = {id(g): (beta_p_star(mdp, g), beta_r_star(mdp, g)) for g, _ in variants}
    v_star = value_iteration(mdp, tolerance=1e-12)[0].v

    def run_one(si: int, trial: int, seed: int) -> dict:
        kp, g, inner = settings[si]
        bp, br = betas[id(g)]
        return _pipeline_row(
            config.kind, trial, mdp, g, inner, kp, vi_iters, delta, seed, v_star, bp, br
        )

    rows = _run_settings(settings, run_one, config.n_trials, config.seed, threads)
    summary = _coverage_summary(rows, ["groups", "Kprime"])
    return ExperimentOutput(REQUIRED_COLUMNS + _PIPELINE_OPTIONAL, rows, summary)


def _coarsen_to(env: EnvBundle, count: int) -> GroupingFunction:
    if count == env.mdp.n_actions:
        return GroupingFunction.singletons(env.mdp.n_actions)
    if count <= env.grouping.n_groups and env.grouping.n_groups % count == 0:
        return env.grouping.merge_adjacent(count)
    raise ConfigError(
        f"field 'group_counts' entry {count} is neither the action count nor a divisor "
        f"of the natural group count {env.grouping.n_groups}"
    )


def _run_fig2(config: ExperimentConfig, threads: int) -> ExperimentOutput:
    env = build_env(config.env)
    counts = [int(c) for c in _num_list(config.params, "group_counts")]
    k_values = [int(k) for k in _num_list(config.params, "k_values")]
    vi_iters = int(config.params.get("vi_iters", 200))
    delta = float(config.params.get("delta", 0.1))
    mdp = env.mdp

    candidates = [(_coarsen_to(env, c)) for c in counts]
    inners = [InnerPolicy.uniform(g) for g in candidates]
    betas = [(beta_p_star(mdp, g), beta_r_star(mdp, g)) for g in candidates]
    settings = [(ci, k) for ci in range(len(candidates)) for k in k_values]
    v_star = value_iteration(mdp, tolerance=1e-12)[0].v

    def run_one(si: int, trial: int, seed: int) -> dict:
        ci, k = settings[si]
        g = candidates[ci]
        kprime = max(1, k // (mdp.n_states * g.n_groups))
        bp, br = betas[ci]
        return _pipeline_row(
            config.kind, trial, mdp, g, inners[ci], kprime, vi_iters, delta, seed, v_star, bp, br
        )

    rows = _run_settings(settings, run_one, config.n_trials, config.seed, threads)
    summary = _coverage_summary(rows, ["groups", "K"])
    return ExperimentOutput(REQUIRED_COLUMNS + _PIPELINE_OPTIONAL, rows, summary)


def _run_tightness_surface(config: ExperimentConfig) -> ExperimentOutput:
    gamma = float(config.params.get("gamma", 0.5))
    beta_values = [float(b) for b in _num_list(config.params, "beta_values")]
    rows = []
    for bp in beta_values:
        for br in beta_values:
            start = time.perf_counter()
            cfg = TightnessConfig(beta_p=bp, beta_r=br, gamma=gamma)
            mdp, grouping, inner, closed = build_tightness_mdp(cfg)
            outer = PolicyTable.deterministic(np.zeros(2, dtype=int))
            lifted = lift_policy(outer, inner, grouping)
            losses = per_state_loss(mdp, lifted, tolerance=1e-14)
            loss = float(losses.max())
            approx = bounds.eps_approx(bp, br, gamma)
            wall_ms = (time.perf_counter() - start) * 1e3
            rows.append({
                "experiment": config.kind,
                "trial": 0,
                "groups": 1,
                "K": 0,
                "Kprime": 0,
                "T": 0,
                "loss_sup": _fmt(loss),
                "eps_perf": _fmt(approx),
                "eps_approx": _fmt(approx),
                "eps_samp": _fmt(0.0),
                "eps_alg": _fmt(0.0),
                "wall_ms": _fmt(wall_ms),
                "beta_p": _fmt(bp),
                "beta_r": _fmt(br),
                "gamma": _fmt(gamma),
                "loss_closed_form": _fmt(closed.approx_gap),
                "gap": _fmt(abs(approx / 2.0 - loss)),
                "gap_closed_form": _fmt(closed.identity_gap),
            })
    gaps = [abs(float(r["gap"]) - float(r["gap_closed_form"])) for r in rows]
    summary = (
        f"grid={len(beta_values)}x{len(beta_values)} gamma={gamma} "
        f"max |gap - closed_form| = {max(gaps):.3g}"
    )
    cols = REQUIRED_COLUMNS + ["beta_p", "beta_r", "gamma", "loss_closed_form", "gap", "gap_closed_form"]
    return ExperimentOutput(cols, rows, summary)


def _run_bound_validity(config: ExperimentConfig, threads: int) -> ExperimentOutput:
    env = build_env(config.env)
    kprime = int(config.params.get("kprime", 500))
    vi_iters = int(config.params.get("vi_iters", 200))
    delta = float(config.params.get("delta", 0.1))
    mdp = env.mdp
    bp, br = beta_p_star(mdp, env.grouping), beta_r_star(mdp, env.grouping)
    v_star = value_iteration(mdp, tolerance=1e-12)[0].v
    settings = [0]

    def run_one(si: int, trial: int, seed: int) -> dict:
        return _pipeline_row(
            config.kind, trial, mdp, env.grouping, env.inner, kprime, vi_iters, delta, seed,
            v_star, bp, br,
        )

    rows = _run_settings(settings, run_one, config.n_trials, config.seed, threads)
    summary = _coverage_summary(rows, ["groups", "Kprime"])
    return ExperimentOutput(REQUIRED_COLUMNS + _PIPELINE_OPTIONAL, rows, summary)


def _run_selection_demo(config: ExperimentConfig) -> ExperimentOutput:
    env = build_env(config.env)
    utility = UtilityConfig.from_dict(_need(config.params, "utility"))
    grid_cfg = _need(config.params, "grid")
    grid = ResourceGrid.build(
        [int(k) for k in _num_list(grid_cfg, "k_values", "grid")],
        [int(t) for t in _num_list(grid_cfg, "t_values", "grid")],
    )
    delta = float(config.params.get("delta", 0.1))
    mode = str(config.params.get("mode", "exact"))
    mdp = env.mdp
    if mode == "exact":
        result = select_grouping_exact(mdp, env.feasible, utility, grid, delta)
    elif mode == "practical":
        result = select_grouping_practical(
            MdpSampler(mdp),
            env.feasible,
            utility,
            grid,
            int(config.params.get("m_per_group", 1)),
            int(config.params.get("k1", 10000)),
            delta,
            RngSpec(config.seed),
        )
    else:
        raise ConfigError(f"field 'mode' must be exact|practical, got {mode!r}")

    v_star = value_iteration(mdp, tolerance=1e-12)[0].v
    rows = []
    for cand in result.candidates:
        g = env.feasible[cand.index]
        inner = InnerPolicy.uniform(g)
        kprime = max(1, cand.k_star // (mdp.n_states * g.n_groups))
        seed = derive_seed(config.seed, cand.index, 0)
        row = _pipeline_row(
            config.kind, 0, mdp, g, inner, kprime, cand.t_star, delta, seed, v_star,
            cand.beta_p, cand.beta_r,
        )
        row["utility"] = _fmt(cand.utility)
        row["selected"] = int(cand.index == result.best_index)
        row["mode"] = result.mode
        rows.append(row)
    best = result.best
    summary = (
        f"mode={result.mode} winner groups={best.n_groups} "
        f"K*={best.k_star} T*={best.t_star} utility={best.utility:.6g}"
    )
    cols = REQUIRED_COLUMNS + _PIPELINE_OPTIONAL + ["utility", "selected", "mode"]
    return ExperimentOutput(cols, rows, summary)
