"""Command-line harness: run experiments, evaluate bounds, select groupings.

Subcommands: run, bounds, select, export-env. Exit codes: 0 on success,
1 on runtime failure, 2 on invalid input (bad config, unparsable files,
empty feasible sets).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .envs import (
    DownlinkConfig,
    TightnessConfig,
    WirelessAccessConfig,
    build_downlink,
    build_tightness_mdp,
    build_wireless_access,
)
from .grouping import GroupingFunction, beta_p_star, beta_r_star
from .harness import ConfigError, ExperimentConfig, run_experiment
from .bounds import eps_perf_vi
from .estimation import RngSpec
from .mdp import TabularMdp, load_mdp, mdp_to_dict, save_mdp
from .selector import (
    MdpSampler,
    ResourceGrid,
    UtilityConfig,
    parse_feasible_set,
    select_grouping_exact,
    select_grouping_practical,
)


class InputError(Exception):
    """User-input problem: reported on stderr, exit code 2."""


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc


def _load_mdp(path: str) -> TabularMdp:
    try:
        return load_mdp(path)
    except FileNotFoundError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    except (json.JSONDecodeError, ValueError) as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc


def _int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"{flag} must be a comma-separated integer list: {exc}") from exc
    if not values:
        raise InputError(f"{flag} must contain at least one value")
    return values


def _cmd_run(args) -> int:
    raw = _load_json(args.config)
    try:
        config = ExperimentConfig.from_dict(raw, scale=args.scale)
    except ConfigError as exc:
        raise InputError(f"invalid config {args.config}: {exc}") from exc
    if args.seed is not None:
        config = ExperimentConfig(config.kind, config.env, config.params, config.n_trials,
                                  args.seed, config.out)
    out_path = Path(args.out if args.out else config.out)
    try:
        output = run_experiment(config, threads=args.threads)
    except ConfigError as exc:
        raise InputError(f"invalid config {args.config}: {exc}") from exc
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(output.to_csv_text())
    print(output.summary)
    print(f"wrote {len(output.rows)} rows to {out_path}")
    return 0


def _cmd_bounds(args) -> int:
    mdp = _load_mdp(args.mdp)
    try:
        grouping = GroupingFunction.from_dict(_load_json(args.grouping))
    except ValueError as exc:
        raise InputError(f"cannot parse {args.grouping}: {exc}") from exc
    if grouping.n_actions != mdp.n_actions:
        raise InputError(
            f"grouping in {args.grouping} covers {grouping.n_actions} actions, "
            f"MDP has {mdp.n_actions}"
        )
    gamma = mdp.gamma if args.gamma is None else args.gamma
    breakdown = eps_perf_vi(
        beta_p_star(mdp, grouping),
        beta_r_star(mdp, grouping),
        mdp.n_states,
        grouping.n_groups,
        args.K,
        args.T,
        gamma,
        args.delta,
    )
    print(json.dumps(breakdown.to_dict(), indent=2, sort_keys=True))
    return 0


_SELECT_COLUMNS = [
    "candidate", "groups", "beta_p", "beta_r", "K_star", "T_star", "utility",
    "eps_perf", "eps_approx", "eps_samp", "eps_alg", "wall_ms", "selected", "mode",
]


def _cmd_select(args) -> int:
    mdp = _load_mdp(args.mdp)
    try:
        feasible = parse_feasible_set(_load_json(args.feasible))
        utility = UtilityConfig.from_dict(_load_json(args.utility))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    for i, g in enumerate(feasible):
        if g.n_actions != mdp.n_actions:
            raise InputError(f"feasible-set candidate {i} covers {g.n_actions} actions, "
                             f"MDP has {mdp.n_actions}")
    try:
        grid = ResourceGrid.build(
            _int_list(args.k_grid, "--k-grid"),
            _int_list(args.t_grid, "--t-grid"),
            k_max=args.k_max,
            t_max=args.t_max,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc

    if args.mode == "exact":
        result = select_grouping_exact(mdp, feasible, utility, grid, args.delta)
    else:
        result = select_grouping_practical(
            MdpSampler(mdp), feasible, utility, grid,
            args.m_per_group, args.k1, args.delta, RngSpec(args.seed),
        )

    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    if args.out:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=_SELECT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for cand in result.candidates:
            bd = cand.breakdown
            writer.writerow({
                "candidate": cand.index,
                "groups": cand.n_groups,
                "beta_p": format(cand.beta_p, ".17g"),
                "beta_r": format(cand.beta_r, ".17g"),
                "K_star": cand.k_star,
                "T_star": cand.t_star,
                "utility": format(cand.utility, ".17g"),
                "eps_perf": format(bd.eps_perf, ".17g"),
                "eps_approx": format(bd.eps_approx, ".17g"),
                "eps_samp": format(bd.eps_samp, ".17g"),
                "eps_alg": format(bd.eps_alg, ".17g"),
                "wall_ms": format(cand.wall_ms, ".17g"),
                "selected": int(cand.index == result.best_index),
                "mode": result.mode,
            })
        Path(args.out).write_text(buf.getvalue())
    return 0


def _cmd_export_env(args) -> int:
    cfg = _load_json(args.config)
    kind = cfg.get("kind")
    try:
        if kind == "downlink":
            mdp, grouping, feasible = build_downlink(DownlinkConfig(
                n_states=int(cfg["n_states"]), n_users=int(cfg["n_users"]),
                n_groups=int(cfg["n_groups"]), arrival=float(cfg["arrival"]),
                beta_tilde_p=float(cfg["beta_tilde_p"]), beta_tilde_r=float(cfg["beta_tilde_r"]),
                gamma=float(cfg["gamma"]), seed=int(cfg.get("seed", 0)),
            ))
        elif kind == "tightness":
            mdp, grouping, _, _ = build_tightness_mdp(TightnessConfig(
                beta_p=float(cfg["beta_p"]), beta_r=float(cfg["beta_r"]), gamma=float(cfg["gamma"]),
            ))
            feasible = [grouping, GroupingFunction.singletons(2)]
        elif kind == "wireless":
            mdp, grouping = build_wireless_access(WirelessAccessConfig(
                n_users=int(cfg["n_users"]), buffer=int(cfg["buffer"]),
                arrival=float(cfg["arrival"]), alpha_good=float(cfg.get("alpha_good", 0.9)),
                gamma=float(cfg["gamma"]),
            ))
            feasible = [grouping, GroupingFunction.singletons(mdp.n_actions)]
        else:
            raise InputError(f"env kind must be downlink|tightness|wireless, got {kind!r}")
    except (KeyError, ValueError) as exc:
        raise InputError(f"invalid env config {args.config}: {exc}") from exc

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_mdp(mdp, out_dir / "mdp.json")
    (out_dir / "grouping.json").write_text(json.dumps(grouping.to_dict(), indent=2, sort_keys=True))
    (out_dir / "feasible.json").write_text(
        json.dumps([g.assignment.tolist() for g in feasible], indent=2)
    )
    print(f"wrote mdp.json, grouping.json, feasible.json to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupmdp",
        description="Grouped-action MDP planning: experiments, loss bounds, grouping selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config and write its CSV")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="override the config's output path")
    p_run.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--scale", choices=["desk", "full"], default="desk")
    p_run.set_defaults(func=_cmd_run)

    p_bounds = sub.add_parser("bounds", help="print the loss-bound breakdown for an MDP + grouping")
    p_bounds.add_argument("--mdp", required=True)
    p_bounds.add_argument("--grouping", required=True)
    p_bounds.add_argument("--K", type=int, required=True)
    p_bounds.add_argument("--T", type=int, required=True)
    p_bounds.add_argument("--gamma", type=float, default=None, help="override the MDP's discount")
    p_bounds.add_argument("--delta", type=float, default=0.1)
    p_bounds.set_defaults(func=_cmd_bounds)

    p_sel = sub.add_parser("select", help="pick the utility-optimal grouping from a feasible set")
    p_sel.add_argument("--mdp", required=True)
    p_sel.add_argument("--feasible", required=True)
    p_sel.add_argument("--utility", required=True)
    p_sel.add_argument("--mode", choices=["exact", "practical"], default="exact")
    p_sel.add_argument("--k-grid", required=True, help="comma-separated candidate K values")
    p_sel.add_argument("--t-grid", required=True, help="comma-separated candidate T values")
    p_sel.add_argument("--k-max", type=int, default=None)
    p_sel.add_argument("--t-max", type=int, default=None)
    p_sel.add_argument("--m-per-group", type=int, default=1)
    p_sel.add_argument("--k1", type=int, default=10000)
    p_sel.add_argument("--delta", type=float, default=0.1)
    p_sel.add_argument("--seed", type=int, default=0)
    p_sel.add_argument("--out", default=None, help="per-candidate utilities CSV path")
    p_sel.set_defaults(func=_cmd_select)

    p_exp = sub.add_parser("export-env", help="build an environment and write its JSON files")
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--out", required=True, help="output directory")
    p_exp.set_defaults(func=_cmd_export_env)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
