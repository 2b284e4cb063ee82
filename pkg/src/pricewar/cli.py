"""Command-line entry point.

Five subcommands cover the full workflow: simulate a market, infer hidden
distributions from a record file, preprocess raw coupon logs, run a policy
tournament, and score estimates against held-out records. Every command
takes a --seed and is bit-reproducible under it. Exit codes: 0 success,
2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, lda, pipeline, policies
from .game import (AwardSet, ConfigError, DataError, DemandDistribution, MarketConfig,
                   PriceWarError, read_records)
from .simulator import run_game, write_trajectory

SIMULATE_DEFAULTS = {
    "seed": 0, "rounds": 200, "num_customer_groups": 10, "customers_per_group": 100,
    "budget1": 2000.0, "budget2": 2000.0, "budget_mode": "per_round",
    "awards1": 5, "awards2": 5, "demand": {"min": 1, "max": 100},
    "demand_mode": "redraw", "updating_rate": 0.5, "initial_sigma": 0.5,
    "policy1": {"name": "random"}, "policy2": {"name": "random"},
}

INFER_DEFAULTS = {
    "seed": 0, "acc": 10, "opp_arity": 2, "alpha": 1.0, "beta": 1.0,
    "sweeps": 2000, "burn_in": 1000, "thin": 10, "chains": 4,
    "reimpute_each_sweep": False, "own_arity": None, "demand": None,
}

TOURNAMENT_DEFAULTS = {
    "seed": 0, "seeds": 10, "cells": [["random", "random"]],
    "market": {k: v for k, v in SIMULATE_DEFAULTS.items()
               if k not in ("policy1", "policy2", "seed")},
    "policies": {},
}


def _load_json(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})")


def _award_set(spec) -> AwardSet:
    if isinstance(spec, int):
        return AwardSet.linear(spec)
    if isinstance(spec, dict) and "costs" in spec and "values" in spec:
        return AwardSet(costs=tuple(spec["costs"]), values=tuple(spec["values"]))
    raise ConfigError(f"award set must be an int or {{costs, values}}, got {spec!r}")


def _demand(spec) -> DemandDistribution:
    if isinstance(spec, dict) and "min" in spec:
        return DemandDistribution.uniform(int(spec["min"]), int(spec["max"]))
    if isinstance(spec, dict) and "support" in spec:
        return DemandDistribution(tuple(spec["support"]), tuple(spec["probs"]))
    raise ConfigError(f"demand must be {{min, max}} or {{support, probs}}, got {spec!r}")


def _market_config(d: dict, seed_override: int | None) -> MarketConfig:
    merged = {**{k: v for k, v in SIMULATE_DEFAULTS.items()
                 if k not in ("policy1", "policy2")}, **d}
    unknown = set(merged) - set(SIMULATE_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown market keys: {sorted(unknown)}")
    return MarketConfig(
        seed=seed_override if seed_override is not None else int(merged["seed"]),
        rounds=int(merged["rounds"]),
        num_customer_groups=int(merged["num_customer_groups"]),
        customers_per_group=int(merged["customers_per_group"]),
        budget1=float(merged["budget1"]), budget2=float(merged["budget2"]),
        budget_mode=merged["budget_mode"],
        awards1=_award_set(merged["awards1"]), awards2=_award_set(merged["awards2"]),
        demand=_demand(merged["demand"]), demand_mode=merged["demand_mode"],
        updating_rate=float(merged["updating_rate"]),
        initial_sigma=float(merged["initial_sigma"]))


def _policy_kwargs(spec: dict) -> dict:
    kwargs = dict(spec)
    if "lda" in kwargs:
        kwargs["lda"] = lda.LdaConfig(**kwargs["lda"])
    if "qconfig" in kwargs:
        kwargs["qconfig"] = policies.QLearnerConfig(**kwargs["qconfig"])
    return kwargs


def _build_policy(spec: dict):
    if "name" not in spec:
        raise ConfigError("policy spec needs a 'name'")
    kwargs = _policy_kwargs({k: v for k, v in spec.items() if k != "name"})
    try:
        return policies.make_policy(spec["name"], **kwargs)
    except TypeError as e:
        raise ConfigError(f"bad options for policy {spec['name']!r}: {e}")


def _lda_config(d: dict, seed_override: int | None) -> tuple[lda.LdaConfig, dict]:
    merged = {**INFER_DEFAULTS, **d}
    unknown = set(merged) - set(INFER_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown inference keys: {sorted(unknown)}")
    extras = {"own_arity": merged.pop("own_arity"), "demand": merged.pop("demand")}
    if seed_override is not None:
        merged["seed"] = seed_override
    return lda.LdaConfig(**merged), extras


# --- commands ------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg_dict = _load_json(args.config) if args.config else {}
    config = _market_config({k: v for k, v in cfg_dict.items()
                             if k not in ("policy1", "policy2")}, args.seed)
    p1 = _build_policy(cfg_dict.get("policy1", SIMULATE_DEFAULTS["policy1"]))
    p2 = _build_policy(cfg_dict.get("policy2", SIMULATE_DEFAULTS["policy2"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_game(config, p1, p2)
    result.log1.write(out / "records_company1.csv")
    result.log2.write(out / "records_company2.csv")
    write_trajectory(out / "trajectory.csv", result.trajectory)
    if isinstance(p1, policies.DpPolicy) and p1.last_psi is not None:
        awards = result.log1.awards[-config.num_customers:]
        policies.write_dp_decisions(out / "dp_decisions.csv",
                                    range(config.num_customers), awards, p1.last_psi)
    read_records(out / "records_company1.csv")
    read_records(out / "records_company2.csv")
    print(f"final shares: company1={result.final_shares[0]:.4f} "
          f"company2={result.final_shares[1]:.4f}")
    if sum(result.coerced):
        print(f"budget coercions to award 0: company1={result.coerced[0]} "
              f"company2={result.coerced[1]}")
    return 0


def cmd_infer(args) -> int:
    config, extras = _lda_config(_load_json(args.config) if args.config else {}, args.seed)
    records = read_records(args.records)
    if not records:
        raise DataError(f"{args.records}: no records to infer from")
    theta_groups = None
    if args.groups:
        theta_groups = {}
        import csv
        with open(args.groups, newline="") as f:
            reader = csv.reader(f)
            next(reader)
            for row in reader:
                theta_groups[int(row[0])] = int(row[1])
    demand = _demand(extras["demand"]) if extras["demand"] else None
    result = lda.run_inference(records, config, theta_groups=theta_groups,
                               demand_dist=demand, own_arity=extras["own_arity"],
                               threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lda.write_preference(out / "preference.csv", result.pref)
    lda.write_strategy(out / "strategy.csv", result.theta)
    lda.write_diagnostics(out / "diagnostics.csv", result)
    lda.read_preference(out / "preference.csv")
    lda.read_strategy(out / "strategy.csv")
    print(f"inferred {result.pref.num_own}x{result.pref.num_opp}x{result.pref.acc} "
          f"preference matrix and {len(result.theta.entities)} strategy rows "
          f"over {config.chains} chains")
    return 0


def cmd_preprocess(args) -> int:
    records, quarantine = pipeline.load_o2o(args.data)
    result = pipeline.preprocess(records, args.merchant,
                                 num_preference_groups=args.groups,
                                 strategy_group_count=args.strategy_groups,
                                 seed=args.seed if args.seed is not None else 0,
                                 quarantine=quarantine)
    out = Path(args.out)
    result.write(out)
    for g in range(len(result.group_records)):
        read_records(out / f"records_pg{g}.csv")
    print(f"merchant {args.merchant}: {result.stats['focal_records']} records, "
          f"{result.stats['focal_users']} users, "
          f"{result.stats['focal_coupon_kinds']} coupon kinds, "
          f"{result.stats['quarantined']} rows quarantined")
    return 0


def cmd_tournament(args) -> int:
    merged = {**TOURNAMENT_DEFAULTS, **_load_json(args.config)}
    unknown = set(merged) - set(TOURNAMENT_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown tournament keys: {sorted(unknown)}")
    cells = [tuple(c) for c in merged["cells"]]
    if not cells:
        raise ConfigError("tournament needs at least one cell")
    for c in cells:
        if len(c) != 2:
            raise ConfigError(f"each cell must name two policies, got {c!r}")
    config = _market_config(dict(merged["market"], seed=merged["seed"]), args.seed)
    settings = {name: _policy_kwargs(spec) for name, spec in merged["policies"].items()}
    result = evaluation.run_tournament(cells, config, int(merged["seeds"]),
                                       policy_settings=settings, threads=args.threads)
    result.write(args.out)
    for cell in result.cells:
        print(f"{cell.policy1} vs {cell.policy2}: mean share1 = {cell.mean_share:.4f} "
              f"(stderr {cell.stderr:.4f}, {len(cell.shares)} seeds)")
    return 0


def cmd_evaluate(args) -> int:
    pref = lda.read_preference(args.pref)
    theta = lda.read_strategy(args.theta)
    records = read_records(args.records)
    if not records:
        raise DataError(f"{args.records}: empty test set")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    lda_pred = evaluation.make_lda_predictor(pref, theta)
    uni_pred = evaluation.make_uniform_predictor(pref.acc)
    rows = [("lda", evaluation.negative_log_likelihood(lda_pred, records),
             evaluation.floored_fraction(lda_pred, records)),
            ("uniform", evaluation.negative_log_likelihood(uni_pred, records),
             evaluation.floored_fraction(uni_pred, records))]
    import csv
    with open(out / "nll_report.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "nll", "floored_fraction"])
        for name, nll, fl in rows:
            w.writerow([name, repr(nll), repr(fl)])
    print(f"NLL over {len(records)} records: lda={rows[0][1]:.3f} uniform={rows[1][1]:.3f}")

    if args.truth:
        counts = np.zeros_like(theta.probs)
        index = {e: i for i, e in enumerate(theta.entities)}
        with open(args.truth, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != ["strategy_group", "level", "count"]:
                raise DataError(f"{args.truth}: not an exposure CSV")
            for row in reader:
                entity, level, count = int(row[0]), int(row[1]), int(row[2])
                if entity in index:
                    counts[index[entity], level - 1] = count
        report = evaluation.strategy_distance_report(theta, counts)
        report.write(out / "w1_report.csv")
        lda_w1, uni_w1, avg_w1 = report.means()
        print(f"mean W1: lda={lda_w1:.5f} uniform={uni_w1:.5f} overall-average={avg_w1:.5f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pricewar",
        description="Two-company award-game laboratory: simulate, infer, decide, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="play one game and write record/trajectory files",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog="config defaults:\n" + json.dumps(SIMULATE_DEFAULTS, indent=2))
    p.add_argument("--config", help="JSON market + policy config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer", help="run the collapsed sampler on a record CSV",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog="config defaults:\n" + json.dumps(INFER_DEFAULTS, indent=2))
    p.add_argument("--records", required=True)
    p.add_argument("--config", help="JSON sampler config")
    p.add_argument("--groups", help="CSV mapping customer_id to a strategy entity")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("preprocess", help="cluster and convert raw O2O coupon logs")
    p.add_argument("--data", required=True, help="raw O2O CSV (path supplied by the user)")
    p.add_argument("--merchant", required=True, type=int, help="focal merchant id")
    p.add_argument("--groups", type=int, default=4, help="preference groups")
    p.add_argument("--strategy-groups", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("tournament", help="play a matrix of policy matchups",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog="config defaults:\n" + json.dumps(TOURNAMENT_DEFAULTS, indent=2))
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=None,
                   help="worker pool size (default: all cores)")
    p.set_defaults(func=cmd_tournament)

    p = sub.add_parser("evaluate", help="score estimates against held-out records")
    p.add_argument("--pref", required=True, help="preference CSV from infer")
    p.add_argument("--theta", required=True, help="strategy CSV from infer")
    p.add_argument("--records", required=True, help="held-out record CSV")
    p.add_argument("--truth", help="opponent-exposure CSV for the W1 report")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is None:
        import os
        args.threads = os.cpu_count() or 1
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except PriceWarError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 4
    except Exception as e:   # anything unexpected is still a runtime failure
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
