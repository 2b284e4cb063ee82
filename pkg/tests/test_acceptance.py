"""Acceptance gate: one test per criterion, each printing its pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s`. The tournament criterion
replays the committed desk-scale configuration in configs/ and takes a few
minutes; everything else is fast.
"""

import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from pricewar.cli import main as cli_main
from pricewar.evaluation import (make_lda_predictor, make_uniform_predictor,
                                 negative_log_likelihood, run_tournament,
                                 wasserstein1)
from pricewar.game import ConsumptionRecord, DemandDistribution, MarketConfig, AwardSet
from pricewar.lda import (LdaConfig, PreferenceMatrix, StrategyDistribution,
                          generate_synthetic, gibbs_sweep, initialize_state,
                          predict_bin_distribution, run_inference)
from pricewar.policies import QLearner, QLearnerConfig, dp_allocate, expected_usage
from pricewar.rng import derive
from pricewar.simulator import sigmoid_preference, update_sigma
from tests.test_lda import brute_force_posterior
from tests.test_policies import brute_force_allocation

REPO = Path(__file__).resolve().parent.parent


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} — {detail}")


# --- A1 fixture: synthetic posterior-recovery study ----------------------

A1_ACC = 10
A1_ARITY = 3
A1_GROUPS = 10
A1_CUSTOMERS_PER_GROUP = 30
A1_PERIODS = 20
A1_SEEDS = 5


def a1_truth(rng):
    """Monotone preference rows (higher own award raises usage, higher
    opponent award lowers it) plus one random strategy row per group."""
    pref = np.zeros((A1_ARITY, A1_ARITY, A1_ACC))
    for b1 in range(A1_ARITY):
        for b2 in range(A1_ARITY):
            center = 4.5 + 1.8 * (b1 - 1) - 2.2 * (b2 - 1)
            w = np.exp(-0.5 * ((np.arange(A1_ACC) - center) / 0.8) ** 2)
            pref[b1, b2] = w / w.sum()
    theta = rng.dirichlet(np.ones(A1_ARITY), size=A1_GROUPS)
    return PreferenceMatrix(pref), theta


@pytest.fixture(scope="module")
def a1_study():
    """Five independent generate-infer runs; shared by A1, A4, and A6."""
    demand = DemandDistribution.uniform(A1_ACC, 100)
    n_cust = A1_GROUPS * A1_CUSTOMERS_PER_GROUP
    groups = {j: j // A1_CUSTOMERS_PER_GROUP for j in range(n_cust)}
    own_policy = np.full(A1_ARITY, 1 / A1_ARITY)
    runs = []
    t0 = time.time()
    for seed in range(A1_SEEDS):
        rng = np.random.default_rng(seed)
        pref_true, theta_true = a1_truth(rng)
        theta_cust = StrategyDistribution(
            theta_true[[groups[j] for j in range(n_cust)]], tuple(range(n_cust)))
        data = generate_synthetic(theta_cust, pref_true, demand, own_policy,
                                  periods=A1_PERIODS, rng=rng)
        holdout = generate_synthetic(theta_cust, pref_true, demand, own_policy,
                                     periods=5, rng=np.random.default_rng(1000 + seed))
        cfg = LdaConfig(acc=A1_ACC, opp_arity=A1_ARITY, sweeps=2000, burn_in=1000,
                        thin=10, chains=4, seed=seed)
        result = run_inference(data.records, cfg, theta_groups=groups,
                               collect_diagnostics=False)
        runs.append(dict(pref_true=pref_true, theta_true=theta_true,
                         result=result, holdout=holdout.records))
    return dict(runs=runs, groups=groups, elapsed=time.time() - t0)


class TestA1PosteriorRecovery:
    def test_a1(self, a1_study):
        w1s, maes = [], []
        for run in a1_study["runs"]:
            est = run["result"]
            w1s.append(np.mean([wasserstein1(est.theta.probs[g], run["theta_true"][g])
                                for g in range(A1_GROUPS)]))
            maes.append(np.abs(expected_usage(est.pref)
                               - expected_usage(run["pref_true"])).mean())
        mean_w1, mean_mae = float(np.mean(w1s)), float(np.mean(maes))
        elapsed = a1_study["elapsed"]
        ok = mean_w1 <= 0.10 and mean_mae <= 0.08 and elapsed <= 300
        report("A1", ok, f"mean W1(theta)={mean_w1:.4f} (<=0.10), "
                         f"mean |gbar err|={mean_mae:.4f} (<=0.08), "
                         f"inference time {elapsed:.0f}s (<=300s)")
        assert mean_w1 <= 0.10
        assert mean_mae <= 0.08
        assert elapsed <= 300


class TestA2GibbsExactness:
    DATASETS = [
        [ConsumptionRecord(1, 0, 0, 3, 10)],
        [ConsumptionRecord(1, 0, 0, 3, 10), ConsumptionRecord(2, 0, 0, 9, 10)],
        [ConsumptionRecord(1, 0, 0, 0, 8), ConsumptionRecord(1, 1, 1, 8, 8)],
        [ConsumptionRecord(1, 0, 0, 2, 10), ConsumptionRecord(2, 0, 1, 9, 10),
         ConsumptionRecord(1, 1, 0, 5, 10)],
        [ConsumptionRecord(1, 0, 1, 7, 9), ConsumptionRecord(2, 1, 0, 1, 9),
         ConsumptionRecord(3, 2, 1, 4, 9)],
    ]

    def test_a2(self):
        worst = 0.0
        for records in self.DATASETS:
            records = sorted(records, key=lambda r: (r.customer, r.period,
                                                     r.own_award, r.count))
            acc = 5
            exact = brute_force_posterior(records, acc=acc, n_opp=2, alpha=1.0, beta=1.0)
            cfg = LdaConfig(acc=acc, opp_arity=2, sweeps=2, burn_in=1, chains=1)
            rng = derive(123)
            state = initialize_state(records, cfg, rng)
            counts: dict = {}
            burn, keep = 1000, 100_000
            for sweep in range(burn + keep):
                gibbs_sweep(state, rng)
                if sweep >= burn:
                    z = tuple(int(v) for v in state.assignments)
                    counts[z] = counts.get(z, 0) + 1
            tv = 0.5 * sum(abs(counts.get(z, 0) / keep - p) for z, p in exact.items())
            worst = max(worst, tv)
        report("A2", worst <= 0.01,
               f"worst TV(empirical, enumerated posterior)={worst:.4f} (<=0.01) "
               f"over {len(self.DATASETS)} micro datasets, 1e5 sweeps each")
        assert worst <= 0.01


class TestA3DpOptimality:
    def test_a3(self):
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(100):
            m = int(rng.integers(1, 7))
            n_awards = int(rng.integers(1, 4))
            budget = int(rng.integers(0, 9))
            psi = np.round(rng.random((m, n_awards)), 6)
            costs = list(range(n_awards))
            alloc = dp_allocate(psi, budget, costs)
            best = brute_force_allocation(psi, budget, costs)
            assert alloc.objective == pytest.approx(best, abs=1e-9)
            assert sum(costs[j] for j in alloc.awards) <= budget
            prev = -np.inf
            for b in range(budget + 1):
                obj = dp_allocate(psi, b, costs).objective
                assert obj >= prev - 1e-12
                prev = obj
            checked += 1
        report("A3", True, f"{checked} random instances match exhaustive search; "
                           "objective monotone in budget on all")


class TestA4StrategyDistanceOrdering:
    def test_a4(self, a1_study):
        uniform = np.full(A1_ARITY, 1 / A1_ARITY)
        wins = total = 0
        for run in a1_study["runs"]:
            est = run["result"]
            for g in range(A1_GROUPS):
                truth = run["theta_true"][g]
                d_lda = wasserstein1(est.theta.probs[g], truth)
                d_uni = wasserstein1(uniform, truth)
                wins += d_lda < d_uni
                total += 1
        rate = wins / total
        report("A4", rate >= 0.90,
               f"LDA beats the uniform baseline for {wins}/{total} groups "
               f"({rate:.0%}, need >=90%)")
        assert rate >= 0.90


class TestA5TournamentReproduction:
    def test_a5(self):
        payload = json.loads((REPO / "configs" / "acceptance_tournament.json").read_text())
        from pricewar.cli import _market_config, _policy_kwargs
        config = _market_config(dict(payload["market"], seed=payload["seed"]), None)
        settings = {name: _policy_kwargs(dict(spec))
                    for name, spec in payload["policies"].items()}
        cells = [tuple(c) for c in payload["cells"]]
        t0 = time.time()
        result = run_tournament(cells, config, payload["seeds"],
                                policy_settings=settings, threads=2)
        elapsed = time.time() - t0
        by_cell = {(c.policy1, c.policy2): c.mean_share for c in result.cells}
        dp = by_cell[("dp", "random")]
        dqn = by_cell[("dqn+lda", "dqn")]
        rvr = by_cell[("random", "random")]
        ok = dp >= 0.60 and dqn >= 0.55 and abs(rvr - 0.5) <= 0.02 and elapsed <= 1800
        report("A5", ok,
               f"dp vs random={dp:.4f} (>=0.60), dqn+lda vs dqn={dqn:.4f} (>=0.55), "
               f"random vs random={rvr:.4f} (0.50+-0.02), runtime {elapsed:.0f}s (<=1800s)")
        assert dp >= 0.60
        assert dqn >= 0.55
        assert abs(rvr - 0.5) <= 0.02
        assert elapsed <= 1800


class TestA6PredictionLikelihood:
    def test_a6(self, a1_study):
        groups = a1_study["groups"]
        margins = []
        for run in a1_study["runs"]:
            est = run["result"]
            records = run["holdout"]
            lda_nll = negative_log_likelihood(
                make_lda_predictor(est.pref, est.theta, theta_groups=groups), records)
            uniform_nll = negative_log_likelihood(
                make_uniform_predictor(A1_ACC), records)
            assert uniform_nll == pytest.approx(len(records) * np.log(A1_ACC))
            margins.append(uniform_nll - lda_nll)
            assert lda_nll < uniform_nll
        report("A6", True,
               f"LDA NLL below uniform N*ln(acc) on all {len(margins)} hold-outs; "
               f"margins {np.round(margins, 1).tolist()}")


class TestA7NumericalChecks:
    def test_a7_gradients(self):
        cfg = QLearnerConfig(hidden_width=24, batch_size=4, replay_capacity=64,
                             grad_clip=0.0)
        learner = QLearner(6, 3, cfg, derive(0))
        rng = derive(1)
        states = rng.normal(size=(8, 6))
        actions = rng.integers(0, 3, 8)
        targets = rng.normal(size=8)
        _, grads = learner.loss_and_grads(states, actions, targets)
        eps = 1e-6
        worst = 0.0
        for name, grad in grads.items():
            flat = learner.params[name].ravel()
            for i in rng.integers(0, flat.size, size=min(20, flat.size)):
                orig = flat[i]
                flat[i] = orig + eps
                up, _ = learner.loss_and_grads(states, actions, targets)
                flat[i] = orig - eps
                down, _ = learner.loss_and_grads(states, actions, targets)
                flat[i] = orig
                numeric = (up - down) / (2 * eps)
                rel = abs(numeric - grad.ravel()[i]) / max(1e-8, abs(numeric))
                worst = max(worst, rel)
        report("A7.grad", worst <= 1e-4,
               f"max relative gradient error {worst:.2e} (<=1e-4)")
        assert worst <= 1e-4

    def test_a7_distributions_sum_to_one(self):
        rng = derive(2)
        records = [ConsumptionRecord(1 + t, c, int(rng.integers(0, 3)),
                                     int(rng.integers(0, 11)), 10)
                   for t in range(12) for c in range(6)]
        cfg = LdaConfig(acc=6, opp_arity=3, sweeps=60, burn_in=30, thin=3,
                        chains=2, seed=0)
        res = run_inference(records, cfg)
        pref_err = np.abs(res.pref.probs.sum(axis=2) - 1).max()
        theta_err = np.abs(res.theta.probs.sum(axis=1) - 1).max()
        mix_err = max(abs(predict_bin_distribution(res.pref, res.theta.probs[i], b1).sum() - 1)
                      for i in range(3) for b1 in range(res.pref.num_own))
        worst = max(pref_err, theta_err, mix_err)
        report("A7.dist", worst <= 1e-9,
               f"max |row sum - 1| = {worst:.2e} (<=1e-9)")
        assert worst <= 1e-9

    def test_a7_curve_identities(self):
        sigmas = np.linspace(0.01, 0.99, 23)
        anchor = max(abs(sigmoid_preference(0.0, s) - s) for s in sigmas)
        d = np.linspace(-20, 20, 201)
        logistic = 1 / (1 + np.exp(-d))
        collapse = np.abs(sigmoid_preference(d, 0.5) - logistic).max()
        fixed = max(abs(update_sigma(s, s, g) - s)
                    for s in sigmas for g in (0.1, 0.5, 1.0))
        worst = max(anchor, collapse, fixed)
        report("A7.identities", worst == 0.0,
               f"curve anchor, logistic collapse, drift fixed point: "
               f"max abs deviation {worst:.1e} (exact)")
        assert worst == 0.0


class TestA8CliDeterminism:
    def _run_twice(self, tmp_path, name, argv_builder):
        outs = []
        for tag in ("x", "y"):
            out = tmp_path / f"{name}_{tag}"
            assert cli_main(argv_builder(out)) == 0
            outs.append(out)
        files = sorted(p.name for p in outs[0].iterdir())
        assert files == sorted(p.name for p in outs[1].iterdir())
        for f in files:
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), (name, f)
        return len(files)

    def test_a8(self, tmp_path):
        from tests.test_pipeline import synthetic_o2o
        sim_cfg = tmp_path / "sim.json"
        sim_cfg.write_text(json.dumps({
            "rounds": 4, "num_customer_groups": 2, "customers_per_group": 10,
            "budget1": 40.0, "budget2": 40.0, "budget_mode": "per_round",
            "demand": {"min": 1, "max": 20}}))
        lda_cfg = tmp_path / "lda.json"
        lda_cfg.write_text(json.dumps({"acc": 4, "opp_arity": 2, "sweeps": 30,
                                       "burn_in": 10, "thin": 2, "chains": 2}))
        tour_cfg = tmp_path / "tour.json"
        tour_cfg.write_text(json.dumps({
            "seed": 3, "seeds": 2,
            "cells": [["random", "random"], ["random", "random"]],
            "market": {"rounds": 4, "num_customer_groups": 2,
                       "customers_per_group": 10, "budget1": 40.0, "budget2": 40.0,
                       "budget_mode": "per_round", "demand": {"min": 1, "max": 20}}}))
        o2o = tmp_path / "o2o.csv"
        synthetic_o2o(o2o, n_users=40)

        checked = {}
        checked["simulate"] = self._run_twice(
            tmp_path, "sim",
            lambda out: ["simulate", "--config", str(sim_cfg), "--out", str(out),
                         "--seed", "11"])
        sim_out = tmp_path / "sim_x"
        checked["infer"] = self._run_twice(
            tmp_path, "inf",
            lambda out: ["infer", "--records", str(sim_out / "records_company1.csv"),
                         "--config", str(lda_cfg), "--out", str(out), "--seed", "12"])
        checked["preprocess"] = self._run_twice(
            tmp_path, "prep",
            lambda out: ["preprocess", "--data", str(o2o), "--merchant", "1",
                         "--groups", "2", "--strategy-groups", "3",
                         "--out", str(out), "--seed", "13"])
        checked["tournament"] = self._run_twice(
            tmp_path, "tour",
            lambda out: ["tournament", "--config", str(tour_cfg), "--out", str(out),
                         "--threads", "2"])
        inf_out = tmp_path / "inf_x"
        checked["evaluate"] = self._run_twice(
            tmp_path, "eval",
            lambda out: ["evaluate", "--pref", str(inf_out / "preference.csv"),
                         "--theta", str(inf_out / "strategy.csv"),
                         "--records", str(sim_out / "records_company1.csv"),
                         "--out", str(out), "--seed", "14"])
        detail = ", ".join(f"{k}:{v} files" for k, v in checked.items())
        report("A8", True, f"byte-identical reruns for every command "
                           f"(tournament with --threads 2): {detail}")
