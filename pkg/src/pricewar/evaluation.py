"""Metrics and experiment harness.

Prediction negative log likelihood, Wasserstein-1 on ordered discrete
support, the tournament runner pitting policy variants against each other,
and the strategy-distance report against naive baselines.
"""

from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .game import ConsumptionRecord, DataError, MarketConfig, discretize
from .lda import PreferenceMatrix, StrategyDistribution, predict_bin_distribution
from .policies import make_policy
from .simulator import run_game, write_trajectory

PROB_FLOOR = 1e-12


def negative_log_likelihood(predictor, records, floor: float = PROB_FLOOR) -> float:
    """-sum(log p(observed outcome)); probabilities are floored before log."""
    if len(records) == 0:
        raise DataError("cannot score an empty test set")
    probs = np.array([predictor(r) for r in records], dtype=float)
    return float(-np.log(np.maximum(probs, floor)).sum())


def floored_fraction(predictor, records, floor: float = PROB_FLOOR) -> float:
    probs = np.array([predictor(r) for r in records], dtype=float)
    return float(np.mean(probs < floor))


def make_lda_predictor(pref: PreferenceMatrix, theta: StrategyDistribution,
                       theta_groups: dict[int, int] | None = None):
    """Probability of a record's observed bin under the mixture estimates."""
    index = {e: i for i, e in enumerate(theta.entities)}

    def predictor(record: ConsumptionRecord) -> float:
        if record.demand is None:
            raise DataError("evaluation records need an observed demand")
        entity = theta_groups[record.customer] if theta_groups else record.customer
        try:
            row = theta.probs[index[entity]]
        except KeyError:
            raise DataError(f"no strategy estimate for entity {entity}") from None
        h = discretize(record.count, record.demand, pref.acc)
        return float(predict_bin_distribution(pref, row, record.own_award)[h])

    return predictor


def make_uniform_predictor(acc: int):
    """Baseline that spreads mass evenly over the usage bins."""
    def predictor(record: ConsumptionRecord) -> float:
        return 1.0 / acc
    return predictor


def wasserstein1(p, q, positions=None) -> float:
    """W1 between two distributions on the same ordered discrete support.

    In one dimension the transport infimum collapses to the area between the
    CDFs: sum_i |F_p(i) - F_q(i)| * (x_{i+1} - x_i).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise DataError("distributions must share one ordered support")
    if positions is None:
        positions = np.arange(len(p), dtype=float)
    else:
        positions = np.asarray(positions, dtype=float)
        if positions.shape != p.shape:
            raise DataError("positions must match the support size")
        if np.any(np.diff(positions) <= 0):
            raise DataError("positions must be strictly increasing")
    cdf_gap = np.abs(np.cumsum(p - q))[:-1]
    return float((cdf_gap * np.diff(positions)).sum())


# --- tournament ---------------------------------------------------------


@dataclass
class CellResult:
    policy1: str
    policy2: str
    shares: np.ndarray            # final share of company 1, one per seed
    trajectories: list[np.ndarray]

    @property
    def mean_share(self) -> float:
        return float(self.shares.mean())

    @property
    def stderr(self) -> float:
        if len(self.shares) < 2:
            return 0.0
        return float(self.shares.std(ddof=1) / np.sqrt(len(self.shares)))


@dataclass
class TournamentResult:
    cells: list[CellResult]

    def write(self, out_dir) -> None:
        from pathlib import Path
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "tournament.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["policy1", "policy2", "mean_share1", "stderr", "seeds"])
            for c in self.cells:
                w.writerow([c.policy1, c.policy2, repr(c.mean_share), repr(c.stderr),
                            len(c.shares)])
        for c in self.cells:
            label = f"{c.policy1}_vs_{c.policy2}"
            for s, traj in enumerate(c.trajectories):
                write_trajectory(out / f"trajectory_{label}_{s}.csv", traj)


def _game_seed(master: int, cell_idx: int, seed_idx: int) -> int:
    return int(np.random.SeedSequence([master, 53, cell_idx, seed_idx]).generate_state(1)[0])


def run_tournament(cells, config: MarketConfig, seeds: int,
                   policy_settings: dict[str, dict] | None = None,
                   threads: int = 1) -> TournamentResult:
    """Play every cell for `seeds` repetitions and average final shares.

    Each (cell, seed) game gets its own derived seed, so results do not
    depend on scheduling; `threads` only bounds the worker pool.
    """
    policy_settings = policy_settings or {}
    for name1, name2 in cells:
        make_policy(name1, **policy_settings.get(name1, {}))
        make_policy(name2, **policy_settings.get(name2, {}))

    def play(job):
        cell_idx, seed_idx = job
        name1, name2 = cells[cell_idx]
        game_cfg = dataclasses.replace(config, seed=_game_seed(config.seed, cell_idx, seed_idx))
        p1 = make_policy(name1, **policy_settings.get(name1, {}))
        p2 = make_policy(name2, **policy_settings.get(name2, {}))
        result = run_game(game_cfg, p1, p2)
        return job, result.final_shares[0], result.trajectory

    jobs = [(c, s) for c in range(len(cells)) for s in range(seeds)]
    results = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for job, share, traj in pool.map(play, jobs):
                results[job] = (share, traj)
    else:
        for job in jobs:
            job, share, traj = play(job)
            results[job] = (share, traj)

    out = []
    for cell_idx, (name1, name2) in enumerate(cells):
        shares = np.array([results[(cell_idx, s)][0] for s in range(seeds)])
        trajs = [results[(cell_idx, s)][1] for s in range(seeds)]
        out.append(CellResult(name1, name2, shares, trajs))
    return TournamentResult(out)


# --- strategy-distance report -------------------------------------------


@dataclass
class DistanceRow:
    entity: int
    lda: float
    uniform: float
    overall_average: float


@dataclass
class DistanceReport:
    rows: list[DistanceRow]

    def means(self) -> tuple[float, float, float]:
        lda = float(np.mean([r.lda for r in self.rows]))
        uni = float(np.mean([r.uniform for r in self.rows]))
        avg = float(np.mean([r.overall_average for r in self.rows]))
        return lda, uni, avg

    def write(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["entity", "w1_lda", "w1_uniform", "w1_overall_average"])
            for r in self.rows:
                w.writerow([r.entity, repr(r.lda), repr(r.uniform), repr(r.overall_average)])
            lda, uni, avg = self.means()
            w.writerow(["mean", repr(lda), repr(uni), repr(avg)])


def strategy_distance_report(theta: StrategyDistribution,
                             truth_counts: np.ndarray,
                             positions=None) -> DistanceReport:
    """Per-entity W1 of the estimate and two baselines against the truth.

    `truth_counts[i]` holds the observed opponent-award counts for
    theta.entities[i]; the overall-average baseline is the count-weighted
    aggregate over all entities.
    """
    truth_counts = np.asarray(truth_counts, dtype=float)
    if truth_counts.shape != theta.probs.shape:
        raise DataError("truth table must align with the strategy estimate")
    totals = truth_counts.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        raise DataError("every entity needs at least one observed opponent award")
    truth = truth_counts / totals
    overall = truth_counts.sum(axis=0) / truth_counts.sum()
    k = theta.probs.shape[1]
    uniform = np.full(k, 1.0 / k)
    rows = []
    for i, entity in enumerate(theta.entities):
        rows.append(DistanceRow(
            entity=int(entity),
            lda=wasserstein1(theta.probs[i], truth[i], positions),
            uniform=wasserstein1(uniform, truth[i], positions),
            overall_average=wasserstein1(overall, truth[i], positions)))
    return DistanceReport(rows)
