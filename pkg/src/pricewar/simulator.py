"""Ground-truth market environment.

Simulates customers whose per-consumption choice between two companies
follows a rescaled logistic in the award-value difference, anchored at a
baseline preference sigma that drifts toward each period's realized usage
rate. Policies only ever see their own side's records.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .game import ConsumptionRecord, MarketConfig, market_share
from .rng import customer_stream

# Usage rates are clamped away from {0, 1} before the preference update so
# sigma stays inside the open interval and the choice curve stays valid.
USAGE_EPS = 1e-3


def sigmoid_preference(d, sigma):
    """Probability of choosing company 1 at award-value difference d.

    A logistic curve rescaled piecewise so it passes through sigma at d = 0
    (both branches agree there), stays strictly increasing, and fills (0, 1).
    Works elementwise on arrays.
    """
    d = np.asarray(d, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0.0) or np.any(sigma >= 1.0):
        raise ValueError("sigma must lie in the open interval (0, 1)")
    base = 1.0 / (1.0 + np.exp(-d)) - 0.5
    scale = np.where(d < 0, sigma, 1.0 - sigma) / 0.5
    out = scale * base + sigma
    if out.ndim == 0:
        return float(out)
    return out


def update_sigma(sigma, usage_rate, gamma):
    """Drift the baseline preference toward the realized usage rate."""
    sigma = np.asarray(sigma, dtype=float)
    u = np.asarray(usage_rate, dtype=float)
    out = (u - sigma) * gamma + sigma
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class CustomerState:
    """One customer's hidden state (never visible to policies)."""

    sigma: float
    group: int
    fixed_demand: int | None = None


@dataclass
class MarketState:
    """Hidden state of the whole market plus company budgets."""

    sigmas: np.ndarray          # (m,) baseline preferences, each in (0, 1)
    groups: np.ndarray          # (m,) customer-group ids
    budgets: np.ndarray         # (2,) remaining budget per company
    fixed_demands: np.ndarray | None = None  # (m,) when demand_mode == "fixed"
    round_idx: int = 0

    @classmethod
    def initial(cls, config: MarketConfig) -> "MarketState":
        m = config.num_customers
        sigmas = np.full(m, config.initial_sigma)
        groups = np.arange(m) // config.customers_per_group
        budgets = np.array([config.budget1, config.budget2], dtype=float)
        fixed = None
        if config.demand_mode == "fixed":
            fixed = np.array([config.demand.sample(customer_stream(config.seed, j, 0))
                              for j in range(m)], dtype=np.int64)
        return cls(sigmas=sigmas, groups=groups, budgets=budgets, fixed_demands=fixed)


@dataclass
class RoundOutcome:
    """Everything that happened in one round, per customer."""

    round_idx: int
    awards1: np.ndarray
    awards2: np.ndarray
    demands: np.ndarray
    counts1: np.ndarray
    counts2: np.ndarray
    budgets_after: np.ndarray
    coerced: tuple[int, int]    # award choices forced to 0 for lack of budget


@dataclass
class RecordLog:
    """Columnar log of one company's visible records across a game."""

    periods: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    customers: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    awards: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    counts: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    demands: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    def __len__(self) -> int:
        return len(self.periods)

    def to_records(self) -> list[ConsumptionRecord]:
        return [ConsumptionRecord(int(t), int(j), int(b), int(c), int(n))
                for t, j, b, c, n in zip(self.periods, self.customers, self.awards,
                                         self.counts, self.demands)]

    def write(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["period", "customer_id", "own_award", "count", "demand"])
            for t, j, b, c, n in zip(self.periods, self.customers, self.awards,
                                     self.counts, self.demands):
                w.writerow([t, j, b, c, n])


@dataclass
class GameResult:
    trajectory: np.ndarray      # (rounds, 2) per-round shares
    final_shares: tuple[float, float]
    log1: RecordLog
    log2: RecordLog
    state: MarketState
    coerced: tuple[int, int]


def _enforce_budget(desired: np.ndarray, costs: np.ndarray, remaining: float) -> tuple[np.ndarray, float, int]:
    """Sequentially coerce unaffordable picks to award 0 (never refused)."""
    actual = np.asarray(desired, dtype=np.int64).copy()
    coerced = 0
    for i in range(len(actual)):
        c = costs[actual[i]]
        if c > remaining:
            actual[i] = 0
            coerced += 1
        else:
            remaining -= c
    return actual, remaining, coerced


def run_round(state: MarketState, config: MarketConfig, policy1, policy2) -> RoundOutcome:
    """Play one round in place: award choices, consumptions, preference drift."""
    m = config.num_customers
    round_idx = state.round_idx + 1
    if config.budget_mode == "per_round":
        state.budgets[:] = (config.budget1, config.budget2)

    desired1 = policy1.choose_awards(round_idx, float(state.budgets[0]))
    desired2 = policy2.choose_awards(round_idx, float(state.budgets[1]))
    costs1 = np.asarray(config.awards1.costs)
    costs2 = np.asarray(config.awards2.costs)
    awards1, rem1, coerced1 = _enforce_budget(desired1, costs1, float(state.budgets[0]))
    awards2, rem2, coerced2 = _enforce_budget(desired2, costs2, float(state.budgets[1]))
    state.budgets[:] = (rem1, rem2)

    values1 = np.asarray(config.awards1.values)
    values2 = np.asarray(config.awards2.values)
    p_choose = sigmoid_preference(values1[awards1] - values2[awards2], state.sigmas)

    demands = np.empty(m, dtype=np.int64)
    counts1 = np.empty(m, dtype=np.int64)
    for j in range(m):
        crng = customer_stream(config.seed, j, round_idx)
        if state.fixed_demands is not None:
            n = int(state.fixed_demands[j])
        else:
            n = int(config.demand.sample(crng))
        demands[j] = n
        counts1[j] = crng.binomial(n, p_choose[j])
    counts2 = demands - counts1

    usage = np.clip(counts1 / demands, USAGE_EPS, 1.0 - USAGE_EPS)
    state.sigmas = update_sigma(state.sigmas, usage, config.updating_rate)
    state.round_idx = round_idx

    outcome = RoundOutcome(round_idx=round_idx, awards1=awards1, awards2=awards2,
                           demands=demands, counts1=counts1, counts2=counts2,
                           budgets_after=state.budgets.copy(),
                           coerced=(coerced1, coerced2))
    policy1.observe_round(round_idx, awards1, counts1, demands)
    policy2.observe_round(round_idx, awards2, counts2, demands)
    return outcome


def run_game(config: MarketConfig, policy1, policy2) -> GameResult:
    """Play a full game and return both companies' visible record logs.

    Deterministic given config.seed: customer randomness comes from
    counter-based per-(customer, round) streams and each policy derives its
    own stream from the same seed.
    """
    m = config.num_customers
    R = config.rounds
    state = MarketState.initial(config)
    policy1.start_game(1, config)
    policy2.start_game(2, config)
    for p in (policy1, policy2):   # oracle policies read the hidden state
        if hasattr(p, "bind_market"):
            p.bind_market(state)

    trajectory = np.zeros((R, 2))
    cols = dict(periods=np.empty(R * m, np.int64), customers=np.empty(R * m, np.int64))
    a1 = np.empty(R * m, np.int64); c1 = np.empty(R * m, np.int64)
    a2 = np.empty(R * m, np.int64); c2 = np.empty(R * m, np.int64)
    dem = np.empty(R * m, np.int64)
    coerced = [0, 0]

    for r in range(R):
        out = run_round(state, config, policy1, policy2)
        pool = float(out.demands.sum())
        trajectory[r, 0] = out.counts1.sum() / pool
        trajectory[r, 1] = out.counts2.sum() / pool
        lo, hi = r * m, (r + 1) * m
        cols["periods"][lo:hi] = out.round_idx
        cols["customers"][lo:hi] = np.arange(m)
        a1[lo:hi] = out.awards1; c1[lo:hi] = out.counts1
        a2[lo:hi] = out.awards2; c2[lo:hi] = out.counts2
        dem[lo:hi] = out.demands
        coerced[0] += out.coerced[0]
        coerced[1] += out.coerced[1]

    log1 = RecordLog(cols["periods"], cols["customers"], a1, c1, dem)
    log2 = RecordLog(cols["periods"].copy(), cols["customers"].copy(), a2, c2, dem.copy())
    if R > 0:
        shares = market_share([c1, c2])
        final = (shares[0], shares[1])
    else:
        final = (0.5, 0.5)
    return GameResult(trajectory=trajectory, final_shares=final, log1=log1, log2=log2,
                      state=state, coerced=(coerced[0], coerced[1]))


def write_trajectory(path, trajectory: np.ndarray) -> None:
    """Share-trajectory CSV: round,share1,share2 (per-round shares)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["round", "share1", "share2"])
        for r, (s1, s2) in enumerate(trajectory, start=1):
            w.writerow([r, repr(float(s1)), repr(float(s2))])
