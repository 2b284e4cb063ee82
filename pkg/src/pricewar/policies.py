"""Award-decision engines.

Three families: a uniform-random baseline, a budget-constrained dynamic
program over inferred preference/strategy estimates, and a small online
Q-learner whose state vector can be augmented with those estimates.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .game import AwardSet, ConfigError, ConsumptionRecord, MarketConfig
from .lda import (InferenceResult, LdaConfig, PreferenceMatrix, StrategyDistribution,
                  expected_bin, run_inference)
from .rng import derive
from .simulator import sigmoid_preference


def random_choose(award_set: AwardSet, remaining_budget: float,
                  rng: np.random.Generator) -> int:
    """Uniform pick among the awards payable from the remaining budget."""
    affordable = award_set.affordable(remaining_budget)
    return affordable[rng.integers(0, len(affordable))]


# --- expected benefit and budget allocation ----------------------------


def expected_usage(pref: PreferenceMatrix) -> np.ndarray:
    """Expected usage fraction per (own award, opponent award).

    Bin distributions are collapsed with bin midpoints (h + 0.5)/acc, which
    is unbiased when usage fractions are uniform within a bin.
    """
    mid = (np.arange(pref.acc) + 0.5) / pref.acc
    return pref.probs @ mid


def _require_aligned(pref: PreferenceMatrix) -> None:
    e = expected_bin(pref)
    if np.any(np.diff(e) > 1e-9):
        raise ConfigError("estimates are not label-aligned; run align_labels first")


def expected_benefit(theta_row: np.ndarray, own_award: int,
                     pref: PreferenceMatrix) -> float:
    """Opponent-strategy-weighted expected usage for offering one award."""
    _require_aligned(pref)
    return float(np.asarray(theta_row) @ expected_usage(pref)[own_award])


def benefit_matrix(theta: StrategyDistribution, pref: PreferenceMatrix) -> np.ndarray:
    """psi[i, j]: expected captured fraction of entity i under own award j."""
    _require_aligned(pref)
    return theta.probs @ expected_usage(pref).T


@dataclass(frozen=True)
class DpAllocation:
    awards: np.ndarray
    objective: float


# Non-integer award costs are scaled by this factor and rounded before the
# budget axis is built, trading one-thousandth-unit cost resolution for an
# integer table.
DP_COST_SCALE = 1000


def dp_allocate(psi: np.ndarray, budget: float, costs) -> DpAllocation:
    """Pick one award per customer maximizing total psi within the budget.

    f(i, k) = max_j f(i-1, k - cost(j)) + psi(i, j), solved over an integer
    budget axis with backtracking; ties go to the cheaper award.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2:
        raise ConfigError("psi must be (customers, awards)")
    m, n_awards = psi.shape
    costs = [float(c) for c in costs]
    if len(costs) != n_awards:
        raise ConfigError("one cost per award required")
    if all(c.is_integer() for c in costs):
        icosts = [int(c) for c in costs]
        k_max = int(budget)
    else:
        icosts = [round(c * DP_COST_SCALE) for c in costs]
        k_max = int(budget * DP_COST_SCALE)
    if budget < 0:
        raise ConfigError("budget must be >= 0")

    f = np.zeros(k_max + 1)
    choice = np.zeros((m, k_max + 1), dtype=np.int16)
    for i in range(m):
        best = f + psi[i, 0]
        pick = np.zeros(k_max + 1, dtype=np.int16)
        for j in range(1, n_awards):
            c = icosts[j]
            if c > k_max:
                continue
            cand = f[:k_max + 1 - c] + psi[i, j]
            better = cand > best[c:]
            best[c:][better] = cand[better]
            pick[c:][better] = j
        f = best
        choice[i] = pick

    awards = np.zeros(m, dtype=np.int64)
    k = k_max
    for i in range(m - 1, -1, -1):
        j = int(choice[i, k])
        awards[i] = j
        k -= icosts[j]
    return DpAllocation(awards=awards, objective=float(f[k_max]))


def write_dp_decisions(path, customer_ids, awards, psi: np.ndarray) -> None:
    """DP decision CSV: customer_id,award,psi."""
    import csv
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["customer_id", "award", "psi"])
        for cid, a in zip(customer_ids, awards):
            w.writerow([cid, int(a), repr(float(psi[cid, int(a)]))])


def reward(count: int, award: int, xi: float, award_set: AwardSet | None = None) -> float:
    """Per-customer feedback: captured consumptions minus weighted award cost."""
    cost = award_set.cost_of(award) if award_set is not None else float(award)
    return float(count) - xi * cost


# --- state features -----------------------------------------------------

VARIANTS = ("dqn", "dqn+p", "dqn+s", "dqn+lda")


@dataclass(frozen=True)
class StateSpec:
    """Layout of the learner's input vector for one variant.

    The vector starts with the last `window` (own award, usage bin) pairs,
    oldest first, zero-padded at the front, both coordinates scaled to [0, 1].
    Depending on the variant it is extended with the flattened group
    preference estimate and/or the customer's strategy estimate.
    """

    variant: str
    window: int = 10
    own_arity: int = 5
    opp_arity: int = 5
    acc: int = 10

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; pick one of {VARIANTS}")
        if self.window < 1:
            raise ConfigError("window must be >= 1")

    @property
    def uses_pref(self) -> bool:
        return self.variant in ("dqn+p", "dqn+lda")

    @property
    def uses_strat(self) -> bool:
        return self.variant in ("dqn+s", "dqn+lda")

    @property
    def length(self) -> int:
        n = 2 * self.window
        if self.uses_pref:
            n += self.own_arity * self.opp_arity * self.acc
        if self.uses_strat:
            n += self.opp_arity
        return n


def build_state(spec: StateSpec, history, pref: np.ndarray | None = None,
                theta: np.ndarray | None = None) -> np.ndarray:
    """Assemble one customer's state vector.

    `history` is a sequence of (own award, bin) pairs, oldest first; only the
    last `spec.window` entries are used and missing ones are zero-padded.
    """
    parts = [np.zeros(2 * spec.window)]
    recent = list(history)[-spec.window:]
    a_scale = max(spec.own_arity - 1, 1)
    h_scale = max(spec.acc - 1, 1)
    offset = spec.window - len(recent)
    for i, (a, h) in enumerate(recent):
        parts[0][2 * (offset + i)] = a / a_scale
        parts[0][2 * (offset + i) + 1] = h / h_scale
    if spec.uses_pref:
        if pref is None:
            raise ConfigError(f"variant {spec.variant!r} needs preference features")
        flat = np.asarray(pref, dtype=float).ravel()
        if flat.size != spec.own_arity * spec.opp_arity * spec.acc:
            raise ConfigError("preference feature block has the wrong size")
        parts.append(flat)
    if spec.uses_strat:
        if theta is None:
            raise ConfigError(f"variant {spec.variant!r} needs strategy features")
        row = np.asarray(theta, dtype=float).ravel()
        if row.size != spec.opp_arity:
            raise ConfigError("strategy feature block has the wrong size")
        parts.append(row)
    return np.concatenate(parts)


# --- Q-learner ----------------------------------------------------------


@dataclass(frozen=True)
class QLearnerConfig:
    """Hyperparameters of the value learner."""

    learning_rate: float = 0.01
    discount: float = 0.9
    replay_capacity: int = 200_000
    batch_size: int = 32
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.2   # schedule finishes after this share of train steps
    hidden_width: int = 512
    reward_weight: float = 0.5      # xi in the reward
    reward_scale: float = 1.0       # linear rescale of training targets; greedy-invariant
    grad_clip: float = 10.0         # global norm; <= 0 disables
    use_target_network: bool = False
    target_sync_every: int = 200

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError("discount must be in [0, 1)")
        if self.replay_capacity <= self.batch_size:
            raise ConfigError("replay capacity must exceed the batch size")
        if self.learning_rate <= 0 or self.hidden_width < 1:
            raise ConfigError("learning rate and hidden width must be positive")


class ReplayBuffer:
    """Ring buffer over transition arrays; grows lazily up to capacity."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = capacity
        self.state_dim = state_dim
        self.size = 0
        self._pos = 0
        self._alloc = 0
        self._states = self._next_states = self._actions = self._rewards = None

    def __len__(self) -> int:
        return self.size

    def _ensure(self, extra: int) -> None:
        need = min(self.capacity, max(self.size + extra, 1024))
        if need <= self._alloc:
            return
        new = max(need, min(self.capacity, self._alloc * 2 if self._alloc else need))
        def grow(arr, dtype, dim=None):
            shape = (new, dim) if dim else (new,)
            out = np.zeros(shape, dtype=dtype)
            if arr is not None:
                out[:self._alloc] = arr
            return out
        self._states = grow(self._states, np.float32, self.state_dim)
        self._next_states = grow(self._next_states, np.float32, self.state_dim)
        self._actions = grow(self._actions, np.int64)
        self._rewards = grow(self._rewards, np.float64)
        self._alloc = new

    def push(self, states, actions, rewards, next_states) -> None:
        states = np.atleast_2d(states)
        n = len(states)
        self._ensure(n)
        idx = (self._pos + np.arange(n)) % self.capacity
        self._states[idx] = states
        self._next_states[idx] = np.atleast_2d(next_states)
        self._actions[idx] = actions
        self._rewards[idx] = rewards
        self._pos = (self._pos + n) % self.capacity
        self.size = min(self.size + n, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch)
        return (self._states[idx].astype(np.float64), self._actions[idx],
                self._rewards[idx], self._next_states[idx].astype(np.float64))


class QLearner:
    """One-hidden-layer Q-value approximator trained by SGD on TD targets."""

    def __init__(self, n_inputs: int, n_actions: int, config: QLearnerConfig,
                 rng: np.random.Generator):
        self.n_inputs = n_inputs
        self.n_actions = n_actions
        self.config = config
        h = config.hidden_width
        self.params = {
            "W1": rng.normal(0.0, np.sqrt(2.0 / n_inputs), size=(n_inputs, h)),
            "b1": np.zeros(h),
            "W2": rng.normal(0.0, np.sqrt(2.0 / h), size=(h, n_actions)),
            "b2": np.zeros(n_actions),
        }
        self._target = None
        self.replay = ReplayBuffer(config.replay_capacity, n_inputs)
        self.train_steps = 0

    def forward(self, states: np.ndarray, params=None) -> np.ndarray:
        p = params or self.params
        x = np.atleast_2d(states)
        hidden = np.maximum(x @ p["W1"] + p["b1"], 0.0)
        return hidden @ p["W2"] + p["b2"]

    def act(self, states: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
        """Batch epsilon-greedy; exploration is uniform over the action set."""
        states = np.atleast_2d(states)
        greedy = np.argmax(self.forward(states), axis=1)
        explore = rng.random(len(states)) < epsilon
        randoms = rng.integers(0, self.n_actions, size=len(states))
        return np.where(explore, randoms, greedy)

    def loss_and_grads(self, states, actions, targets):
        """Half squared TD error on the chosen actions, with parameter grads."""
        p = self.params
        x = np.atleast_2d(states)
        n = len(x)
        z1 = x @ p["W1"] + p["b1"]
        a1 = np.maximum(z1, 0.0)
        q = a1 @ p["W2"] + p["b2"]
        picked = q[np.arange(n), actions]
        err = picked - targets
        loss = 0.5 * float(np.mean(err ** 2))
        dq = np.zeros_like(q)
        dq[np.arange(n), actions] = err / n
        grads = {
            "W2": a1.T @ dq,
            "b2": dq.sum(axis=0),
        }
        da1 = dq @ p["W2"].T
        dz1 = da1 * (z1 > 0.0)
        grads["W1"] = x.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return loss, grads

    def push(self, states, actions, rewards, next_states) -> None:
        self.replay.push(states, actions, rewards, next_states)

    def train_step(self, rng: np.random.Generator) -> float | None:
        """One minibatch SGD step; no-op until the buffer can fill a batch."""
        if len(self.replay) < self.config.batch_size:
            return None
        cfg = self.config
        s, a, r, s2 = self.replay.sample(cfg.batch_size, rng)
        bootstrap_params = self._target if (cfg.use_target_network and self._target) else None
        targets = r * cfg.reward_scale + cfg.discount * self.forward(s2, bootstrap_params).max(axis=1)
        loss, grads = self.loss_and_grads(s, a, targets)
        if cfg.grad_clip > 0:
            norm = np.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
            if norm > cfg.grad_clip:
                scale = cfg.grad_clip / norm
                grads = {k: g * scale for k, g in grads.items()}
        for k in self.params:
            self.params[k] -= cfg.learning_rate * grads[k]
        self.train_steps += 1
        if cfg.use_target_network and self.train_steps % cfg.target_sync_every == 0:
            self._target = {k: v.copy() for k, v in self.params.items()}
        return loss

    def epsilon(self, step: int, total_steps: int) -> float:
        """Linear decay to epsilon_end over the first epsilon_fraction of steps."""
        cfg = self.config
        horizon = max(1.0, cfg.epsilon_fraction * total_steps)
        frac = min(1.0, step / horizon)
        return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac

    # Checkpoint layout: an .npz holding a JSON metadata string under `meta`
    # (config fields, n_inputs, n_actions, train_steps) plus one array per
    # parameter named W1, b1, W2, b2.
    def save(self, path) -> None:
        meta = dict(dataclasses.asdict(self.config), n_inputs=self.n_inputs,
                    n_actions=self.n_actions, train_steps=self.train_steps)
        np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **self.params)

    @classmethod
    def load(cls, path) -> "QLearner":
        data = np.load(path)
        meta = json.loads(bytes(data["meta"]).decode())
        n_inputs = meta.pop("n_inputs")
        n_actions = meta.pop("n_actions")
        train_steps = meta.pop("train_steps")
        learner = cls(n_inputs, n_actions, QLearnerConfig(**meta), derive(0))
        for k in learner.params:
            learner.params[k] = data[k]
        learner.train_steps = train_steps
        return learner


# --- simulator-facing policies ------------------------------------------
#
# A policy for the simulator implements start_game(side, config),
# choose_awards(round_idx, remaining_budget) -> desired awards, and
# observe_round(round_idx, own awards, own counts, demands).

_POLICY_STREAM = 7


class RandomPolicy:
    """Uniform over affordable awards, tracked sequentially within a round."""

    def start_game(self, side: int, config: MarketConfig) -> None:
        self.award_set = config.awards1 if side == 1 else config.awards2
        self.m = config.num_customers
        self.rng = derive(config.seed, _POLICY_STREAM, side)

    def choose_awards(self, round_idx: int, remaining_budget: float) -> np.ndarray:
        awards = np.zeros(self.m, dtype=np.int64)
        budget = remaining_budget
        for j in range(self.m):
            a = random_choose(self.award_set, budget, self.rng)
            awards[j] = a
            budget -= self.award_set.cost_of(a)
        return awards

    def observe_round(self, round_idx, awards, counts, demands) -> None:
        pass


class _RecordBuffer:
    """Rolling per-round observation store for inference-driven policies."""

    def __init__(self, m: int, keep_periods: int):
        self.m = m
        self.keep = keep_periods
        self.rounds: list[tuple[int, np.ndarray, np.ndarray, np.ndarray]] = []

    def add(self, round_idx, awards, counts, demands) -> None:
        self.rounds.append((round_idx, awards.copy(), counts.copy(), demands.copy()))
        if len(self.rounds) > self.keep:
            self.rounds.pop(0)

    def records_for(self, customers: np.ndarray) -> list[ConsumptionRecord]:
        recs = []
        for round_idx, awards, counts, demands in self.rounds:
            for j in customers:
                recs.append(ConsumptionRecord(period=round_idx, customer=int(j),
                                              own_award=int(awards[j]), count=int(counts[j]),
                                              demand=int(demands[j])))
        return recs


class _InferenceMixin:
    """Shared LDA refresh logic: one sampler per customer group."""

    def _init_inference(self, side: int, config: MarketConfig, lda: LdaConfig,
                        refresh_interval: int, window_periods: int):
        self.market = config
        self.side = side
        self.own_set = config.awards1 if side == 1 else config.awards2
        self.opp_set = config.awards2 if side == 1 else config.awards1
        self.lda = dataclasses.replace(lda, opp_arity=self.opp_set.size)
        self.refresh_interval = refresh_interval
        self.buffer = _RecordBuffer(config.num_customers, window_periods)
        self.group_pref: list[np.ndarray] = [
            np.full((self.own_set.size, self.opp_set.size, lda.acc), 1.0 / lda.acc)
            for _ in range(config.num_customer_groups)]
        self.theta = np.full((config.num_customers, self.opp_set.size),
                             1.0 / self.opp_set.size)
        self._refresh_count = 0

    def _maybe_refresh(self, round_idx: int) -> None:
        if not self.buffer.rounds or round_idx % self.refresh_interval != 0:
            return
        cfg = self.market
        for g in range(cfg.num_customer_groups):
            customers = np.arange(g * cfg.customers_per_group,
                                  (g + 1) * cfg.customers_per_group)
            recs = self.buffer.records_for(customers)
            lda_cfg = dataclasses.replace(
                self.lda, seed=int(derive(cfg.seed, _POLICY_STREAM, self.side, 31,
                                          self._refresh_count, g).integers(2**31)))
            result = run_inference(recs, lda_cfg, own_arity=self.own_set.size,
                                   collect_diagnostics=False)
            self.group_pref[g] = result.pref.probs
            for row, entity in enumerate(result.theta.entities):
                self.theta[entity] = result.theta.probs[row]
        self._refresh_count += 1


class DpPolicy(_InferenceMixin):
    """Re-solves the award knapsack each round over inferred distributions.

    A small exploration rate keeps every own-award row populated in the
    record window; without it the sampler sees no data for unplayed awards
    and their preference rows decay to the prior.
    """

    def __init__(self, lda: LdaConfig | None = None, refresh_interval: int = 10,
                 window_periods: int = 20, explore_rate: float = 0.05):
        self._lda = lda or LdaConfig(acc=10, opp_arity=2, sweeps=120, burn_in=60,
                                     thin=6, chains=1)
        self._refresh_interval = refresh_interval
        self._window = window_periods
        self.explore_rate = explore_rate

    def start_game(self, side: int, config: MarketConfig) -> None:
        self._init_inference(side, config, self._lda, self._refresh_interval, self._window)
        self.rng = derive(config.seed, _POLICY_STREAM, side)
        self.m = config.num_customers
        self.last_psi = None
        self._demand_sum = np.zeros(self.m)
        self._demand_rounds = 0

    def _psi(self) -> np.ndarray:
        g_usage = [expected_usage(PreferenceMatrix(p)) for p in self.group_pref]
        psi = np.empty((self.m, self.own_set.size))
        per = self.market.customers_per_group
        for g, usage in enumerate(g_usage):
            rows = slice(g * per, (g + 1) * per)
            psi[rows] = self.theta[rows] @ usage.T
        return psi

    def _utilities(self, psi: np.ndarray) -> np.ndarray:
        # The objective is market share, so a customer's expected captured
        # fraction is weighted by their observed mean demand.
        if self._demand_rounds == 0:
            return psi
        return psi * (self._demand_sum / self._demand_rounds)[:, None]

    def choose_awards(self, round_idx: int, remaining_budget: float) -> np.ndarray:
        awards = np.zeros(self.m, dtype=np.int64)
        budget = remaining_budget
        explore = self.rng.random(self.m) < self.explore_rate
        for j in np.flatnonzero(explore):
            a = random_choose(self.own_set, budget, self.rng)
            awards[j] = a
            budget -= self.own_set.cost_of(a)
        if self._refresh_count == 0:
            # nothing inferred yet: spread random awards like the baseline
            for j in np.flatnonzero(~explore):
                a = random_choose(self.own_set, budget, self.rng)
                awards[j] = a
                budget -= self.own_set.cost_of(a)
            return awards
        psi = self._psi()
        self.last_psi = psi
        rest = np.flatnonzero(~explore)
        allocation = dp_allocate(self._utilities(psi)[rest], budget, self.own_set.costs)
        awards[rest] = allocation.awards
        return awards

    def observe_round(self, round_idx, awards, counts, demands) -> None:
        self._demand_sum += demands
        self._demand_rounds += 1
        self.buffer.add(round_idx, awards, counts, demands)
        self._maybe_refresh(round_idx)


class OracleDpPolicy:
    """Diagnostic-only DP fed the simulator's hidden preferences.

    psi comes straight from the true choice curve at the current sigmas,
    assuming a uniform-random opponent; available only in simulation via
    bind_market.
    """

    def start_game(self, side: int, config: MarketConfig) -> None:
        self.side = side
        self.market = config
        self.own_set = config.awards1 if side == 1 else config.awards2
        self.opp_set = config.awards2 if side == 1 else config.awards1
        self.m = config.num_customers
        self._state = None

    def bind_market(self, state) -> None:
        self._state = state

    def choose_awards(self, round_idx: int, remaining_budget: float) -> np.ndarray:
        if self._state is None:
            raise ConfigError("OracleDpPolicy needs bind_market(state) before play")
        own_vals = np.asarray(self.own_set.values)
        opp_vals = np.asarray(self.opp_set.values)
        sig = self._state.sigmas[:, None, None]
        d = own_vals[None, :, None] - opp_vals[None, None, :]
        capture = sigmoid_preference(d, sig)          # (m, B1, B2)
        if self.side == 2:
            capture = 1.0 - capture
        psi = capture.mean(axis=2)                    # uniform opponent
        if self._state.fixed_demands is not None:
            psi = psi * self._state.fixed_demands[:, None]
        return dp_allocate(psi, remaining_budget, self.own_set.costs).awards

    def observe_round(self, round_idx, awards, counts, demands) -> None:
        pass


class QPolicy(_InferenceMixin):
    """Online deep-Q policy; state features depend on the variant."""

    def __init__(self, variant: str = "dqn", qconfig: QLearnerConfig | None = None,
                 lda: LdaConfig | None = None, refresh_interval: int = 10,
                 window_periods: int = 20, history_window: int = 10,
                 train_steps_per_round: int = 10, acc: int = 10):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; pick one of {VARIANTS}")
        self.variant = variant
        self.qconfig = qconfig or QLearnerConfig()
        self._lda = lda or LdaConfig(acc=acc, opp_arity=2, sweeps=120, burn_in=60,
                                     thin=6, chains=1)
        self._refresh_interval = refresh_interval
        self._window = window_periods
        self.history_window = history_window
        self.train_steps_per_round = train_steps_per_round
        self.acc = acc

    def start_game(self, side: int, config: MarketConfig) -> None:
        self._init_inference(side, config, self._lda, self._refresh_interval, self._window)
        self.rng = derive(config.seed, _POLICY_STREAM, side)
        self.m = config.num_customers
        self.spec = StateSpec(self.variant, window=self.history_window,
                              own_arity=self.own_set.size, opp_arity=self.opp_set.size,
                              acc=self.acc)
        self.learner = QLearner(self.spec.length, self.own_set.size, self.qconfig,
                                derive(config.seed, _POLICY_STREAM, side, 1))
        self.total_train_steps = max(1, config.rounds * self.train_steps_per_round)
        # rolling history of (award, bin) pairs per customer, scaled lazily
        self.hist = np.zeros((self.m, self.history_window, 2), dtype=np.int64)
        self.hist_len = np.zeros(self.m, dtype=np.int64)
        self._last_states = None
        self._needs_lda = self.spec.uses_pref or self.spec.uses_strat

    def _states(self) -> np.ndarray:
        m, W = self.m, self.history_window
        a_scale = max(self.own_set.size - 1, 1)
        h_scale = max(self.acc - 1, 1)
        out = np.zeros((m, self.spec.length))
        hist = out[:, :2 * W].reshape(m, W, 2)
        hist[:, :, 0] = self.hist[:, :, 0] / a_scale
        hist[:, :, 1] = self.hist[:, :, 1] / h_scale
        fresh = self.hist_len < W          # zero out the padded prefix
        for j in np.flatnonzero(fresh):
            hist[j, :W - self.hist_len[j]] = 0.0
        col = 2 * W
        if self.spec.uses_pref:
            width = self.own_set.size * self.opp_set.size * self.acc
            per = self.market.customers_per_group
            for g in range(self.market.num_customer_groups):
                out[g * per:(g + 1) * per, col:col + width] = self.group_pref[g].ravel()
            col += width
        if self.spec.uses_strat:
            out[:, col:col + self.opp_set.size] = self.theta
        return out

    def choose_awards(self, round_idx: int, remaining_budget: float) -> np.ndarray:
        states = self._states()
        eps = self.learner.epsilon(self.learner.train_steps, self.total_train_steps)
        actions = self.learner.act(states, eps, self.rng)
        self._last_states = states
        return actions

    def observe_round(self, round_idx, awards, counts, demands) -> None:
        bins = np.minimum(counts * self.acc // demands, self.acc - 1)
        self.hist = np.roll(self.hist, -1, axis=1)
        self.hist[:, -1, 0] = awards
        self.hist[:, -1, 1] = bins
        self.hist_len = np.minimum(self.hist_len + 1, self.history_window)
        if self._needs_lda:
            self.buffer.add(round_idx, awards, counts, demands)
            self._maybe_refresh(round_idx)
        rewards = counts - self.qconfig.reward_weight * np.asarray(self.own_set.costs)[awards]
        next_states = self._states()
        if self._last_states is not None:
            self.learner.push(self._last_states, awards, rewards, next_states)
        for _ in range(self.train_steps_per_round):
            self.learner.train_step(self.rng)


def make_policy(name: str, **kwargs):
    """Construct a tournament policy from its variant name."""
    key = name.strip().lower()
    if key == "random":
        return RandomPolicy()
    if key == "dp":
        return DpPolicy(**kwargs)
    if key == "dp-oracle":
        return OracleDpPolicy()
    if key in VARIANTS:
        return QPolicy(variant=key, **kwargs)
    raise ConfigError(f"unknown policy {name!r}")
