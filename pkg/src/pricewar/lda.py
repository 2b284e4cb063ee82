"""Inference of hidden opponent awards and customer preferences.

Observed records (own award, usage bin) are explained by a mixture in which
an unobserved opponent award is drawn per record from a per-customer
categorical, and the usage bin from a categorical indexed by the award pair.
Both categoricals carry symmetric Dirichlet priors and are integrated out;
a collapsed Gibbs sampler walks the per-record opponent-award assignments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numba import njit
from scipy.special import gammaln

from .game import (ConsumptionRecord, DemandDistribution, ConfigError, DataError,
                   EstimationError, CorruptedStateError, ImputationError, discretize)
from .rng import derive


@dataclass(frozen=True)
class LdaConfig:
    """Sampler configuration."""

    acc: int = 10               # usage-fraction bins
    opp_arity: int = 2          # assumed size of the opponent's award menu
    alpha: float = 1.0          # Dirichlet concentration, strategy side
    beta: float = 1.0           # Dirichlet concentration, preference side
    sweeps: int = 2000
    burn_in: int = 1000
    thin: int = 10
    chains: int = 4
    seed: int = 0
    reimpute_each_sweep: bool = False

    def __post_init__(self):
        if self.acc < 2:
            raise ConfigError("acc must be >= 2")
        if self.opp_arity < 2:
            raise ConfigError("opp_arity must be >= 2")
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("alpha and beta must be positive")
        if not 0 <= self.burn_in < self.sweeps:
            raise ConfigError("need 0 <= burn_in < sweeps")
        if self.thin < 1 or self.chains < 1:
            raise ConfigError("thin and chains must be >= 1")


@dataclass(frozen=True)
class PreferenceMatrix:
    """Per (own award, opponent award): categorical over usage bins."""

    probs: np.ndarray           # (|B1|, |B2|, acc), rows sum to 1

    def __post_init__(self):
        p = self.probs
        if p.ndim != 3 or np.any(p < 0) or not np.allclose(p.sum(axis=2), 1.0, atol=1e-9):
            raise ValueError("preference rows must be distributions over bins")

    @property
    def num_own(self) -> int:
        return self.probs.shape[0]

    @property
    def num_opp(self) -> int:
        return self.probs.shape[1]

    @property
    def acc(self) -> int:
        return self.probs.shape[2]


@dataclass(frozen=True)
class StrategyDistribution:
    """Per customer (or strategy group): categorical over opponent awards."""

    probs: np.ndarray           # (entities, |B2|), rows sum to 1
    entities: tuple[int, ...]   # original customer/group ids, row order

    def __post_init__(self):
        p = self.probs
        if p.ndim != 2 or len(self.entities) != p.shape[0]:
            raise ValueError("need one probability row per entity")
        if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("strategy rows must be distributions")

    def row(self, entity: int) -> np.ndarray:
        return self.probs[self.entities.index(entity)]


class TableSnapshot(NamedTuple):
    """Frozen copy of the four count tables at one retained sweep."""

    n_hk: np.ndarray
    n_k: np.ndarray
    n_jk: np.ndarray
    n_j: np.ndarray


@dataclass
class GibbsState:
    """Mutable sampler state: record data, assignments, and count tables.

    Count-table identities (checked by `check_consistency`):
    n_hk.sum over bins == n_k, n_jk.sum over awards == n_j, and both
    groupings count every record exactly once.
    """

    b1_idx: np.ndarray
    bin_idx: np.ndarray
    cust_idx: np.ndarray
    counts: np.ndarray
    demands: np.ndarray
    demand_observed: np.ndarray
    assignments: np.ndarray
    n_hk: np.ndarray
    n_k: np.ndarray
    n_jk: np.ndarray
    n_j: np.ndarray
    entity_ids: tuple[int, ...]
    acc: int
    alpha: float
    beta: float

    @property
    def num_records(self) -> int:
        return len(self.assignments)

    @property
    def opp_arity(self) -> int:
        return self.n_jk.shape[1]

    def snapshot(self) -> TableSnapshot:
        return TableSnapshot(self.n_hk.copy(), self.n_k.copy(),
                             self.n_jk.copy(), self.n_j.copy())

    def check_consistency(self) -> None:
        ok = (np.all(self.n_hk >= 0) and np.all(self.n_jk >= 0)
              and np.array_equal(self.n_hk.sum(axis=2), self.n_k)
              and np.array_equal(self.n_jk.sum(axis=1), self.n_j)
              and self.n_k.sum() == self.num_records
              and self.n_j.sum() == self.num_records)
        if not ok:
            raise CorruptedStateError("count tables inconsistent with assignments")


def impute_demand(count: int, demand_dist: DemandDistribution,
                  rng: np.random.Generator) -> int:
    """Draw a total demand compatible with an observed count.

    Rejection-samples the demand distribution until the draw reaches the
    count, i.e. samples from the distribution conditioned on n >= count.
    """
    if count > demand_dist.max_support:
        raise ImputationError(
            f"count {count} exceeds the demand distribution's support "
            f"(max {demand_dist.max_support})")
    while True:
        n = int(demand_dist.sample(rng))
        if n >= count:
            return n


def _record_arrays(records: Sequence[ConsumptionRecord]):
    periods = np.array([r.period for r in records], dtype=np.int64)
    customers = np.array([r.customer for r in records], dtype=np.int64)
    awards = np.array([r.own_award for r in records], dtype=np.int64)
    counts = np.array([r.count for r in records], dtype=np.int64)
    demands = np.array([-1 if r.demand is None else r.demand for r in records], dtype=np.int64)
    return periods, customers, awards, counts, demands


def initialize_state(records: Sequence[ConsumptionRecord], config: LdaConfig,
                     rng: np.random.Generator,
                     theta_groups: dict[int, int] | None = None,
                     demand_dist: DemandDistribution | None = None,
                     own_arity: int | None = None) -> GibbsState:
    """Build a GibbsState from records, imputing any missing demands.

    Records are visited in a canonical order (sorted by customer, period,
    award, count) so the input file's row order never affects the chain.
    When `theta_groups` maps customers to strategy groups, the strategy
    side is estimated per group instead of per customer.
    """
    if not records:
        raise DataError("cannot initialize the sampler from zero records")
    periods, customers, awards, counts, demands = _record_arrays(records)
    order = np.lexsort((counts, awards, periods, customers))
    periods, customers, awards = periods[order], customers[order], awards[order]
    counts, demands = counts[order], demands[order]

    if theta_groups is not None:
        try:
            thetas = np.array([theta_groups[int(c)] for c in customers], dtype=np.int64)
        except KeyError as e:
            raise DataError(f"customer {e} missing from the strategy-group map") from e
    else:
        thetas = customers
    entity_ids, cust_idx = np.unique(thetas, return_inverse=True)

    observed = demands >= 0
    if not observed.all():
        if demand_dist is None:
            raise DataError("records without demand require a demand distribution to impute from")
        for i in np.flatnonzero(~observed):
            demands[i] = impute_demand(int(counts[i]), demand_dist, rng)

    bins = np.array([discretize(int(c), int(n), config.acc)
                     for c, n in zip(counts, demands)], dtype=np.int64)

    n_own = int(awards.max()) + 1 if own_arity is None else own_arity
    if awards.max() >= n_own:
        raise DataError(f"own award {int(awards.max())} outside arity {n_own}")
    n_opp = config.opp_arity
    assignments = rng.integers(0, n_opp, size=len(bins))

    state = GibbsState(
        b1_idx=awards, bin_idx=bins, cust_idx=cust_idx, counts=counts,
        demands=demands, demand_observed=observed, assignments=assignments,
        n_hk=np.zeros((n_own, n_opp, config.acc), np.int64),
        n_k=np.zeros((n_own, n_opp), np.int64),
        n_jk=np.zeros((len(entity_ids), n_opp), np.int64),
        n_j=np.zeros(len(entity_ids), np.int64),
        entity_ids=tuple(int(e) for e in entity_ids),
        acc=config.acc, alpha=config.alpha, beta=config.beta)
    np.add.at(state.n_hk, (awards, assignments, bins), 1)
    np.add.at(state.n_k, (awards, assignments), 1)
    np.add.at(state.n_jk, (cust_idx, assignments), 1)
    np.add.at(state.n_j, cust_idx, 1)
    return state


def conditional_posterior(state: GibbsState, record: int) -> np.ndarray:
    """Assignment distribution for one record already removed from the tables.

    weight(k) = (N_hk + beta)/(N_k + acc*beta) * (N_jk + alpha)/(N_j + |B2|*alpha)
    evaluated at the record's (own award, bin, customer), then normalized.
    """
    b1, h, j = state.b1_idx[record], state.bin_idx[record], state.cust_idx[record]
    if state.n_hk[b1, :, h].min() < 0 or state.n_jk[j].min() < 0:
        raise CorruptedStateError("negative count: record was not removed cleanly")
    k_arity = state.opp_arity
    w = ((state.n_hk[b1, :, h] + state.beta) / (state.n_k[b1, :] + state.acc * state.beta)
         * (state.n_jk[j] + state.alpha) / (state.n_j[j] + k_arity * state.alpha))
    return w / w.sum()


@njit(cache=True, nogil=True)
def _sweep_kernel(assign, b1_idx, bin_idx, cust_idx, n_hk, n_k, n_jk, n_j,
                  alpha, beta, uniforms, weights):
    n_opp = n_jk.shape[1]
    acc = n_hk.shape[2]
    for i in range(assign.shape[0]):
        b1 = b1_idx[i]
        h = bin_idx[i]
        j = cust_idx[i]
        k_old = assign[i]
        n_hk[b1, k_old, h] -= 1
        n_k[b1, k_old] -= 1
        n_jk[j, k_old] -= 1
        n_j[j] -= 1
        total = 0.0
        for k in range(n_opp):
            w = ((n_hk[b1, k, h] + beta) / (n_k[b1, k] + acc * beta)
                 * (n_jk[j, k] + alpha) / (n_j[j] + n_opp * alpha))
            weights[k] = w
            total += w
        r = uniforms[i] * total
        cum = 0.0
        k_new = n_opp - 1
        for k in range(n_opp):
            cum += weights[k]
            if r < cum:
                k_new = k
                break
        assign[i] = k_new
        n_hk[b1, k_new, h] += 1
        n_k[b1, k_new] += 1
        n_jk[j, k_new] += 1
        n_j[j] += 1


def gibbs_sweep(state: GibbsState, rng: np.random.Generator) -> GibbsState:
    """Resample every record's opponent-award assignment once, in place."""
    uniforms = rng.random(state.num_records)
    weights = np.empty(state.opp_arity)
    _sweep_kernel(state.assignments, state.b1_idx, state.bin_idx, state.cust_idx,
                  state.n_hk, state.n_k, state.n_jk, state.n_j,
                  state.alpha, state.beta, uniforms, weights)
    return state


def _python_sweep(state: GibbsState, uniforms: np.ndarray) -> None:
    # Slow reference used to cross-check the compiled kernel in tests.
    for i in range(state.num_records):
        b1, h, j = state.b1_idx[i], state.bin_idx[i], state.cust_idx[i]
        k_old = state.assignments[i]
        state.n_hk[b1, k_old, h] -= 1
        state.n_k[b1, k_old] -= 1
        state.n_jk[j, k_old] -= 1
        state.n_j[j] -= 1
        probs = conditional_posterior(state, i)
        k_new = int(np.searchsorted(np.cumsum(probs), uniforms[i], side="right"))
        k_new = min(k_new, state.opp_arity - 1)
        state.assignments[i] = k_new
        state.n_hk[b1, k_new, h] += 1
        state.n_k[b1, k_new] += 1
        state.n_jk[j, k_new] += 1
        state.n_j[j] += 1


def _reimpute(state: GibbsState, demand_dist: DemandDistribution,
              rng: np.random.Generator) -> None:
    for i in np.flatnonzero(~state.demand_observed):
        b1, j, k = state.b1_idx[i], state.cust_idx[i], state.assignments[i]
        h_old = state.bin_idx[i]
        n = impute_demand(int(state.counts[i]), demand_dist, rng)
        h_new = discretize(int(state.counts[i]), n, state.acc)
        state.demands[i] = n
        if h_new != h_old:
            state.bin_idx[i] = h_new
            state.n_hk[b1, k, h_old] -= 1
            state.n_hk[b1, k, h_new] += 1


def log_joint(state: GibbsState) -> float:
    """Unnormalized collapsed log joint of assignments and bins (diagnostic)."""
    a, b = state.alpha, state.beta
    acc, k_arity = state.acc, state.opp_arity
    pref_part = (gammaln(acc * b) - gammaln(state.n_k + acc * b)
                 + (gammaln(state.n_hk + b) - gammaln(b)).sum(axis=2)).sum()
    strat_part = (gammaln(k_arity * a) - gammaln(state.n_j + k_arity * a)
                  + (gammaln(state.n_jk + a) - gammaln(a)).sum(axis=1)).sum()
    return float(pref_part + strat_part)


def estimate(state: GibbsState,
             samples: Sequence[TableSnapshot] | None = None
             ) -> tuple[PreferenceMatrix, StrategyDistribution]:
    """Posterior-mean point estimates from retained count-table snapshots."""
    if samples is None:
        samples = [state.snapshot()]
    if len(samples) == 0:
        raise EstimationError("no retained samples to estimate from")
    acc, k_arity = state.acc, state.opp_arity
    pref = np.zeros_like(state.n_hk, dtype=float)
    theta = np.zeros_like(state.n_jk, dtype=float)
    for s in samples:
        pref += (s.n_hk + state.beta) / (s.n_k + acc * state.beta)[:, :, None]
        theta += (s.n_jk + state.alpha) / (s.n_j + k_arity * state.alpha)[:, None]
    pref /= pref.sum(axis=2, keepdims=True)
    theta /= theta.sum(axis=1, keepdims=True)
    return (PreferenceMatrix(pref),
            StrategyDistribution(theta, state.entity_ids))


def expected_bin(pref: PreferenceMatrix) -> np.ndarray:
    """Per opponent label: expected bin index, averaged over own awards."""
    bins = np.arange(pref.acc)
    return (pref.probs * bins).sum(axis=2).mean(axis=0)


def align_labels(pref: PreferenceMatrix, theta: StrategyDistribution
                 ) -> tuple[PreferenceMatrix, StrategyDistribution, np.ndarray]:
    """Fix label switching by sorting opponent labels.

    Higher opponent awards depress own usage, so labels are permuted to make
    the expected bin non-increasing; ties keep their original order. Returns
    the permutation as well (position k holds the original label).
    """
    e = expected_bin(pref)
    perm = np.argsort(-e, kind="stable")
    return (PreferenceMatrix(pref.probs[:, perm, :]),
            StrategyDistribution(theta.probs[:, perm], theta.entities),
            perm)


def predict_bin_distribution(pref: PreferenceMatrix, theta_row: np.ndarray,
                             b1: int) -> np.ndarray:
    """Mixture over opponent awards: distribution of the usage bin given b1."""
    return np.asarray(theta_row) @ pref.probs[b1]


@dataclass
class ChainResult:
    pref: PreferenceMatrix
    theta: StrategyDistribution
    perm: np.ndarray
    log_joints: np.ndarray      # (sweeps,) when diagnostics were collected
    trace: np.ndarray | None = None  # encoded assignment vectors per sweep


@dataclass
class InferenceResult:
    """Merged, label-aligned estimates plus per-chain results."""

    pref: PreferenceMatrix
    theta: StrategyDistribution
    chains: list[ChainResult] = field(default_factory=list)

    def diagnostics_rows(self):
        """Rows for the chain,sweep,log_joint CSV."""
        for ci, ch in enumerate(self.chains):
            for sweep, lj in enumerate(ch.log_joints, start=1):
                yield ci, sweep, lj


def run_inference(records: Sequence[ConsumptionRecord], config: LdaConfig,
                  theta_groups: dict[int, int] | None = None,
                  demand_dist: DemandDistribution | None = None,
                  own_arity: int | None = None,
                  collect_diagnostics: bool = True,
                  collect_trace: bool = False,
                  threads: int = 1) -> InferenceResult:
    """Run all chains, align labels per chain, and average the estimates.

    Chains are independent (own state, own stream) and may run on a thread
    pool; results are merged in chain order, so the thread count never
    changes the output.
    """
    def run_chain(chain: int) -> ChainResult:
        rng = derive(config.seed, 101, chain)
        state = initialize_state(records, config, rng, theta_groups=theta_groups,
                                 demand_dist=demand_dist, own_arity=own_arity)
        snapshots: list[TableSnapshot] = []
        log_joints = np.zeros(config.sweeps) if collect_diagnostics else np.zeros(0)
        trace = np.zeros(config.sweeps, dtype=np.int64) if collect_trace else None
        if collect_trace and config.opp_arity ** state.num_records > 2**62:
            raise ConfigError("assignment trace only supported for tiny problems")
        encode = config.opp_arity ** np.arange(state.num_records) if collect_trace else None
        for sweep in range(config.sweeps):
            if config.reimpute_each_sweep and not state.demand_observed.all():
                _reimpute(state, demand_dist, rng)
            gibbs_sweep(state, rng)
            if collect_diagnostics:
                log_joints[sweep] = log_joint(state)
            if collect_trace:
                trace[sweep] = int(state.assignments @ encode)
            retained = sweep >= config.burn_in and (sweep - config.burn_in + 1) % config.thin == 0
            if retained:
                snapshots.append(state.snapshot())
        state.check_consistency()
        if not snapshots:   # short runs: fall back to the final state
            snapshots.append(state.snapshot())
        pref, theta = estimate(state, snapshots)
        pref, theta, perm = align_labels(pref, theta)
        return ChainResult(pref, theta, perm, log_joints, trace)

    if threads > 1 and config.chains > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chain_results = list(pool.map(run_chain, range(config.chains)))
    else:
        chain_results = [run_chain(c) for c in range(config.chains)]

    pref_probs = np.mean([c.pref.probs for c in chain_results], axis=0)
    theta_probs = np.mean([c.theta.probs for c in chain_results], axis=0)
    pref_probs /= pref_probs.sum(axis=2, keepdims=True)
    theta_probs /= theta_probs.sum(axis=1, keepdims=True)
    return InferenceResult(pref=PreferenceMatrix(pref_probs),
                           theta=StrategyDistribution(theta_probs, chain_results[0].theta.entities),
                           chains=chain_results)


# --- synthetic data ----------------------------------------------------


@dataclass
class SyntheticData:
    """Records plus the hidden truth that generated them."""

    records: list[ConsumptionRecord]
    hidden_awards: np.ndarray   # opponent award per record
    hidden_bins: np.ndarray     # drawn usage bin per record


def _realize_count(h: int, n: int, acc: int, rng: np.random.Generator) -> int:
    """Pick a count whose bin is h, or the nearest achievable bin for tiny n."""
    counts = np.arange(n + 1)
    bins = np.minimum(counts * acc // n, acc - 1)
    dist = np.abs(bins - h)
    candidates = counts[dist == dist.min()]
    return int(candidates[rng.integers(0, len(candidates))])


def generate_synthetic(theta: StrategyDistribution, pref: PreferenceMatrix,
                       demand_dist: DemandDistribution,
                       own_policy: np.ndarray | Callable[[np.random.Generator, int, int], int],
                       periods: int, rng: np.random.Generator) -> SyntheticData:
    """Draw records from the generative model, keeping the hidden draws.

    `own_policy` is either a probability vector over own awards or a callable
    (rng, customer, period) -> award.
    """
    acc = pref.acc
    n_opp = pref.num_opp
    if theta.probs.shape[1] != n_opp:
        raise ConfigError("theta and preference matrix disagree on opponent arity")
    own_probs = None if callable(own_policy) else np.asarray(own_policy, dtype=float)
    if own_probs is not None and len(own_probs) != pref.num_own:
        raise ConfigError("own_policy length must match the preference matrix")

    records, hidden_b2, hidden_h = [], [], []
    for row, customer in enumerate(theta.entities):
        for t in range(1, periods + 1):
            b2 = int(rng.choice(n_opp, p=theta.probs[row]))
            if own_probs is None:
                b1 = int(own_policy(rng, customer, t))
            else:
                b1 = int(rng.choice(pref.num_own, p=own_probs))
            n = int(demand_dist.sample(rng))
            h = int(rng.choice(acc, p=pref.probs[b1, b2]))
            c = _realize_count(h, n, acc, rng)
            records.append(ConsumptionRecord(period=t, customer=int(customer),
                                             own_award=b1, count=c, demand=n))
            hidden_b2.append(b2)
            hidden_h.append(h)
    return SyntheticData(records=records,
                         hidden_awards=np.array(hidden_b2, dtype=np.int64),
                         hidden_bins=np.array(hidden_h, dtype=np.int64))


# --- CSV emitters ------------------------------------------------------


def write_preference(path, pref: PreferenceMatrix) -> None:
    import csv
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["b1", "b2", "bin", "prob"])
        for b1 in range(pref.num_own):
            for b2 in range(pref.num_opp):
                for h in range(pref.acc):
                    w.writerow([b1, b2, h, repr(float(pref.probs[b1, b2, h]))])


def read_preference(path) -> PreferenceMatrix:
    import csv
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["b1", "b2", "bin", "prob"]:
            raise DataError(f"{path}: not a preference CSV")
        for row in reader:
            rows.append((int(row[0]), int(row[1]), int(row[2]), float(row[3])))
    if not rows:
        raise DataError(f"{path}: empty preference CSV")
    n1 = max(r[0] for r in rows) + 1
    n2 = max(r[1] for r in rows) + 1
    acc = max(r[2] for r in rows) + 1
    probs = np.zeros((n1, n2, acc))
    for b1, b2, h, p in rows:
        probs[b1, b2, h] = p
    return PreferenceMatrix(probs)


def write_strategy(path, theta: StrategyDistribution) -> None:
    import csv
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["customer_or_group", "b2", "prob"])
        for row, entity in enumerate(theta.entities):
            for k in range(theta.probs.shape[1]):
                w.writerow([entity, k, repr(float(theta.probs[row, k]))])


def read_strategy(path) -> StrategyDistribution:
    import csv
    data: dict[int, dict[int, float]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["customer_or_group", "b2", "prob"]:
            raise DataError(f"{path}: not a strategy CSV")
        for row in reader:
            data.setdefault(int(row[0]), {})[int(row[1])] = float(row[2])
    if not data:
        raise DataError(f"{path}: empty strategy CSV")
    entities = tuple(sorted(data))
    arity = max(max(d) for d in data.values()) + 1
    probs = np.zeros((len(entities), arity))
    for i, e in enumerate(entities):
        for k, p in data[e].items():
            probs[i, k] = p
    return StrategyDistribution(probs, entities)


def write_diagnostics(path, result: InferenceResult) -> None:
    import csv
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["chain", "sweep", "log_joint"])
        for chain, sweep, lj in result.diagnostics_rows():
            w.writerow([chain, sweep, repr(float(lj))])
