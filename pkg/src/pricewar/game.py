"""Core domain types for the two-company award game.

Awards are small integer indices (0 = no award); money and utility semantics
live in cost/value tables. A company only ever sees its own consumption
records, which is what every other module consumes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class PriceWarError(Exception):
    """Base class for all library errors."""


class ConfigError(PriceWarError):
    """Invalid configuration or incompatible component wiring."""


class DataError(PriceWarError):
    """Invalid, missing, or malformed input data."""


class InvalidRecordError(DataError):
    """A consumption record violates its invariants."""


class UndefinedShareError(DataError):
    """Market share requested over an empty consumption pool."""


class ImputationError(DataError):
    """Demand imputation cannot satisfy count <= demand."""


class EstimationError(PriceWarError):
    """Estimator invoked without any retained samples."""


class CorruptedStateError(PriceWarError):
    """Sampler count tables are internally inconsistent."""


@dataclass(frozen=True)
class AwardSet:
    """Ordered award menu for one company.

    Award 0 always means "no award" with zero cost and zero value; cost and
    value must be strictly increasing from index 1 on.
    """

    costs: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.costs) != len(self.values) or len(self.costs) < 1:
            raise ConfigError("award set needs matching, non-empty cost and value tables")
        if self.costs[0] != 0 or self.values[0] != 0:
            raise ConfigError("award 0 must have cost 0 and value 0")
        for name, table in (("cost", self.costs), ("value", self.values)):
            for a in range(2, len(table)):
                if table[a] <= table[a - 1]:
                    raise ConfigError(f"{name} table must be strictly increasing from award 1")

    @classmethod
    def linear(cls, size: int) -> "AwardSet":
        """Menu {0..size-1} with cost(x) = value(x) = x."""
        if size < 1:
            raise ConfigError("award set size must be >= 1")
        idx = tuple(float(a) for a in range(size))
        return cls(costs=idx, values=idx)

    @property
    def size(self) -> int:
        return len(self.costs)

    def cost_of(self, award: int) -> float:
        return self.costs[award]

    def value_of(self, award: int) -> float:
        return self.values[award]

    def affordable(self, budget: float) -> list[int]:
        """Awards payable from `budget`; award 0 is always included."""
        return [a for a, c in enumerate(self.costs) if c <= budget]


@dataclass(frozen=True)
class ConsumptionRecord:
    """One customer-period observation from one company's own books."""

    period: int
    customer: int
    own_award: int
    count: int
    demand: int | None = None

    def __post_init__(self):
        if self.period < 1:
            raise InvalidRecordError(f"period must be >= 1, got {self.period}")
        if self.count < 0:
            raise InvalidRecordError(f"count must be >= 0, got {self.count}")
        if self.own_award < 0:
            raise InvalidRecordError(f"own_award must be >= 0, got {self.own_award}")
        if self.demand is not None and self.count > self.demand:
            raise InvalidRecordError(
                f"count {self.count} exceeds demand {self.demand} "
                f"(customer {self.customer}, period {self.period})"
            )


@dataclass(frozen=True)
class DemandDistribution:
    """Distribution of per-period consumption totals on integer support."""

    support: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probs) or not self.support:
            raise ConfigError("demand distribution needs matching, non-empty support and probs")
        if min(self.support) < 1:
            raise ConfigError("demand support must be >= 1")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ConfigError("demand probs must be non-negative and sum to 1")

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "DemandDistribution":
        if not 1 <= lo <= hi:
            raise ConfigError(f"need 1 <= lo <= hi, got [{lo}, {hi}]")
        n = hi - lo + 1
        return cls(tuple(range(lo, hi + 1)), tuple(1.0 / n for _ in range(n)))

    @property
    def max_support(self) -> int:
        return max(self.support)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw demand values; the uniform-support case avoids choice() overhead."""
        lo, hi = self.support[0], self.support[-1]
        if len(self.support) == hi - lo + 1 and len(set(self.probs)) == 1:
            return rng.integers(lo, hi + 1) if size is None else rng.integers(lo, hi + 1, size)
        out = rng.choice(np.asarray(self.support), size=size, p=np.asarray(self.probs))
        return int(out) if size is None else out


@dataclass(frozen=True)
class MarketConfig:
    """Full description of one simulated game."""

    num_customer_groups: int = 10
    customers_per_group: int = 1000
    rounds: int = 1000
    budget1: float = 20000.0
    budget2: float = 20000.0
    budget_mode: str = "horizon"  # "horizon": one pot for the whole game; "per_round": pot resets
    awards1: AwardSet = field(default_factory=lambda: AwardSet.linear(5))
    awards2: AwardSet = field(default_factory=lambda: AwardSet.linear(5))
    demand: DemandDistribution = field(default_factory=lambda: DemandDistribution.uniform(1, 100))
    demand_mode: str = "redraw"  # "redraw" each round or "fixed" per customer
    updating_rate: float = 0.5
    initial_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.num_customer_groups < 1 or self.customers_per_group < 1:
            raise ConfigError("need at least one group and one customer per group")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.budget1 < 0 or self.budget2 < 0:
            raise ConfigError("budgets must be >= 0")
        if self.budget_mode not in ("horizon", "per_round"):
            raise ConfigError(f"unknown budget_mode {self.budget_mode!r}")
        if self.demand_mode not in ("redraw", "fixed"):
            raise ConfigError(f"unknown demand_mode {self.demand_mode!r}")
        if not 0.0 < self.updating_rate <= 1.0:
            raise ConfigError("updating_rate must be in (0, 1]")
        if not 0.0 < self.initial_sigma < 1.0:
            raise ConfigError("initial_sigma must be in (0, 1)")

    @property
    def num_customers(self) -> int:
        return self.num_customer_groups * self.customers_per_group

    def group_of(self, customer: int) -> int:
        return customer // self.customers_per_group


def discretize(count: int, demand: int, acc: int) -> int:
    """Map a usage fraction count/demand onto one of `acc` bins.

    Bin = floor(count/demand * acc), clamped to acc-1 so that full usage
    (count == demand) lands in the top bin instead of falling off the range.
    """
    if acc < 2:
        raise ConfigError(f"acc must be >= 2, got {acc}")
    if demand < 1:
        raise InvalidRecordError(f"demand must be >= 1, got {demand}")
    if count < 0 or count > demand:
        raise InvalidRecordError(f"count must be in [0, demand], got {count}/{demand}")
    return min(count * acc // demand, acc - 1)


def market_share(captured: list[list[int]] | np.ndarray) -> list[float]:
    """Fraction of the total consumption pool captured by each company.

    `captured[i]` lists the consumption counts captured by company i; the
    pool is the sum over all companies.
    """
    totals = [float(np.sum(np.asarray(c, dtype=np.int64))) for c in captured]
    pool = sum(totals)
    if pool <= 0:
        raise UndefinedShareError("no consumptions in the pool; shares undefined")
    return [t / pool for t in totals]


# --- record CSV schema -------------------------------------------------
#
# One row per customer-period: period,customer_id,own_award,count,demand
# with demand left empty when unobserved. This file layout is the contract
# between the simulator, the inference module, and the data pipeline.

RECORD_HEADER = ["period", "customer_id", "own_award", "count", "demand"]


def write_records(path, records: list[ConsumptionRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RECORD_HEADER)
        for r in records:
            w.writerow([r.period, r.customer, r.own_award, r.count,
                        "" if r.demand is None else r.demand])


def read_records(path) -> list[ConsumptionRecord]:
    records = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != RECORD_HEADER:
            raise DataError(f"{path}: expected header {RECORD_HEADER}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            try:
                records.append(ConsumptionRecord(
                    period=int(row[0]), customer=int(row[1]), own_award=int(row[2]),
                    count=int(row[3]), demand=int(row[4]) if row[4] != "" else None))
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
    return records
