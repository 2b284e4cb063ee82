"""Preprocessing for O2O coupon logs.

Turns raw coupon-usage rows into the record schema the inference module
reads: coupon discounts are binned into three levels, the focal merchant's
users are clustered twice (preference groups, then strategy groups inside
each), and every coupon event becomes a binary-usage record.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.cluster import KMeans

from .game import ConfigError, ConsumptionRecord, DataError

O2O_COLUMNS = ["User_id", "Merchant_id", "Coupon_id", "Discount_rate",
               "Distance", "Date_received", "Date"]

_NULLS = {"", "null", "nan", "NaN", "None"}


@dataclass(frozen=True)
class CouponRecord:
    """One raw O2O row: a coupon receipt and/or a purchase."""

    user_id: int
    merchant_id: int
    coupon_id: int | None
    discount_value: float | None   # fraction of price discounted, in [0, 1)
    distance: float | None
    date_received: int | None      # yyyymmdd
    date_used: int | None

    def __post_init__(self):
        if (self.date_used is not None and self.date_received is not None
                and self.date_used < self.date_received):
            raise DataError(f"usage before receipt for user {self.user_id}")


def parse_discount(raw: str) -> float:
    """Discount value from either 'x:y' (y off per x spent) or a price ratio.

    Both map to the fraction of price discounted; 'x:y' gives y/x, a bare
    ratio like '0.9' gives 1 - 0.9.
    """
    raw = raw.strip()
    if ":" in raw:
        x, y = raw.split(":", 1)
        spend, off = float(x), float(y)
        if spend <= 0 or off < 0 or off > spend:
            raise ValueError(f"bad money-off rate {raw!r}")
        return off / spend
    ratio = float(raw)
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"bad ratio rate {raw!r}")
    return 1.0 - ratio


@dataclass
class Quarantine:
    rows: list[tuple[int, str]] = field(default_factory=list)

    def add(self, lineno: int, reason: str) -> None:
        self.rows.append((lineno, reason))

    def __len__(self) -> int:
        return len(self.rows)

    def write(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["line", "reason"])
            w.writerows(self.rows)


def _opt(value) -> str | None:
    s = str(value).strip()
    return None if s in _NULLS else s


def load_o2o(path) -> tuple[list[CouponRecord], Quarantine]:
    """Read the raw CSV; rows that cannot be parsed land in the quarantine."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(df.columns) != O2O_COLUMNS:
        raise DataError(f"{path}: expected columns {O2O_COLUMNS}, got {list(df.columns)}")
    records: list[CouponRecord] = []
    quarantine = Quarantine()
    for i, row in enumerate(df.itertuples(index=False), start=2):
        try:
            coupon = _opt(row.Coupon_id)
            rate = _opt(row.Discount_rate)
            received = _opt(row.Date_received)
            used = _opt(row.Date)
            if coupon is not None and rate is None:
                raise ValueError("coupon without a discount rate")
            if coupon is None and received is None and used is None:
                raise ValueError("row carries neither a coupon nor a purchase")
            distance = _opt(row.Distance)
            records.append(CouponRecord(
                user_id=int(row.User_id),
                merchant_id=int(row.Merchant_id),
                coupon_id=int(float(coupon)) if coupon is not None else None,
                discount_value=parse_discount(rate) if rate is not None else None,
                distance=float(distance) if distance is not None else None,
                date_received=int(received) if received is not None else None,
                date_used=int(used) if used is not None else None))
        except (ValueError, DataError) as e:
            quarantine.add(i, str(e))
    return records, quarantine


# --- coupon levels -------------------------------------------------------


@dataclass(frozen=True)
class CouponLevels:
    """Discount-value tertile binning of a coupon set (levels 1..3)."""

    level_of: dict[int, int]
    thresholds: tuple[float, float]
    degenerate: bool = False

    def award_for(self, coupon_id: int | None) -> int:
        return 0 if coupon_id is None else self.level_of[coupon_id]

    def write(self, path, values: dict[int, float]) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["coupon_id", "discount_value", "level"])
            for cid in sorted(self.level_of):
                w.writerow([cid, repr(values[cid]), self.level_of[cid]])


def bin_coupon_levels(records: list[CouponRecord]) -> CouponLevels:
    """Map each distinct coupon to low/mid/high (1/2/3) by discount tertiles."""
    values: dict[int, float] = {}
    for r in records:
        if r.coupon_id is not None and r.discount_value is not None:
            values.setdefault(r.coupon_id, r.discount_value)
    if not values:
        raise DataError("no coupons to bin")
    arr = np.array(sorted(values.values()))
    q1, q2 = np.quantile(arr, [1 / 3, 2 / 3])
    degenerate = arr.min() == arr.max()
    if degenerate:
        warnings.warn("all coupons share one discount value; binning to a single level")
    levels = {}
    for cid, v in values.items():
        levels[cid] = 1 if v <= q1 else (2 if v <= q2 else 3)
    return CouponLevels(level_of=levels, thresholds=(float(q1), float(q2)),
                        degenerate=degenerate)


# --- clustering ----------------------------------------------------------


def standardize(features: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per dimension; constant dims become zeros."""
    x = np.asarray(features, dtype=float)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - mu) / sd


def kmeans_cluster(features: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k-means++ clustering; deterministic for a fixed seed."""
    x = np.asarray(features, dtype=float)
    if k < 1:
        raise ConfigError("k must be >= 1")
    if len(x) < k:
        raise DataError(f"cannot form {k} clusters from {len(x)} points")
    km = KMeans(n_clusters=k, n_init=10, random_state=seed)
    return km.fit_predict(x)


# --- the two-stage preprocess --------------------------------------------


@dataclass
class GroupAssignment:
    """user -> (preference group, strategy group)."""

    assignment: dict[int, tuple[int, int]]

    def write(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["user_id", "preference_group", "strategy_group"])
            for user in sorted(self.assignment):
                pg, sg = self.assignment[user]
                w.writerow([user, pg, sg])


@dataclass
class PreprocessResult:
    assignments: GroupAssignment
    group_records: list[list[ConsumptionRecord]]   # one list per preference group
    exposure: list[np.ndarray]                     # per group: (strategy groups, 3) counts
    focal_levels: CouponLevels
    focal_values: dict[int, float]
    quarantine: Quarantine
    stats: dict[str, int]

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.assignments.write(out / "assignments.csv")
        self.focal_levels.write(out / "coupon_levels.csv", self.focal_values)
        self.quarantine.write(out / "quarantine.csv")
        from .game import write_records
        for g, recs in enumerate(self.group_records):
            write_records(out / f"records_pg{g}.csv", recs)
            with open(out / f"exposure_pg{g}.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["strategy_group", "level", "count"])
                for sg in range(self.exposure[g].shape[0]):
                    for level in range(3):
                        w.writerow([sg, level + 1, int(self.exposure[g][sg, level])])


def _month_period(record: CouponRecord, base: int) -> int:
    date = record.date_received if record.date_received is not None else record.date_used
    ym = date // 100
    return (ym // 100) * 12 + (ym % 100) - base + 1


def preprocess(records: list[CouponRecord], focal_merchant: int,
               num_preference_groups: int = 4, strategy_group_count: int = 10,
               seed: int = 0, quarantine: Quarantine | None = None) -> PreprocessResult:
    """Two-stage clustering of the focal merchant's users and record emission.

    Stage 1 clusters users on interaction features with the focal merchant
    (receive count, usage rate, mean discount level, mean distance); stage 2
    clusters each preference group on market-wide user features (total
    coupons, overall usage rate, active days). Emitted records carry the
    strategy-group id in the customer column, binary usage counts, and
    demand 1; the month of receipt (1-based from the dataset start) is the
    period.
    """
    focal = [r for r in records if r.merchant_id == focal_merchant]
    if not focal:
        raise DataError(f"merchant {focal_merchant} has no records")
    focal_users = sorted({r.user_id for r in focal})
    levels = bin_coupon_levels(focal)
    focal_values = {r.coupon_id: r.discount_value for r in focal
                    if r.coupon_id is not None}

    dates = [(r.date_received or r.date_used) for r in records
             if (r.date_received or r.date_used)]
    base_ym = min(d // 100 for d in dates)
    base = (base_ym // 100) * 12 + base_ym % 100

    by_user_focal: dict[int, list[CouponRecord]] = {u: [] for u in focal_users}
    for r in focal:
        by_user_focal[r.user_id].append(r)
    by_user_all: dict[int, list[CouponRecord]] = {u: [] for u in focal_users}
    for r in records:
        if r.user_id in by_user_all:
            by_user_all[r.user_id].append(r)

    distances = [r.distance for r in focal if r.distance is not None]
    fill_distance = float(np.median(distances)) if distances else 0.0

    def stage1_features(user: int) -> list[float]:
        rows = by_user_focal[user]
        coupons = [r for r in rows if r.coupon_id is not None]
        received = len(coupons)
        used = sum(1 for r in coupons if r.date_used is not None)
        usage_rate = used / received if received else 0.0
        mean_level = (np.mean([levels.level_of[r.coupon_id] for r in coupons])
                      if coupons else 0.0)
        dist = [r.distance for r in rows if r.distance is not None]
        return [received, usage_rate, float(mean_level),
                float(np.mean(dist)) if dist else fill_distance]

    def stage2_features(user: int) -> list[float]:
        rows = by_user_all[user]
        coupons = [r for r in rows if r.coupon_id is not None]
        used = sum(1 for r in coupons if r.date_used is not None)
        usage_rate = used / len(coupons) if coupons else 0.0
        days = {d for r in rows for d in (r.date_received, r.date_used) if d is not None}
        return [len(coupons), usage_rate, len(days)]

    f1 = standardize(np.array([stage1_features(u) for u in focal_users]))
    pg_labels = kmeans_cluster(f1, num_preference_groups, seed)

    assignment: dict[int, tuple[int, int]] = {}
    group_records: list[list[ConsumptionRecord]] = []
    exposure: list[np.ndarray] = []

    opponent = [r for r in records
                if r.merchant_id != focal_merchant and r.coupon_id is not None]
    opp_levels = bin_coupon_levels(opponent) if opponent else None
    opp_by_user: dict[int, list[int]] = {}
    if opp_levels is not None:
        for r in opponent:
            if r.user_id in by_user_all:
                opp_by_user.setdefault(r.user_id, []).append(opp_levels.level_of[r.coupon_id])

    for g in range(num_preference_groups):
        members = [u for u, lbl in zip(focal_users, pg_labels) if lbl == g]
        f2 = standardize(np.array([stage2_features(u) for u in members]))
        sg_labels = kmeans_cluster(f2, strategy_group_count, seed + 1 + g)
        for u, sg in zip(members, sg_labels):
            assignment[u] = (g, int(sg))

        recs = []
        counts = np.zeros((strategy_group_count, 3), dtype=np.int64)
        for u, sg in zip(members, sg_labels):
            for r in by_user_focal[u]:
                recs.append(ConsumptionRecord(
                    period=_month_period(r, base), customer=int(sg),
                    own_award=levels.award_for(r.coupon_id),
                    count=1 if r.date_used is not None else 0, demand=1))
            for level in opp_by_user.get(u, []):
                counts[sg, level - 1] += 1
        recs.sort(key=lambda r: (r.customer, r.period, r.own_award, -r.count))
        group_records.append(recs)
        exposure.append(counts)

    stats = {
        "focal_records": len(focal),
        "focal_users": len(focal_users),
        "focal_coupon_kinds": len(levels.level_of),
        "quarantined": len(quarantine) if quarantine else 0,
    }
    return PreprocessResult(assignments=GroupAssignment(assignment),
                            group_records=group_records, exposure=exposure,
                            focal_levels=levels, focal_values=focal_values,
                            quarantine=quarantine or Quarantine(), stats=stats)
