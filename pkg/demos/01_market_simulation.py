#!/usr/bin/env python3
"""Simulate a small two-company award war and inspect what each side sees.

Two companies hand out awards to the same customer pool every round. Each
customer splits their consumptions between the companies according to a
preference curve anchored at a baseline that drifts toward whoever served
them more. Companies only observe their own records.
"""

import numpy as np

from pricewar import DemandDistribution, MarketConfig, RandomPolicy, run_game
from pricewar.simulator import sigmoid_preference

# The choice curve: probability of picking company 1 given the award-value
# difference d, for a few baseline preferences sigma.
print("choice curve p(choose company 1):")
print("   d:  " + "  ".join(f"{d:+d}" for d in range(-4, 5)))
for sigma in (0.2, 0.5, 0.8):
    row = [sigmoid_preference(float(d), sigma) for d in range(-4, 5)]
    print(f"sigma={sigma}: " + " ".join(f"{p:.2f}" for p in row))

# A desk-scale market: 5 groups x 40 customers, both sides picking awards
# uniformly at random under a per-round budget.
config = MarketConfig(num_customer_groups=5, customers_per_group=40, rounds=60,
                      budget1=400.0, budget2=400.0, budget_mode="per_round",
                      demand=DemandDistribution.uniform(1, 100), seed=42)
result = run_game(config, RandomPolicy(), RandomPolicy())

print(f"\nfinal shares after {config.rounds} rounds: "
      f"company1={result.final_shares[0]:.3f}, company2={result.final_shares[1]:.3f}")
print("per-round share of company 1 (every 10th round):",
      np.round(result.trajectory[::10, 0], 3))

# Baselines drift apart even in a symmetric game: consistent luck compounds.
sigmas = result.state.sigmas
print(f"\nbaseline preferences after the game: mean={sigmas.mean():.3f}, "
      f"std={sigmas.std():.3f}, polarized (<0.1 or >0.9): "
      f"{np.mean((sigmas < 0.1) | (sigmas > 0.9)):.0%}")

# What company 1 actually gets to keep: its own record log.
print("\nfirst rows of company 1's record log (period, customer, award, count, demand):")
for i in range(5):
    print(" ", result.log1.periods[i], result.log1.customers[i],
          result.log1.awards[i], result.log1.counts[i], result.log1.demands[i])
