"""Two-company price-war laboratory.

Simulate award competition over a customer pool, infer hidden customer
preferences and opponent strategies from one company's own records with a
collapsed Gibbs sampler, and feed the estimates into dynamic-programming
and reinforcement-learning award policies.
"""

from .game import (AwardSet, ConfigError, ConsumptionRecord, CorruptedStateError,
                   DataError, DemandDistribution, EstimationError, ImputationError,
                   InvalidRecordError, MarketConfig, PriceWarError,
                   UndefinedShareError, discretize, market_share, read_records,
                   write_records)
from .simulator import (GameResult, MarketState, RoundOutcome, run_game, run_round,
                        sigmoid_preference, update_sigma)
from .lda import (GibbsState, InferenceResult, LdaConfig, PreferenceMatrix,
                  StrategyDistribution, align_labels, conditional_posterior, estimate,
                  generate_synthetic, gibbs_sweep, impute_demand, initialize_state,
                  predict_bin_distribution, run_inference)
from .policies import (DpPolicy, OracleDpPolicy, QLearner, QLearnerConfig, QPolicy,
                       RandomPolicy, StateSpec, build_state, dp_allocate,
                       expected_benefit, make_policy, random_choose, reward)
from .evaluation import (negative_log_likelihood, run_tournament,
                         strategy_distance_report, wasserstein1)
from .pipeline import (CouponRecord, GroupAssignment, bin_coupon_levels,
                       kmeans_cluster, load_o2o, preprocess)

__version__ = "0.1.0"
