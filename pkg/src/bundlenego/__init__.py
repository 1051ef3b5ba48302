"""Bundle negotiation with learned recommendations.

A shop bargains over bundle contents and price with simulated customers and
recommends neighboring bundles, ordered by one of three estimators (MU, S, B).
"""

from .background import (GainsTable, LambdaSchedule, LearningEstimator, OracleEstimator,
                         RandomEstimator, record_exchange, softmax_order)
from .bundles import Bundle, ConfigurationError, all_bundles, hamming, neighborhood
from .experiment import ExperimentConfig, RunMetrics, compare, run_experiment
from .foreground import Recommender
from .negotiation import Bargainer, Offer, Role, StrategyParams, run_session
from .preferences import (CustomerValuation, PopulationParams, PreferencePopulation, ShopValuation,
                          best_bundles, sample_population, sample_shop)

__version__ = "0.1.0"

__all__ = [
    "Bargainer", "Bundle", "ConfigurationError", "CustomerValuation", "ExperimentConfig",
    "GainsTable", "LambdaSchedule", "LearningEstimator", "Offer", "OracleEstimator",
    "PopulationParams", "PreferencePopulation", "RandomEstimator", "Recommender", "Role",
    "RunMetrics", "ShopValuation", "StrategyParams", "all_bundles", "best_bundles", "compare",
    "hamming", "neighborhood", "record_exchange", "run_experiment", "run_session",
    "sample_population", "sample_shop", "softmax_order",
]
