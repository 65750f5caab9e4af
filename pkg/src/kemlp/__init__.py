"""Joint inference over a main classifier and rule-based auxiliary sensors."""

from .errors import (EnumerationTooLargeError, HeaderMismatchError, InvalidArgumentError, KemlpError,
                     NumericalOverflowError, ParseError, SchemaError, TrainingDivergedError,
                     UnsupportedShapeError)
from .graph import (AuxModel, Dist, Example, GraphSpec, Kind, SensorData, Weights, class_scores, delta,
                    factor_value, infer, posterior, predict)
from .simulator import (WorldConfig, clean_robust_split, exact_weighted_accuracy, monte_carlo_accuracy,
                        sample_dataset)
from .theory import (BoundReport, RateEnvelope, RateProfile, bound_report, convergence_bound, envelopes,
                     expected_margin, gamma_combined_truth_rate, homogeneous_bound, main_weighted_accuracy,
                     mu_block, mu_main, optimal_weights_homogeneous, proposition_bound,
                     sufficient_condition, variance_bound, weight_bounds, weighted_accuracy)
from .training import (TrainConfig, augment_adversarial, negative_log_likelihood, nll_gradient,
                       train_weights)

__version__ = "0.1.0"

__all__ = [
    "augment_adversarial", "AuxModel", "bound_report", "BoundReport", "class_scores",
    "clean_robust_split", "convergence_bound", "delta", "Dist", "EnumerationTooLargeError",
    "envelopes", "exact_weighted_accuracy", "Example", "expected_margin", "factor_value",
    "gamma_combined_truth_rate", "GraphSpec", "HeaderMismatchError", "homogeneous_bound", "infer",
    "InvalidArgumentError", "KemlpError", "Kind", "main_weighted_accuracy", "monte_carlo_accuracy",
    "mu_block", "mu_main", "negative_log_likelihood", "nll_gradient", "NumericalOverflowError",
    "optimal_weights_homogeneous", "ParseError", "posterior", "predict", "proposition_bound",
    "RateEnvelope", "RateProfile", "sample_dataset", "SchemaError", "SensorData",
    "sufficient_condition", "train_weights", "TrainConfig", "TrainingDivergedError",
    "UnsupportedShapeError", "variance_bound", "weight_bounds", "weighted_accuracy", "Weights",
    "WorldConfig",
]
