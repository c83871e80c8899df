"""Exact fairness verification for linear classifiers.

Computes maximum/minimum probability of positive prediction over sensitive
groups with a stochastic subset-sum dynamic program, optionally conditioned
on a Bayesian network of feature correlations, and derives group and causal
fairness metrics plus fairness influence functions from those probabilities.
"""

from .bayesnet import BayesNet, Cpt, Dag, fit_mle, learn_structure_k2, topo_sort
from .correlated import CorrelatedInstance, order_for_bn, solve_correlated
from .errors import (FvgmError, InputError, OrderingError, ResourceLimitError,
                     StructureError)
from .metrics import (FairnessReport, GroupResult, disparate_impact,
                      equalized_odds, max_min_ppv,
                      path_specific_causal_fairness, statistical_parity,
                      verify_epsilon)
from .s3p import (EXISTS, FORALL, Quantifier, QuantifiedVariable, S3PInstance,
                  S3PSolution, SolveStats, WeightBounds, brute_force,
                  random_q, reorder, solve, weight_bounds)

__version__ = "0.1.0"

__all__ = [
    "EXISTS", "FORALL", "Quantifier", "QuantifiedVariable", "S3PInstance",
    "S3PSolution", "SolveStats", "WeightBounds", "brute_force", "random_q",
    "reorder", "solve", "weight_bounds",
    "BayesNet", "Cpt", "Dag", "fit_mle", "learn_structure_k2", "topo_sort",
    "CorrelatedInstance", "order_for_bn", "solve_correlated",
    "FairnessReport", "GroupResult", "disparate_impact", "equalized_odds",
    "max_min_ppv", "path_specific_causal_fairness", "statistical_parity",
    "verify_epsilon",
    "FvgmError", "InputError", "OrderingError", "ResourceLimitError",
    "StructureError",
]
