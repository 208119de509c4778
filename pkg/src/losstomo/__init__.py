"""Loss tomography on multicast trees.

Simulate Bernoulli probe losses on a tree, collect co-observation counts at
internal nodes, estimate path pass rates with the full-likelihood or the
explicit composite estimators and study their asymptotic variances.
"""
from .errors import (AllWeightsZero, CycleDetected, DivisionByZeroPath, IncompleteStats, InvalidData,
                     LeafNode, MultipleRoots, NoRootInRange, OrderOutOfRange, RateOutOfRange,
                     TomographyError, TopologyError)
from .estimators import (Estimate, EstimateSet, EstimatorId, Invalid, NodeEstimate, composite,
                         correspondence_residual, estimate_node, estimate_tree, full_mle, grouped,
                         likelihood_residual, local, local_ratios, parse_estimator, robust_policy,
                         run_estimator, trimmed_composite, weighted_composite)
from .experiment import ExperimentConfig, ExperimentResult, emit_table, preset, run_experiment
from .simulate import ProbeTrace, inject_missing, mar_when, read_trace, simulate, write_trace
from .stats import (NodeStats, ValidityReport, classify_validity, co_observations, confirmed_arrivals,
                    descendant_indicators, node_stats)
from .tree import (LinkRates, PathRates, Tree, build_tree, link_rates_from_paths, load_tree, path_rates,
                   random_tree, save_tree, star_tree, subtree_pass_rates)
from .variance import (VarianceContext, asymptotic_variance, context_from_tree, covariance_matrix,
                       empirical_variance_check, estimator_variance, fit_expansion, full_likelihood_variance,
                       gradient, local_variance, symmetric_context)

__version__ = "0.1.0"
