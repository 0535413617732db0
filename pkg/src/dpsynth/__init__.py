"""Differentially private synthetic data from Bayesian synthesizers.

Likelihood weighting (pseudo posterior) and likelihood censoring turn a beta
or beta-regression synthesizer into a release mechanism with a computable
Lipschitz bound and ``epsilon = 2 * Delta`` guarantee.
"""

__version__ = "0.1.0"

from .harness import ResultsTable, SimulationPlan, run_plan, summarize
from .mechanisms import (
    LipschitzSummary,
    MechanismKind,
    PrivacySpec,
    SynthesisPipeline,
    WeightVector,
    compute_weights,
    lipschitz_summary,
    perturbed_histogram,
    run_mechanism,
    scale_weights,
    truncate_weights_e,
)
from .model import (
    BetaParams,
    BetaRegressionParams,
    BetaRegressionSynthesizer,
    BetaSynthesizer,
    beta_loglik,
    beta_regression_loglik,
    censored_contribution,
    log_prior,
    predictive_sample,
)
from .sampler import FitFailedError, McmcConfig, PosteriorDraws, fit, map_point
from .utility import UtilityReport, ecdf_distances, point_statistics, utility_report
