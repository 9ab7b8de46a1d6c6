"""System-reliability assessment from expert-elicited data.

Two engines under one roof:

* evidential aggregation -- weighted, possibly incomplete belief
  distributions over a shared grade scale, combined bottom-up through an
  attribute hierarchy (``relfuse.aggregation``);
* empirical Bayes -- prior hyperparameters fitted to multi-unit observation
  data by marginal-likelihood maximization, then conjugate posterior and
  predictive reliability per unit (``relfuse.inference``).

``relfuse.oracles`` holds independent brute-force and quadrature reference
implementations for both, used by the test suite and ``rel validate``.
"""

from .aggregation import (
    AggregationResult,
    CombinationDiagnostics,
    aggregate_tree,
    assign_masses,
    combine_pair,
    finalize,
    fold_attributes,
    normalize_weights,
)
from .beliefs import (
    AggregationConfig,
    AggregationMode,
    AttributeNode,
    BeliefDistribution,
    GradeFrame,
    MassFunction,
    expected_score_interval,
    make_belief,
    make_frame,
    validate_tree,
)
from .errors import (
    InsufficientUnitsError,
    RelfuseError,
    TotalConflictError,
    ValidationError,
)
from .inference import (
    FitResult,
    HyperParams,
    MomentsInit,
    ObservationSet,
    PosteriorParams,
    PredictiveQuery,
    PredictiveTarget,
    PriorFamily,
    Provenance,
    UnitData,
    binomial_unit,
    exponential_unit,
    fit_hyperparams,
    log_marginal,
    log_marginal_grad,
    moments_init,
    poisson_unit,
    posterior,
    posterior_predictive_reliability,
    prior_predictive_reliability,
)

__version__ = "0.1.0"
