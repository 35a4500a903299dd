"""Closed-form statistical Minkowski distances for mixtures of conic exponential families."""
from .combinatorics import (
    DEFAULT_TERM_CAP,
    Composition,
    TermBudgetError,
    binomial,
    enumerate_compositions,
    multinomial_coeff_exact,
    multinomial_coeff_log,
)
from .expfam import (
    ConeViolationError,
    Family,
    Kind,
    NaturalParameter,
    ParameterDomainError,
    SupportError,
    from_natural,
    in_cone,
    linear_combination,
    log_density,
    log_partition,
    to_natural,
)
from .minkdist import (
    DistanceKind,
    Metric,
    MixtureModel,
    UnsupportedExponentError,
    closed_form_distance,
    evaluate_distance,
    jensen_diversity,
    log_geometric_integral,
    minkowski_diversity,
    mixture_lp_norm,
    product_expand,
    signed_power_integral,
)
from .signedlog import CancellationError, SignedLogValue

__version__ = "0.1.0"
