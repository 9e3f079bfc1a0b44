"""AZ whiteness test for spatio-temporal signals on dynamic weighted graphs."""

from .graph import (
    DynamicGraph,
    GraphValidationError,
    GraphValidationWarning,
    MultiplexGraph,
    WeightedGraph,
    build_multiplex,
    community_line,
    erdos_renyi,
    generate_graph,
    graph_from_distances,
    khop_augment,
    symmetrize,
    temporal_weight,
    validate,
    w2,
)
from .signals import GraphSignal
from .stats import (
    MissingSignalError,
    SmallSampleWarning,
    StatisticError,
    TestResult,
    az_statistic_dynamic,
    az_statistic_static,
    c_tilde,
    center_median,
    combine_pvalues,
    gaussian_two_sided_p,
    median_sign_test,
    per_feature,
    restrict_to_signal,
    sign_product,
    threshold,
)

__version__ = "0.1.0"
