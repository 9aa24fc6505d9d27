"""Exact and pruned changepoint search, marginal-likelihood costs, reconstruction."""
from .marginal import (
    DegenerateSegmentError,
    GaussianMeanMarginalCost,
    MarginalCost,
    assign_queries,
    joint_log_probability,
    marginal_cost,
    reconstruct,
    segment_seed,
)
from .search import (
    CostFunction,
    PeltConfig,
    Segmentation,
    TableCost,
    optimal_partition,
    pelt_segment,
    segments_of,
)
