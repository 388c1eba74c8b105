"""Spatially clustered compositional regression with graph-weighted fusion penalties."""

from .admm import FitResult, FusionProblem, SolverConfig, fit, mcp_penalty, objective_value
from .clustering import (
    ClusterLabels,
    clustering_accuracy,
    coefficient_bias,
    coefficient_mse,
    coefficient_mse_full,
    extract_clusters,
    group_by_tolerance,
    rand_index,
    relative_cluster_count,
)
from .compositional import (
    TransformedDesign,
    build_design,
    helmert_projection,
    log_transform,
    recover_compositional_coefficients,
)
from .graph import (
    SpatialGraph,
    all_pairs_distance,
    graph_from_centroids,
    graph_from_edge_list,
    lattice_graph,
    read_edge_csv,
    spatial_weights,
)
from .selection import PathResult, auto_lambda_max, lambda_grid, modified_bic, solution_path
from .simulation import SimulationDesign, generate, get_design, run_comparison

__version__ = "0.1.0"
