"""Coarse-median geometry on finite instances: hyperbolic cones over bounded
metric spaces, coloured covers and their tree embeddings, quasitrees of
metric spaces, and cubulation inside products of trees."""

from .cone import (
    ConeGraph,
    NetHierarchy,
    build_cone,
    build_nets,
    rescale,
    tree_boundary_instance,
    visualize,
)
from .covers import (
    ColouredCoverSequence,
    RootedForest,
    build_covers,
    build_trees,
    embed_product,
    map_fc,
    uhat,
    verify_cover_conditions,
    verify_hat_lemmas,
)
from .errors import ConditionError, ParameterError, ResourceError, StructuralError
from .experiment import ExperimentConfig, run_experiment
from .median import (
    ConvexSubgraph,
    MedianGraph,
    TreeProduct,
    box_product,
    interval_intersection,
    verify_median_graph,
)
from .metric import (
    FiniteMetricSpace,
    GraphSpace,
    PointMap,
    QIReport,
    check_metric,
    coarse_median,
    distortion,
    four_point_delta,
    geodesic,
    hausdorff,
    quasimedian_defect,
)
from .pipeline import (
    CubulationResult,
    approximate_finite_sets,
    convexity_correspondence,
    cubulate,
    recubulate,
)
from .projection import (
    ProjectionFamily,
    build_qtms,
    distance_formula_check,
    grid_lines,
    perturb_distances,
    relevant_set,
    tree_axes,
    tripod_lines,
    verify_projection_axioms,
)

__version__ = "0.1.0"
