"""Over-parameterized symmetric tensor decomposition by re-initialized
gradient descent, with its vanilla baseline, stuck-point constructions, and
the lazy-training lower bound.

The hot tensor kernels have a compiled backend with a pure-numpy fallback;
``overcp.BACKEND`` says which one is active (force the fallback with
``OVERCP_FORCE_NUMPY=1``).
"""
from .descent import (
    ColumnCollapseError,
    DivergenceError,
    RunMetrics,
    RunOutcome,
    init_params,
    run,
    vanilla_run,
)
from .kernels import BACKEND
from .landscape import (
    bad_local_min_2homo,
    bad_local_min_vanilla,
    certify_stationary,
    global_min_decomposition,
    residual_R,
    vandermonde_rank_one_split,
)
from .lazybound import analytic_lower_bound, figure_curve, mc_orthogonal_projection
from .model import (
    GroundTruth,
    Hyperparams,
    ModelParams,
    desk_hyperparams,
    generate_ground_truth,
    ground_truth_from_decomposition,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ColumnCollapseError",
    "DivergenceError",
    "GroundTruth",
    "Hyperparams",
    "ModelParams",
    "RunMetrics",
    "RunOutcome",
    "analytic_lower_bound",
    "bad_local_min_2homo",
    "bad_local_min_vanilla",
    "certify_stationary",
    "desk_hyperparams",
    "figure_curve",
    "generate_ground_truth",
    "global_min_decomposition",
    "ground_truth_from_decomposition",
    "init_params",
    "mc_orthogonal_projection",
    "residual_R",
    "run",
    "vandermonde_rank_one_split",
    "vanilla_run",
    "__version__",
]
