"""Proximal point method for pointwise-maximum objectives on flat Hadamard geometries."""

from .manifold import (
    EXP_CLAMP,
    ExpOverflowError,
    GeometryError,
    InvalidPointError,
    ManifoldKind,
    MismatchError,
    Point,
    Tangent,
    dist,
    euclidean,
    exp_map,
    from_chart,
    geodesic,
    grad_half_sq_dist,
    inner,
    log_map,
    log_positive,
    norm,
    to_chart,
    transport,
    zero_tangent,
)
from .objective import (
    DomainError,
    MaxObjective,
    ParamSet,
    SubdiffHull,
    active_set,
    clarke_subdiff,
    estimate_sup_lipschitz,
    eval_f,
    gen_dir_derivative,
    hull_distance,
    min_norm_subgradient,
    with_prox_term,
)
from .problems import BUILTIN_NAMES, BuiltinProblem, make_problem, region_samples
from .prox import (
    InnerCapError,
    IterationRecord,
    LambdaBoundError,
    LambdaSchedule,
    LevelGuard,
    LevelSetError,
    ProxConfig,
    Termination,
    Trace,
    prox_step,
    residual,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "EXP_CLAMP",
    "ExpOverflowError",
    "GeometryError",
    "InvalidPointError",
    "ManifoldKind",
    "MismatchError",
    "Point",
    "Tangent",
    "dist",
    "euclidean",
    "exp_map",
    "from_chart",
    "geodesic",
    "grad_half_sq_dist",
    "inner",
    "log_map",
    "log_positive",
    "norm",
    "to_chart",
    "transport",
    "zero_tangent",
    "DomainError",
    "MaxObjective",
    "ParamSet",
    "SubdiffHull",
    "active_set",
    "clarke_subdiff",
    "estimate_sup_lipschitz",
    "eval_f",
    "gen_dir_derivative",
    "hull_distance",
    "min_norm_subgradient",
    "with_prox_term",
    "BUILTIN_NAMES",
    "BuiltinProblem",
    "make_problem",
    "region_samples",
    "InnerCapError",
    "IterationRecord",
    "LambdaBoundError",
    "LambdaSchedule",
    "LevelGuard",
    "LevelSetError",
    "ProxConfig",
    "Termination",
    "Trace",
    "prox_step",
    "residual",
    "solve",
    "__version__",
]
