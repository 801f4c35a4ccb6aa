"""Hierarchical multiscale decompositions on periodic grids.

Solves ``T x = f`` for ``T`` a divergence, curl or identity by summing
minimizers of ``||u||_B + lam_j [r_{j-1} - T u]_p`` over a geometric ladder
of scales, with certificates for every level.
"""

from .grid import (
    ComponentMismatchError,
    Field,
    GridMismatchError,
    NormSpec,
    TorusGrid,
    compute_norm,
    inner_product,
    project_zero_mean,
)
from .hierarchy import (
    PRESETS,
    Decomposition,
    HierLevel,
    InadmissibleScaleError,
    ProblemSpec,
    ScaleLadder,
    default_lambda1,
    energy_ledger,
    ledger_record,
    make_problem,
    reconstruct,
    run_hierarchy,
    telescoping_errors,
)
from .jmin import (
    DataTerm,
    JMinResult,
    SolverParams,
    evaluate_candidate,
    minimize_j,
    oracle_solve,
    prox_banach,
    prox_data_power,
)
from .operators import (
    CompatibilityError,
    CompatibilityProjection,
    OperatorSpec,
    UnsupportedCombinationError,
    apply_dual,
    apply_forward,
    dual_norm,
    dual_norm_bounds,
)

__all__ = [
    "ComponentMismatchError",
    "Field",
    "GridMismatchError",
    "NormSpec",
    "TorusGrid",
    "compute_norm",
    "inner_product",
    "project_zero_mean",
    "PRESETS",
    "Decomposition",
    "HierLevel",
    "InadmissibleScaleError",
    "ProblemSpec",
    "ScaleLadder",
    "default_lambda1",
    "energy_ledger",
    "ledger_record",
    "make_problem",
    "reconstruct",
    "run_hierarchy",
    "telescoping_errors",
    "DataTerm",
    "JMinResult",
    "SolverParams",
    "evaluate_candidate",
    "minimize_j",
    "oracle_solve",
    "prox_banach",
    "prox_data_power",
    "CompatibilityError",
    "CompatibilityProjection",
    "OperatorSpec",
    "UnsupportedCombinationError",
    "apply_dual",
    "apply_forward",
    "dual_norm",
    "dual_norm_bounds",
]
