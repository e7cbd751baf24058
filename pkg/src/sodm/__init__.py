"""Scalable optimal margin distribution machine.

A kernelized dual coordinate-descent solver, a distribution-aware
stratified partitioner, a hierarchical merge/warm-start trainer, a
distributed-SVRG accelerator for linear kernels, and brute-force oracles
that verify the approximation bounds on small instances.
"""

from .data import (
    DataError,
    Dataset,
    FeatureScaling,
    Instance,
    LabelError,
    ParseError,
    apply_scaling,
    normalize,
    parse_libsvm,
    serialize_libsvm,
    split,
)
from .hierarchy import ConfigError, LevelReport, TrainConfig, train
from .kernels import KernelSpec, eval_kernel, linear_kernel, q_entry, rbf_kernel, rkhs_distance_sq
from .oracle import (
    BoundReport,
    OracleError,
    brute_force_solve,
    finite_diff_check,
    theorem1_check,
    theorem2_check,
)
from .partition import (
    PartitionDiagnostics,
    PartitionError,
    PartitionPlan,
    assign_stratums,
    build_plan,
    diagnostics,
    make_partitions,
    select_landmarks,
)
from .solver import (
    DualState,
    HyperParams,
    KktReport,
    Model,
    SolveReport,
    coordinate_update,
    dual_objective,
    grad_coordinate,
    h_diag,
    kkt_residuals,
    load_model,
    model_from_json,
    model_to_json,
    primal_objective,
    recover_decision,
    save_model,
    solve_local,
)
from .svrg import (
    SvrgConfig,
    UnsupportedConfigError,
    dsvrg_train,
    full_gradient,
    instance_gradient,
)

__version__ = "0.1.0"
