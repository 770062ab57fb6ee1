"""Robust low-rank time integrators for matrix and Tucker tensor ODEs."""

from .errors import (
    ConfigurationError,
    DimensionMismatchError,
    DivergenceError,
    DlraError,
    GramianSingularError,
    MemoryGuardError,
    RankError,
)
from .lowrank import (
    LowRankMatrix,
    TuckerTensor,
    random_lowrank,
    reconstruct,
    tangent_defect,
    tangent_project,
    truncate_dense,
)
from .matrix_integrators import (
    MatrixStepReport,
    StructureReport,
    bug_step,
    bug_step_modified,
    check_structure,
    integrate,
    ksl_step,
    rk4_factors_step,
    structure_condition_defect,
)
from .problems import (
    Problem,
    ReferenceSolution,
    compute_reference,
    error_frobenius,
    problem_given_matrix,
    problem_imag_schrodinger,
    problem_schrodinger_2d,
    read_reference,
    write_reference,
)
from .substeps import OdeRhs, SubstepConfig, exact_increment, krylov_expm_apply, solve_substep
from .tensor_ops import (
    QRFactors,
    SVDFactors,
    adjoint,
    frobenius_norm,
    matricize,
    mode_product,
    multi_mode_product,
    qr_thin,
    svd_truncate,
    tensorize,
)
from .tucker_integrators import (
    TensorStructureReport,
    TuckerStepReport,
    check_structure_tensor,
    evaluate_ki_rhs,
    permutation_condition_defect,
    permute_tensor,
    tucker_bug_step,
    tucker_integrate,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DimensionMismatchError",
    "DivergenceError",
    "DlraError",
    "GramianSingularError",
    "LowRankMatrix",
    "MatrixStepReport",
    "MemoryGuardError",
    "OdeRhs",
    "Problem",
    "QRFactors",
    "RankError",
    "ReferenceSolution",
    "StructureReport",
    "SVDFactors",
    "SubstepConfig",
    "TensorStructureReport",
    "TuckerStepReport",
    "TuckerTensor",
    "adjoint",
    "bug_step",
    "bug_step_modified",
    "check_structure",
    "check_structure_tensor",
    "compute_reference",
    "error_frobenius",
    "evaluate_ki_rhs",
    "exact_increment",
    "frobenius_norm",
    "integrate",
    "krylov_expm_apply",
    "ksl_step",
    "matricize",
    "mode_product",
    "multi_mode_product",
    "permutation_condition_defect",
    "permute_tensor",
    "problem_given_matrix",
    "problem_imag_schrodinger",
    "problem_schrodinger_2d",
    "qr_thin",
    "random_lowrank",
    "read_reference",
    "reconstruct",
    "rk4_factors_step",
    "solve_substep",
    "structure_condition_defect",
    "svd_truncate",
    "tangent_defect",
    "tangent_project",
    "tensorize",
    "truncate_dense",
    "tucker_bug_step",
    "tucker_integrate",
    "write_reference",
]
