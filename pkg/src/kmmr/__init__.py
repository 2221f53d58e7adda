"""Kernel maximum moment restriction estimation with instrument-space selection.

The package fits IV regression models by minimizing the kernelized
maximum-moment-restriction risk and selects the instrument space (an RKHS
candidate identified by a kernel and its hyperparameters) by combining a
rank-based identification test with an effective-dimension information
criterion.  A CLI harness reproduces the desk-scale simulation studies.
"""

from .datagen import Dataset, ScenarioSpec, generate, true_function_value
from .errors import (
    ConfigError,
    DegenerateKernel,
    DegenerateSample,
    DimensionError,
    DomainError,
    KmmrError,
    NumericalFailure,
)
from .itc import CalibrationSpec, ItcReport, f_matrix, itc, lambda_hat, null_calibration, test_statistic
from .keic import KeicReport, cv_risk, effective_dimension, keic
from .kernels import (
    CANDIDATE_GRID,
    GramMatrix,
    KernelSpec,
    candidate_grid,
    eval_kernel,
    gram,
    median_heuristic_bandwidth,
    silverman_bandwidth,
)
from .mmr import FitOptions, FitResult, MmrProblem, empirical_risk, fit_gradient, fit_linear, risk_gradient
from .models import (
    MlpModel,
    ModelConfig,
    PolyModel,
    basis_matrix,
    parse_model_config,
    residual,
    residual_grad,
    residual_grad_matrix,
)
from .numerics import (
    EigenPair,
    SymMatrix,
    chi2_quantile_1df,
    derive_seed,
    kron_vec,
    rng_stream,
    solve_spd,
    substream,
    sym_eigen,
    vec,
)
from .selection import (
    CandidateRecord,
    SelectionResult,
    SelectionSeeds,
    baseline_select,
    candidate_table_csv,
    decide_from_table,
    evaluate_mse,
    lisc_select,
)

__version__ = "0.1.0"
