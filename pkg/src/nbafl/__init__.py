"""Differentially private federated averaging testbed.

Simulates noising-before-aggregation federated training on certified
synthetic problems, evaluates the geometric and additive convergence upper
bounds, and numerically audits every inequality step that connects the
per-round analysis to those closed forms.
"""

from .audit import (
    HOLD_SLACK,
    STATUSES,
    STEP_IDS,
    AuditReport,
    EmptySampleError,
    FingerprintMismatchError,
    StepEntry,
    SuiteCase,
    SuiteResult,
    build_report,
    check_eq4_add,
    check_lemma2,
    check_pl,
    check_substitution,
    classify_lambda2_sign,
    compare_final,
    evaluate_case,
    evaluate_suite,
    make_violation_suite,
    report_from_json,
    substitution_samples_from,
)
from .bounds import (
    BOUND_VARIANTS,
    UNROLL_ROUTES,
    BoundSeries,
    NoiseMoments,
    SingularContractionError,
    corrected_bound,
    corrected_series,
    erroneous_series,
    erroneous_step,
    one_round_step,
    original_bound,
    original_series,
    paper_noise_moments,
    unroll,
)
from .constants import (
    LAMBDA1_VARIANTS,
    P_SINGULARITY_TOL,
    AssumptionParams,
    DerivedConstants,
    PrivacyConfig,
    derive_c_from_delta,
    derive_constants,
    sensitivity,
)
from .flsim import (
    TRAJECTORY_COLUMNS,
    FLState,
    LogisticProblem,
    NonFiniteModelError,
    OptimumSolveError,
    QuadraticProblem,
    Trajectory,
    TrajectoryRecord,
    certify,
    make_logistic,
    make_quadratic,
    nbafl_round,
    noiseless_norm_envelope,
    read_trajectory_csv,
    run_training,
    write_trajectory_csv,
)
from .noise import (
    NOISE_KINDS,
    EmpiricalMoments,
    NoiseModel,
    aggregate_view,
    exact_norm_mean,
    make_noise_model,
    mc_moments,
    sample_noise,
)

__all__ = [
    "AssumptionParams",
    "AuditReport",
    "BOUND_VARIANTS",
    "BoundSeries",
    "DerivedConstants",
    "EmpiricalMoments",
    "EmptySampleError",
    "FLState",
    "FingerprintMismatchError",
    "HOLD_SLACK",
    "LAMBDA1_VARIANTS",
    "LogisticProblem",
    "NOISE_KINDS",
    "NoiseModel",
    "NoiseMoments",
    "NonFiniteModelError",
    "OptimumSolveError",
    "P_SINGULARITY_TOL",
    "PrivacyConfig",
    "QuadraticProblem",
    "STATUSES",
    "STEP_IDS",
    "SingularContractionError",
    "StepEntry",
    "SuiteCase",
    "SuiteResult",
    "TRAJECTORY_COLUMNS",
    "Trajectory",
    "TrajectoryRecord",
    "UNROLL_ROUTES",
    "aggregate_view",
    "build_report",
    "certify",
    "check_eq4_add",
    "check_lemma2",
    "check_pl",
    "check_substitution",
    "classify_lambda2_sign",
    "compare_final",
    "corrected_bound",
    "corrected_series",
    "derive_c_from_delta",
    "derive_constants",
    "erroneous_series",
    "erroneous_step",
    "evaluate_case",
    "evaluate_suite",
    "exact_norm_mean",
    "make_logistic",
    "make_noise_model",
    "make_quadratic",
    "make_violation_suite",
    "mc_moments",
    "nbafl_round",
    "noiseless_norm_envelope",
    "one_round_step",
    "original_bound",
    "original_series",
    "paper_noise_moments",
    "read_trajectory_csv",
    "report_from_json",
    "run_training",
    "sample_noise",
    "sensitivity",
    "substitution_samples_from",
    "unroll",
    "write_trajectory_csv",
]
