"""firpriv: masking-noise design against FIR model identification.

A numerical library and CLI for designing additive input/output noise filters
that maximize an adversary's FIR identification error subject to an
output-variance budget, for calibrating differential-privacy noise, and for
running reproducible attack simulations.
"""

from .config import ExperimentConfig, format_config, parse_config, parse_config_text
from .design import (
    DesignResult,
    DesignSpec,
    ExpectedTraceQuadratic,
    RandomInputModel,
    design_input_capped,
    design_output_capped,
    design_output_random,
    design_output_weighted,
    estimate_expected_quadratic,
)
from .errors import (
    AuditSizeError,
    BudgetError,
    ConditioningError,
    ConfigError,
    DimensionError,
    FirprivError,
    ParameterError,
    RankError,
    RedrawBudgetError,
    SingularKernelError,
    StabilityError,
)
from .estimators import (
    ErrorReport,
    Kernel,
    LsEstimate,
    TraceQuadratic,
    ls_covariance,
    ls_estimate,
    ls_trace_quadratic,
    rls_estimate,
    rls_gain,
    rls_mse,
    rls_trace_quadratic,
    stable_spline_kernel,
)
from .experiments import ExperimentReport, MetricRow, attack_simulation, reproduce
from .lti import (
    BandedFilterMatrix,
    FirModel,
    RationalFilter,
    RegressorMatrix,
    SignalSeq,
    build_filter_matrix,
    build_regressor,
    convolution_matrix,
    fir_truncate,
    generate_filtered_input,
    impulse_response,
    simulate,
)
from .privacy import (
    CoefficientBox,
    DpMechanism,
    gaussian_mechanism,
    gaussian_noise_multiplier,
    gaussian_tail_inverse,
    gaussian_upper_tail,
    l1_sensitivity,
    l2_sensitivity,
    laplace_mechanism,
    privacy_audit,
    sample_mechanism,
)
from .rng import derive, stream

__version__ = "0.1.0"

__all__ = [
    "AuditSizeError",
    "BandedFilterMatrix",
    "BudgetError",
    "CoefficientBox",
    "ConditioningError",
    "ConfigError",
    "DesignResult",
    "DesignSpec",
    "DimensionError",
    "DpMechanism",
    "ErrorReport",
    "ExpectedTraceQuadratic",
    "ExperimentConfig",
    "ExperimentReport",
    "FirModel",
    "FirprivError",
    "Kernel",
    "LsEstimate",
    "MetricRow",
    "ParameterError",
    "RandomInputModel",
    "RankError",
    "RationalFilter",
    "RedrawBudgetError",
    "RegressorMatrix",
    "SignalSeq",
    "SingularKernelError",
    "StabilityError",
    "TraceQuadratic",
    "attack_simulation",
    "build_filter_matrix",
    "build_regressor",
    "convolution_matrix",
    "derive",
    "design_input_capped",
    "design_output_capped",
    "design_output_random",
    "design_output_weighted",
    "estimate_expected_quadratic",
    "fir_truncate",
    "format_config",
    "gaussian_mechanism",
    "gaussian_noise_multiplier",
    "gaussian_tail_inverse",
    "gaussian_upper_tail",
    "generate_filtered_input",
    "impulse_response",
    "l1_sensitivity",
    "l2_sensitivity",
    "laplace_mechanism",
    "ls_covariance",
    "ls_estimate",
    "ls_trace_quadratic",
    "parse_config",
    "parse_config_text",
    "privacy_audit",
    "reproduce",
    "rls_estimate",
    "rls_gain",
    "rls_mse",
    "rls_trace_quadratic",
    "sample_mechanism",
    "simulate",
    "stable_spline_kernel",
    "stream",
]
