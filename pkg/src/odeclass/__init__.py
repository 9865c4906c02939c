"""Forced linear second-order ODEs: simulation, averaged functionals, classification."""

from .series import SampledSeries
from .system import SystemParams
from .forcing import (
    ForcingError,
    ParseError,
    DomainError,
    DifferentiationError,
    ExactPair,
    parse_forcing,
    eval_forcing,
    to_text,
    differentiate,
    antiderivative,
    chirp_forcing,
    constant,
    exp_decay,
    sinusoid,
    ramp,
    pulse_train,
    reference_pair,
    random_smooth_forcing,
)
from .linear import (
    IntegrationAbort,
    Kernel,
    Trajectory,
    convolve_kernel,
    exp_filter_sampled,
    homogeneous_solution,
    integrate,
    make_kernel,
)
from .functionals import (
    FunctionalField,
    ThetaGrid,
    decomposition_check,
    decomposition_residual,
    double_average,
    delta_f,
    functional_field,
    lemma41_check,
    moving_average,
)
from .identities import (
    DEFAULT_TOLERANCES,
    IdentityResidual,
    residual_F_vs_x,
    residual_F_vs_y2,
    residual_ftheta_vs_y1,
    residual_x0_vs_F,
    residual_x0_vs_y2,
    residual_x_vs_Xvoc,
    residual_y1_vs_x,
    residual_y2_vs_x0,
    run_identity_suite,
)
from .classify import (
    AGREEMENT_CHANNELS,
    DiagnosticsReport,
    LimsupEstimate,
    WindowPolicy,
    chirp_diagnostic,
    classify,
    estimate_limsup,
)

__version__ = "0.1.0"

__all__ = [
    "SampledSeries",
    "SystemParams",
    "ForcingError",
    "ParseError",
    "DomainError",
    "DifferentiationError",
    "ExactPair",
    "parse_forcing",
    "eval_forcing",
    "to_text",
    "differentiate",
    "antiderivative",
    "chirp_forcing",
    "constant",
    "exp_decay",
    "sinusoid",
    "ramp",
    "pulse_train",
    "reference_pair",
    "random_smooth_forcing",
    "IntegrationAbort",
    "Kernel",
    "Trajectory",
    "convolve_kernel",
    "exp_filter_sampled",
    "homogeneous_solution",
    "integrate",
    "make_kernel",
    "FunctionalField",
    "ThetaGrid",
    "decomposition_check",
    "decomposition_residual",
    "double_average",
    "delta_f",
    "functional_field",
    "lemma41_check",
    "moving_average",
    "DEFAULT_TOLERANCES",
    "IdentityResidual",
    "residual_F_vs_x",
    "residual_F_vs_y2",
    "residual_ftheta_vs_y1",
    "residual_x0_vs_F",
    "residual_x0_vs_y2",
    "residual_x_vs_Xvoc",
    "residual_y1_vs_x",
    "residual_y2_vs_x0",
    "run_identity_suite",
    "AGREEMENT_CHANNELS",
    "DiagnosticsReport",
    "LimsupEstimate",
    "WindowPolicy",
    "chirp_diagnostic",
    "classify",
    "estimate_limsup",
    "__version__",
]
