"""Predictor feedback for discrete-time systems with input delays.

Synthesis of predictor-based backstepping feedback and its Lyapunov
function, certified robustness margins against multiplicative uncertainty,
minimax redesign of the feedback, and closed-loop simulation against
adversarial disturbances.
"""

from .backstepping import (
    BacksteppingCertificate,
    GenericSystem,
    backstep_lyapunov_generic,
    lyapunov_bar,
    lyapunov_matrix,
    nominal_predictor_feedback,
    verify_decay,
)
from .model import (
    ExtendedState,
    LinearPlant,
    NominalStabilizer,
    ScalarExamplePlant,
    ValidationError,
    measurement_delay_wrap,
    predictor_map,
    step_delayed,
    step_extended,
    validate_stabilizer,
)
from .redesign import (
    CertificationReport,
    ConfigurationError,
    RedesignSetup,
    certify,
    certify_nominal,
    choose_sigma,
    eval_L,
    eval_b,
    eval_kappa,
    eval_resid,
    max_certified_a,
    nominal_scalar_certify,
    redesigned_feedback,
    scalar_best_a,
    scalar_certify,
    scalar_max_certified_a,
    scalar_redesign_feedback,
    sweep_certified_a,
    worst_case_value,
)
from .robustness import (
    RobustnessBound,
    constant_solution_check,
    empirical_margin,
    necessary_bound,
    sufficient_bound,
    table1,
)
from .simulate import (
    DisturbanceStrategy,
    Trajectory,
    adversary_endpoint_check,
    decay_rate,
    simulate,
)

__all__ = [
    "BacksteppingCertificate",
    "CertificationReport",
    "ConfigurationError",
    "DisturbanceStrategy",
    "ExtendedState",
    "GenericSystem",
    "LinearPlant",
    "NominalStabilizer",
    "RedesignSetup",
    "RobustnessBound",
    "ScalarExamplePlant",
    "Trajectory",
    "ValidationError",
    "adversary_endpoint_check",
    "backstep_lyapunov_generic",
    "certify",
    "certify_nominal",
    "choose_sigma",
    "constant_solution_check",
    "decay_rate",
    "empirical_margin",
    "eval_L",
    "eval_b",
    "eval_kappa",
    "eval_resid",
    "lyapunov_bar",
    "lyapunov_matrix",
    "max_certified_a",
    "measurement_delay_wrap",
    "necessary_bound",
    "nominal_predictor_feedback",
    "nominal_scalar_certify",
    "predictor_map",
    "redesigned_feedback",
    "scalar_best_a",
    "scalar_certify",
    "scalar_max_certified_a",
    "scalar_redesign_feedback",
    "simulate",
    "step_delayed",
    "step_extended",
    "sufficient_bound",
    "sweep_certified_a",
    "table1",
    "validate_stabilizer",
    "verify_decay",
    "worst_case_value",
]

__version__ = "0.1.0"
