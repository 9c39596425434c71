"""Hybrid ANN-aided EKF for truck-semitrailer state estimation."""

from ._core import (
    ConfigError,
    DomainError,
    GenerationError,
    IdentificationError,
    NumericalError,
    ProtocolError,
    TireParams,
    TrainingError,
    TuningError,
    confidence_from_distance,
    covariance_scale_factor,
    evaluate,
    ident_parameter_names,
    load_dataset,
    nominal_params,
    pso_minimize,
    report_names,
    run,
    simulate_maneuver,
    state_names,
    steady_tire_force,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "GenerationError",
    "IdentificationError",
    "NumericalError",
    "ProtocolError",
    "TireParams",
    "TrainingError",
    "TuningError",
    "confidence_from_distance",
    "covariance_scale_factor",
    "evaluate",
    "ident_parameter_names",
    "load_dataset",
    "nominal_params",
    "pso_minimize",
    "report_names",
    "run",
    "simulate_maneuver",
    "state_names",
    "steady_tire_force",
]
