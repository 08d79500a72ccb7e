"""esncast: echo state networks for chaotic system forecasting.

Builds continuous-time echo state networks over five internal topologies,
trains a ridge readout with leave-one-out cross-validation, scores forecasts
with a climate-aware multi-window error, and tunes the five construction
hyperparameters with Gaussian-process Bayesian optimization.
"""

__version__ = "0.1.0"

from .integrate import IntegrationError, StepperConfig, integrate_driven, integrate_fixed
from .systems import (
    DOUBLE_SCROLL,
    LAMBDA_TARGET,
    LORENZ,
    ROSSLER,
    SYSTEM_NAMES,
    CalibrationError,
    ChaoticSystem,
    Trajectory,
    benettin_lyapunov,
    calibrate_system,
    generate_input,
    raw_vector_field,
)

__all__ = [
    "__version__",
    "IntegrationError",
    "StepperConfig",
    "integrate_fixed",
    "integrate_driven",
    "ChaoticSystem",
    "Trajectory",
    "CalibrationError",
    "LORENZ",
    "ROSSLER",
    "DOUBLE_SCROLL",
    "SYSTEM_NAMES",
    "LAMBDA_TARGET",
    "calibrate_system",
    "benettin_lyapunov",
    "generate_input",
    "raw_vector_field",
]
