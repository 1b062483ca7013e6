"""Chaos suppression by averaging pseudo-orbits computed under opposite directed rounding."""

from .rounding import Backend, RoundingMode, rounding_scope, with_mode
from .odecore import ButcherTableau, StepperConfig, get_tableau, integrate, rk_step
from .models import LorenzParams, StateVector, default_experiment, get_model, lorenz_field
from .orbits import (
    CoupledOrbitPair,
    PseudoOrbit,
    RoundingPolicy,
    average_filter,
    divergence,
    run_filtered,
    run_traditional,
)
from .lyapunov import EmbeddingConfig, LyapunovEstimate, estimate_lambda_max

__version__ = "0.1.0"
