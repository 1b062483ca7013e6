"""Vector fields and the default experiment settings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .odecore import RK4, StepperConfig
from .rounding import Backend, RoundingMode, rounding_scope

__all__ = [
    "LorenzParams",
    "StateVector",
    "lorenz_field",
    "default_experiment",
    "Model",
    "MODELS",
    "get_model",
]


@dataclass(frozen=True)
class LorenzParams:
    """Prandtl number ``sigma``, Rayleigh number ``rho`` and geometric factor ``beta``."""

    sigma: float = 7.6
    rho: float = 65.0
    beta: float = 5.3

    def __post_init__(self):
        for name in ("sigma", "rho", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.sigma <= 0 or self.beta <= 0:
            raise ValueError("sigma and beta must be positive")


@dataclass(frozen=True)
class StateVector:
    x: float
    y: float
    z: float

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


def lorenz_field(
    p: LorenzParams,
    s: Sequence[float],
    mode: RoundingMode = RoundingMode.NEAREST,
    backend: Backend = Backend.EMULATED,
) -> tuple[float, float, float]:
    """Lorenz derivative ``(sigma(y-x), x(rho-z)-y, xy-beta z)``.

    Evaluated in exactly this operation order, every operation rounded in ``mode``.
    """
    x, y, z = s
    with rounding_scope(mode, backend) as ar:
        dx = ar.mul(p.sigma, ar.sub(y, x))
        dy = ar.sub(ar.mul(x, ar.sub(p.rho, z)), y)
        dz = ar.sub(ar.mul(x, y), ar.mul(p.beta, z))
    return (dx, dy, dz)


def default_experiment() -> tuple[LorenzParams, StateVector, StepperConfig]:
    """Parameters, initial state and stepping of the reference experiment.

    sigma=7.6, rho=65, beta=5.3 from (0.06735, 1.8841, 15.7734) with a 10 ms
    step over 100 s.  The literals are parsed once in round-to-nearest.
    """
    return (
        LorenzParams(7.6, 65.0, 5.3),
        StateVector(0.06735, 1.8841, 15.7734),
        StepperConfig(h=0.01, t_final=100.0, tableau=RK4),
    )


# ---------------------------------------------------------------------------
# registry

FieldFn = Callable[[object, Sequence[float], RoundingMode, Backend], tuple]


def _zero_field(p, s, mode=RoundingMode.NEAREST, backend=Backend.EMULATED):
    return tuple(0.0 for _ in s)


def _linear_field(p, s, mode=RoundingMode.NEAREST, backend=Backend.EMULATED):
    with rounding_scope(mode, backend) as ar:
        return tuple(ar.mul(p.rate, v) for v in s)


@dataclass(frozen=True)
class LinearParams:
    rate: float = 1.0


@dataclass(frozen=True)
class EmptyParams:
    pass


@dataclass(frozen=True)
class Model:
    """A named autonomous vector field ``field(params, state, mode, backend)``."""

    name: str
    dim: int
    field: FieldFn
    params_type: type
    default_y0: tuple[float, ...] = field(default=())

    def make_params(self, **overrides):
        return self.params_type(**overrides)


MODELS: dict[str, Model] = {
    "lorenz": Model("lorenz", 3, lorenz_field, LorenzParams, (0.06735, 1.8841, 15.7734)),
    # test fields: zero is an all-equilibrium field, linear is y' = rate*y
    "zero": Model("zero", 3, _zero_field, EmptyParams, (1.0, 2.0, 3.0)),
    "linear": Model("linear", 1, _linear_field, LinearParams, (1.0,)),
}


def get_model(name: str) -> Model:
    try:
        return MODELS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
