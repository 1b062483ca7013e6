"""Pseudo-orbits and the coupled dual-rounding simulation.

A pseudo-orbit is the sequence of states one concrete arithmetic produces
for a trajectory.  :func:`run_filtered` advances two of them side by side,
one rounding toward -inf and one toward +inf.  Each orbit evaluates its
vector field at the midpoint of its own stage state and the partner's state
at the start of the step, and the reported trajectory is the per-step
midpoint of the two orbits.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .models import Model
from .odecore import NonFiniteState, StepperConfig, rk_step
from .rounding import Backend, RoundingMode, rounding_scope

__all__ = [
    "RoundingPolicy",
    "PseudoOrbit",
    "CoupledOrbitPair",
    "DivergenceSeries",
    "average_filter",
    "run_traditional",
    "run_filtered",
    "divergence",
]


class RoundingPolicy(enum.Enum):
    """Where the directed mode applies inside one step of a coupled run.

    STRICT
        All RK combination arithmetic of an orbit runs in its directed mode;
        partner averaging and derivative evaluation run in to-nearest.
    MATLAB_FAITHFUL
        The directed mode is set once before the step, and the first
        derivative call switches to to-nearest without restoring, so the rest
        of the step runs in to-nearest.
    """

    STRICT = "strict"
    MATLAB_FAITHFUL = "matlab_faithful"

    def __str__(self) -> str:
        return self.value


def parse_policy(value: str | RoundingPolicy) -> RoundingPolicy:
    if isinstance(value, RoundingPolicy):
        return value
    try:
        return RoundingPolicy(value.strip().lower().replace("-", "_"))
    except ValueError:
        raise ValueError(f"unknown rounding policy {value!r}") from None


def _frozen(states) -> np.ndarray:
    arr = np.array(states, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(len(states), -1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PseudoOrbit:
    """States ``[x0, ..., xN]`` (shape ``(N+1, dim)``) and how they were produced."""

    states: np.ndarray
    mode: RoundingMode
    tableau_name: str
    h: float
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.h

    def component(self, i: int) -> np.ndarray:
        return self.states[:, i]


@dataclass(frozen=True)
class CoupledOrbitPair:
    lower: PseudoOrbit
    upper: PseudoOrbit
    averaged: PseudoOrbit

    def __post_init__(self):
        n = len(self.lower)
        if len(self.upper) != n or len(self.averaged) != n:
            raise ValueError("coupled orbits must share one time grid")

    def __len__(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class DivergenceSeries:
    """Per-step max-norm gap between the upper and lower orbits.

    An observable lower bound on how far the pseudo-orbits stray from each
    other; the distance to the true orbit itself is not computable.
    """

    values: np.ndarray
    norm: str = "max"


def average_filter(lower: Sequence[float], upper: Sequence[float],
                   backend: Backend = Backend.EMULATED) -> tuple[float, ...]:
    """Component-wise ``(a + b) / 2`` in round-to-nearest-even."""
    with rounding_scope(RoundingMode.NEAREST, backend) as ar:
        return tuple(ar.div(ar.add(a, b), 2.0) for a, b in zip(lower, upper))


def _meta(backend: Backend, policy: RoundingPolicy | None, model: Model) -> dict:
    return {"backend": str(backend), "policy": None if policy is None else str(policy),
            "model": model.name}


def run_traditional(
    model: Model,
    params,
    y0: Sequence[float],
    config: StepperConfig,
    mode: RoundingMode = RoundingMode.NEAREST,
    backend: Backend = Backend.EMULATED,
) -> PseudoOrbit:
    """Single orbit with every operation, field included, rounded in ``mode``."""
    fld = model.field

    def f(t, s):
        return fld(params, s, mode, backend)

    y = tuple(float(v) for v in y0)
    states = [y]
    tab, h = config.tableau, config.h
    for k in range(config.steps):
        try:
            y = rk_step(tab, f, k * h, y, h, mode, backend)
        except NonFiniteState as exc:
            raise NonFiniteState(k + 1, f"traditional orbit diverged at step {k + 1}: {exc}",
                                 states) from None
        states.append(y)
    return PseudoOrbit(_frozen(states), mode, tab.name, h, _meta(backend, None, model))


def run_filtered(
    model: Model,
    params,
    y0: Sequence[float],
    config: StepperConfig,
    policy: RoundingPolicy = RoundingPolicy.STRICT,
    backend: Backend = Backend.EMULATED,
    *,
    trace: list | None = None,
) -> CoupledOrbitPair:
    """Coupled -inf/+inf orbits with per-step averaging.

    Within step ``k`` every derivative evaluation of the lower orbit at a
    stage state ``s`` uses ``average_filter(s, upper[k])``, and symmetrically
    for the upper orbit with ``lower[k]``; both partners are the states from
    before the step.  If ``trace`` is a list, every derivative call appends
    ``(orbit, step, stage_state, partner)`` to it.
    """
    fld = model.field
    near = RoundingMode.NEAREST
    after = near if policy is RoundingPolicy.MATLAB_FAITHFUL else None

    def coupled(partner, tag, k):
        def f(t, s):
            if trace is not None:
                trace.append((tag, k, s, partner))
            return fld(params, average_filter(s, partner, backend), near, backend)
        return f

    lo = hi = tuple(float(v) for v in y0)
    lows, highs, avgs = [lo], [hi], [average_filter(lo, hi, backend)]
    tab, h = config.tableau, config.h
    for k in range(config.steps):
        t = k * h
        try:
            new_lo = rk_step(tab, coupled(hi, "lower", k), t, lo, h, RoundingMode.DOWN, backend,
                             mode_after_eval=after)
            new_hi = rk_step(tab, coupled(lo, "upper", k), t, hi, h, RoundingMode.UP, backend,
                             mode_after_eval=after)
        except NonFiniteState as exc:
            raise NonFiniteState(k + 1, f"coupled orbit diverged at step {k + 1}: {exc}",
                                 avgs) from None
        lo, hi = new_lo, new_hi
        lows.append(lo)
        highs.append(hi)
        avgs.append(average_filter(lo, hi, backend))
    meta = _meta(backend, policy, model)
    return CoupledOrbitPair(
        lower=PseudoOrbit(_frozen(lows), RoundingMode.DOWN, tab.name, h, meta),
        upper=PseudoOrbit(_frozen(highs), RoundingMode.UP, tab.name, h, meta),
        averaged=PseudoOrbit(_frozen(avgs), RoundingMode.NEAREST, tab.name, h,
                             dict(meta, filtered=True)),
    )


def divergence(pair: CoupledOrbitPair) -> DivergenceSeries:
    """``max_i |upper[k, i] - lower[k, i]|`` for every step ``k``."""
    d = np.abs(pair.upper.states - pair.lower.states).max(axis=1)
    d.setflags(write=False)
    return DivergenceSeries(d)
