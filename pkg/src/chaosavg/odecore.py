"""Fixed-step explicit Runge-Kutta integration under a chosen rounding mode.

States are plain tuples of floats.  Every combination operation of a step
(stage-state assembly and the final update) goes through the
:class:`~chaosavg.rounding.Arithmetic` of the requested mode.  Weighted sums
are accumulated left to right in stage index, because under directed rounding
the accumulation order changes the result.  Zero coefficients are skipped;
their products are exact zeros and cannot change a directed sum.

The vector field is called as ``f(t, y)`` and chooses its own evaluation mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .rounding import Backend, RoundingMode, rounding_scope

State = tuple[float, ...]
VectorField = Callable[[float, State], Sequence[float]]

__all__ = [
    "ButcherTableau",
    "StepperConfig",
    "NonFiniteState",
    "TableauError",
    "TABLEAUS",
    "get_tableau",
    "register_tableau",
    "rk_step",
    "integrate",
]


class NonFiniteState(ArithmeticError):
    """A stage or result of the integration contains NaN or an infinity."""

    def __init__(self, step: int, message: str = "", states: list[State] | None = None):
        self.step = step
        self.states = states or []
        super().__init__(message or f"non-finite state at step {step}")


class TableauError(ValueError):
    pass


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients of an explicit Runge-Kutta method.

    ``a`` is given as the rows of the strictly lower triangle: row ``i`` holds
    the ``i`` coefficients ``a[i][0..i-1]``.  Coefficients are kept as exact
    fractions for validation; float copies drive the arithmetic.
    """

    name: str
    order: int
    a: tuple[tuple[Fraction, ...], ...]
    b: tuple[Fraction, ...]
    c: tuple[Fraction, ...]

    def __post_init__(self):
        a = tuple(tuple(_frac(x) for x in row) for row in self.a)
        b = tuple(_frac(x) for x in self.b)
        c = tuple(_frac(x) for x in self.c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        self.validate()
        object.__setattr__(self, "_a_f", tuple(
            tuple((j, float(x)) for j, x in enumerate(row) if x != 0) for row in a))
        object.__setattr__(self, "_b_f", tuple((j, float(x)) for j, x in enumerate(b) if x != 0))
        object.__setattr__(self, "_c_f", tuple(float(x) for x in c))

    @property
    def stages(self) -> int:
        return len(self.b)

    def validate(self) -> None:
        s = len(self.b)
        if s == 0:
            raise TableauError(f"{self.name}: no stages")
        if len(self.c) != s or len(self.a) != s:
            raise TableauError(f"{self.name}: a, b, c disagree on the stage count")
        for i, row in enumerate(self.a):
            if len(row) != i:
                raise TableauError(f"{self.name}: row {i} of a must have {i} entries (explicit method)")
            if sum(row, Fraction(0)) != self.c[i]:
                raise TableauError(f"{self.name}: c[{i}] != sum of a[{i}]")
        if sum(self.b, Fraction(0)) != 1:
            raise TableauError(f"{self.name}: weights b do not sum to 1")
        if self.order not in (1, 2, 3, 4, 5, 6):
            raise TableauError(f"{self.name}: unsupported order {self.order}")


F = Fraction

RK3 = ButcherTableau(
    name="rk3", order=3,
    a=((), (F(1, 2),), (F(-1), F(2))),
    b=(F(1, 6), F(2, 3), F(1, 6)),
    c=(F(0), F(1, 2), F(1)),
)

RK4 = ButcherTableau(
    name="rk4", order=4,
    a=((), (F(1, 2),), (F(0), F(1, 2)), (F(0), F(0), F(1))),
    b=(F(1, 6), F(1, 3), F(1, 3), F(1, 6)),
    c=(F(0), F(1, 2), F(1, 2), F(1)),
)

# Butcher's six-stage fifth-order method.
RK5 = ButcherTableau(
    name="rk5", order=5,
    a=(
        (),
        (F(1, 4),),
        (F(1, 8), F(1, 8)),
        (F(0), F(-1, 2), F(1)),
        (F(3, 16), F(0), F(0), F(9, 16)),
        (F(-3, 7), F(2, 7), F(12, 7), F(-12, 7), F(8, 7)),
    ),
    b=(F(7, 90), F(0), F(32, 90), F(12, 90), F(32, 90), F(7, 90)),
    c=(F(0), F(1, 4), F(1, 4), F(1, 2), F(3, 4), F(1)),
)

TABLEAUS: dict[str, ButcherTableau] = {t.name: t for t in (RK3, RK4, RK5)}


def register_tableau(tableau: ButcherTableau) -> None:
    TABLEAUS[tableau.name] = tableau


def get_tableau(name: str | ButcherTableau) -> ButcherTableau:
    if isinstance(name, ButcherTableau):
        return name
    try:
        return TABLEAUS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown tableau {name!r}; known: {sorted(TABLEAUS)}") from None


@dataclass(frozen=True)
class StepperConfig:
    h: float
    t_final: float
    tableau: ButcherTableau

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"step size must be positive and finite, got {self.h}")
        if not (self.t_final > 0 and math.isfinite(self.t_final)):
            raise ValueError(f"t_final must be positive and finite, got {self.t_final}")
        if self.steps < 1:
            raise ValueError("t_final/h must round to at least one step")

    @property
    def steps(self) -> int:
        return round(self.t_final / self.h)

    def times(self) -> list[float]:
        # k*h rather than repeated addition, so the grid does not drift.
        return [k * self.h for k in range(self.steps + 1)]


def _finite(v: Sequence[float]) -> bool:
    return all(math.isfinite(x) for x in v)


def _combine(ar, y: State, h: float, weights, ks: list) -> State:
    """``y + h * sum_j w_j k_j`` per component, accumulated left to right."""
    if not weights:
        return y
    add, mul = ar.add, ar.mul
    out = []
    for comp, yc in enumerate(y):
        acc = None
        for j, w in weights:
            term = mul(w, ks[j][comp])
            acc = term if acc is None else add(acc, term)
        out.append(add(yc, mul(h, acc)))
    return tuple(out)


def rk_step(
    tableau: ButcherTableau,
    f: VectorField,
    t: float,
    y: Sequence[float],
    h: float,
    mode: RoundingMode = RoundingMode.NEAREST,
    backend: Backend = Backend.EMULATED,
    *,
    mode_after_eval: RoundingMode | None = None,
) -> State:
    """Advance ``y`` by one step of ``tableau``.

    ``mode_after_eval`` models a vector field that switches the environment to
    another mode and never restores it: once the first derivative has been
    evaluated, all remaining combination arithmetic of the step runs in that
    mode instead of ``mode``.

    Raises :class:`NonFiniteState` (with ``step=0``) on a NaN or infinite
    stage derivative or result.
    """
    y = tuple(y)
    ks: list[Sequence[float]] = []
    current = mode
    for i in range(tableau.stages):
        with rounding_scope(current, backend) as ar:
            stage = _combine(ar, y, h, tableau._a_f[i], ks)
            ti = ar.add(t, ar.mul(tableau._c_f[i], h)) if tableau._c_f[i] else t
        k = tuple(f(ti, stage))
        if not _finite(k):
            raise NonFiniteState(0, f"non-finite derivative in stage {i}")
        ks.append(k)
        if mode_after_eval is not None:
            current = mode_after_eval
    with rounding_scope(current, backend) as ar:
        out = _combine(ar, y, h, tableau._b_f, ks)
    if not _finite(out):
        raise NonFiniteState(0, "non-finite state after update")
    return out


def integrate(
    config: StepperConfig,
    f: VectorField,
    y0: Sequence[float],
    mode: RoundingMode = RoundingMode.NEAREST,
    backend: Backend = Backend.EMULATED,
) -> list[State]:
    """Integrate from ``y0``; returns the ``steps + 1`` states ``[y0, ..., yN]``."""
    y = tuple(float(v) for v in y0)
    if not _finite(y):
        raise NonFiniteState(0, "initial state is not finite", [])
    times = config.times()
    states = [y]
    tab, h = config.tableau, config.h
    for k in range(config.steps):
        try:
            y = rk_step(tab, f, times[k], y, h, mode, backend)
        except NonFiniteState as exc:
            raise NonFiniteState(k + 1, f"step {k + 1}: {exc}", states) from None
        states.append(y)
    return states
