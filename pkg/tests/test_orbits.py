from fractions import Fraction

import numpy as np
import pytest

from chaosavg.models import LinearParams, MODELS, default_experiment
from chaosavg.odecore import ButcherTableau, StepperConfig, TABLEAUS, integrate
from chaosavg.orbits import (
    CoupledOrbitPair,
    PseudoOrbit,
    RoundingPolicy,
    average_filter,
    divergence,
    run_filtered,
    run_traditional,
)
from chaosavg.rounding import RoundingMode, default_backend, dir_add, dir_mul

LORENZ, ZERO, LINEAR = MODELS["lorenz"], MODELS["zero"], MODELS["linear"]
BACKEND = default_backend()
DOWN, UP, NEAR = RoundingMode.DOWN, RoundingMode.UP, RoundingMode.NEAREST


def default_setup(method="rk4", t_final=None):
    p, y0, cfg = default_experiment()
    return p, y0.as_tuple(), StepperConfig(cfg.h, t_final or cfg.t_final, TABLEAUS[method])


def test_average_filter_examples():
    assert average_filter((1.0, 1.0, 1.0), (2.0, 2.0, 2.0)) == (1.5, 1.5, 1.5)
    v = (0.1, -3.7, 1e300)
    assert average_filter(v, v) == v
    # exact midpoint 1 + 2**-53 is a tie; ties go to the even neighbour 1.0
    exact = (Fraction(1) + Fraction(1 + 2.0**-52)) / 2
    assert exact == 1 + Fraction(1, 2**53)
    assert average_filter((1.0,), (1.0 + 2.0**-52,)) == (1.0,)


def test_average_filter_commutes():
    a, b = (0.1, 7.3, -2.0), (0.30000000000000004, 7.1, 5.5)
    assert average_filter(a, b) == average_filter(b, a)


def test_traditional_matches_direct_integration():
    p, y0, cfg = default_setup(t_final=0.1)
    orbit = run_traditional(LORENZ, p, y0, cfg, backend=BACKEND)
    direct = integrate(cfg, lambda t, y: LORENZ.field(p, y, NEAR, BACKEND), y0, NEAR, BACKEND)
    assert len(orbit) == 11
    assert [tuple(s) for s in orbit.states] == direct


def test_traditional_zero_field_is_constant():
    cfg = StepperConfig(0.1, 1.0, TABLEAUS["rk5"])
    orbit = run_traditional(ZERO, ZERO.make_params(), (1.0, 2.0, 3.0), cfg, DOWN)
    assert (orbit.states == np.array([1.0, 2.0, 3.0])).all()


@pytest.mark.parametrize("policy", list(RoundingPolicy), ids=str)
def test_filtered_zero_field(policy):
    cfg = StepperConfig(0.1, 1.0, TABLEAUS["rk4"])
    pair = run_filtered(ZERO, ZERO.make_params(), (1.0, 2.0, 3.0), cfg, policy)
    for orbit in (pair.lower, pair.upper, pair.averaged):
        assert (orbit.states == np.array([1.0, 2.0, 3.0])).all()
    assert not divergence(pair).values.any()


def _hand_step(y, partner, h, mode):
    """One strict filtered RK4 step of y' = y, written out operation by operation."""
    def f(s):
        return 1.0 * ((s + partner) / 2)          # midpoint and field in to-nearest

    def mul(a, b):
        return dir_mul(a, b, mode)

    def add(a, b):
        return dir_add(a, b, mode)

    k1 = f(y)
    k2 = f(add(y, mul(h, mul(0.5, k1))))
    k3 = f(add(y, mul(h, mul(0.5, k2))))
    k4 = f(add(y, mul(h, mul(1.0, k3))))
    acc = mul(1 / 6, k1)
    acc = add(acc, mul(1 / 3, k2))
    acc = add(acc, mul(1 / 3, k3))
    acc = add(acc, mul(1 / 6, k4))
    return add(y, mul(h, acc))


def test_filtered_step_matches_hand_trace():
    cfg = StepperConfig(0.1, 0.2, TABLEAUS["rk4"])
    pair = run_filtered(LINEAR, LinearParams(1.0), (1.0,), cfg)
    lo, hi = 1.0, 1.0
    for k in range(1, 3):
        lo, hi = _hand_step(lo, hi, 0.1, DOWN), _hand_step(hi, lo, 0.1, UP)
        assert pair.lower.states[k, 0] == lo
        assert pair.upper.states[k, 0] == hi
        assert pair.averaged.states[k, 0] == (lo + hi) / 2
    assert pair.lower.states[2, 0] < pair.upper.states[2, 0]


def test_partner_is_frozen_within_a_step():
    midpoint = ButcherTableau("midpoint2", 2, a=((), (Fraction(1, 2),)), b=(0, 1), c=(0, Fraction(1, 2)))
    p, y0, _ = default_setup()
    trace = []
    pair = run_filtered(LORENZ, p, y0, StepperConfig(0.01, 0.05, midpoint), trace=trace)
    assert len(trace) == 5 * 2 * 2
    for tag, k, stage, partner in trace:
        other = pair.upper if tag == "lower" else pair.lower
        assert partner == tuple(other.states[k])
    stages = [(tag, k) for tag, k, _, _ in trace]
    for k in range(5):
        assert stages.count(("lower", k)) == 2 and stages.count(("upper", k)) == 2


def test_divergence_examples():
    s = PseudoOrbit(np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]), DOWN, "rk4", 0.01)
    t = PseudoOrbit(np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 2.0]]), UP, "rk4", 0.01)
    pair = CoupledOrbitPair(s, t, s)
    assert list(divergence(pair).values) == [0.0, 1.0]
    same = CoupledOrbitPair(s, s, s)
    assert not divergence(same).values.any()


def test_divergence_of_lorenz_pair():
    p, y0, cfg = default_setup(t_final=1.0)
    pair = run_filtered(LORENZ, p, y0, cfg, backend=BACKEND)
    d = divergence(pair).values
    assert len(d) == 101 and d[0] == 0.0 and (d >= 0).all() and d[100] > 0
    recomputed = [max(abs(a - b) for a, b in zip(pair.upper.states[k], pair.lower.states[k]))
                  for k in range(101)]
    assert list(d) == recomputed


def test_coupled_pair_requires_common_grid():
    a = PseudoOrbit(np.zeros((3, 3)), DOWN, "rk4", 0.1)
    b = PseudoOrbit(np.zeros((4, 3)), UP, "rk4", 0.1)
    with pytest.raises(ValueError):
        CoupledOrbitPair(a, b, a)


def test_matlab_faithful_leaves_no_directed_arithmetic():
    p, y0, cfg = default_setup(t_final=5.0)
    pair = run_filtered(LORENZ, p, y0, cfg, RoundingPolicy.MATLAB_FAITHFUL, BACKEND)
    assert (pair.lower.states == pair.upper.states).all()
    assert (pair.averaged.states == pair.lower.states).all()
    assert pair.averaged.meta["policy"] == "matlab_faithful"


def test_orbits_are_read_only():
    p, y0, cfg = default_setup(t_final=0.05)
    orbit = run_traditional(LORENZ, p, y0, cfg)
    with pytest.raises(ValueError):
        orbit.states[0, 0] = 1.0


@pytest.mark.parametrize("method", ["rk3", "rk4", "rk5"])
def test_attractor_bounds_at_defaults(method):
    p, y0, cfg = default_setup(method)
    pair = run_filtered(LORENZ, p, y0, cfg, backend=BACKEND)
    assert len(pair) == 10_001
    for orbit in (pair.lower, pair.upper, pair.averaged):
        x, y, z = orbit.states.T
        assert np.abs(x).max() <= 100 and np.abs(y).max() <= 100
        assert z.min() >= 0 and z.max() <= 200
    # the averaged state stays between the two pseudo-orbits
    lo = np.minimum(pair.lower.states, pair.upper.states)
    hi = np.maximum(pair.lower.states, pair.upper.states)
    assert ((lo <= pair.averaged.states) & (pair.averaged.states <= hi)).all()
