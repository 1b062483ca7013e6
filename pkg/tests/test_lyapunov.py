import math

import numpy as np
import pytest

from chaosavg.lyapunov import (
    DegenerateSeries,
    EmbeddingConfig,
    NoMinimumFound,
    SeriesTooShort,
    auto_config,
    autocorrelation_peak,
    choose_delay,
    choose_dimension,
    embed,
    estimate_lambda_max,
    false_nearest_fraction,
    mutual_information,
)

LOGISTIC_CFG = EmbeddingConfig(delay=1, dimension=2, theiler_window=0, fit_range=(0, 5))


@pytest.fixture(scope="module")
def logistic():
    x = np.empty(10_000)
    x[0] = 0.1234
    for i in range(1, len(x)):
        x[i] = 4.0 * x[i - 1] * (1.0 - x[i - 1])
    return x


@pytest.fixture(scope="module")
def sine():
    return np.sin(2 * np.pi * np.arange(10_000) / 100.0)


def brute_mi(s, lag, bins=16):
    """Histogram mutual information by explicit cell counting."""
    lo, hi = min(s), max(s)
    width = (hi - lo) / bins

    def cell(v):
        return min(int((v - lo) / width), bins - 1)

    n = len(s) - lag
    joint, px, py = {}, [0] * bins, [0] * bins
    for i in range(n):
        a, b = cell(s[i]), cell(s[i + lag])
        joint[a, b] = joint.get((a, b), 0) + 1
        px[a] += 1
        py[b] += 1
    return sum(c / n * math.log((c / n) / (px[a] / n * py[b] / n)) for (a, b), c in joint.items())


def test_embed_examples():
    assert embed([1, 2, 3, 4, 5], 1, 2).tolist() == [[1, 2], [2, 3], [3, 4], [4, 5]]
    assert embed(np.arange(100.0), 3, 4).shape == (91, 4)
    pts = embed(np.full(50, 2.5), 2, 3)
    assert (pts == 2.5).all()
    with pytest.raises(SeriesTooShort):
        embed([1.0, 2.0, 3.0], 2, 3)


def test_embedding_config_validation():
    for bad in (dict(delay=0), dict(dimension=1), dict(theiler_window=-1),
                dict(fit_range=(5, 5)), dict(neighbor_count=0)):
        with pytest.raises(ValueError):
            EmbeddingConfig(**bad)


def test_logistic_map_exponent(logistic):
    est = estimate_lambda_max(logistic, 1.0, LOGISTIC_CFG)
    assert est.lambda_max == pytest.approx(math.log(2), abs=0.1)
    assert 0 <= est.fit_r2 <= 1
    assert est.series_len == 10_000


def test_sinusoid_exponent_is_zero(sine):
    est = estimate_lambda_max(sine, 1.0, auto_config(sine))
    assert abs(est.lambda_max) < 0.05


def test_units_are_per_time(logistic):
    per_sample = estimate_lambda_max(logistic, 1.0, LOGISTIC_CFG).lambda_max
    assert estimate_lambda_max(logistic, 0.5, LOGISTIC_CFG).lambda_max == pytest.approx(2 * per_sample)


@pytest.mark.parametrize("a, c", [(2.0, 0.0), (3.7, -12.5), (0.01, 100.0)])
def test_scale_and_shift_invariance(logistic, a, c):
    base = estimate_lambda_max(logistic, 1.0, LOGISTIC_CFG).lambda_max
    moved = estimate_lambda_max(a * logistic + c, 1.0, LOGISTIC_CFG).lambda_max
    assert abs(moved - base) < 1e-9


def test_determinism(logistic):
    a = estimate_lambda_max(logistic, 1.0, LOGISTIC_CFG)
    b = estimate_lambda_max(logistic.copy(), 1.0, LOGISTIC_CFG)
    assert a.lambda_max == b.lambda_max and (a.curve == b.curve).all()


def test_constant_series_is_degenerate():
    flat = np.full(2000, 3.0)
    with pytest.raises(DegenerateSeries):
        estimate_lambda_max(flat, 1.0, EmbeddingConfig())
    with pytest.raises(DegenerateSeries):
        choose_delay(flat)
    with pytest.raises(DegenerateSeries):
        choose_dimension(flat, 1)


def test_too_short_series():
    with pytest.raises(SeriesTooShort):
        estimate_lambda_max(np.sin(np.arange(40.0)), 1.0, EmbeddingConfig(fit_range=(1, 50)))


def test_mutual_information_matches_brute_force(sine, logistic):
    for series in (sine, logistic):
        for lag in (1, 4, 9):
            assert mutual_information(series, lag) == pytest.approx(brute_mi(list(series), lag), abs=1e-12)


def test_choose_delay_is_first_minimum_of_brute_force_curve(sine):
    curve = [brute_mi(list(sine), lag) for lag in range(1, 8)]
    first = next(i + 1 for i in range(1, len(curve) - 1)
                 if curve[i] < curve[i - 1] and curve[i] <= curve[i + 1])
    assert choose_delay(sine) == first == 5


def test_choose_delay_on_lorenz_like_signal():
    t = np.arange(20_000) * 0.01
    s = np.sin(2.1 * t) + 0.5 * np.sin(5.3 * t + 1.0)
    tau = choose_delay(s)
    assert 1 <= tau < 100


def test_white_noise_has_no_embedding():
    w = np.random.default_rng(7).standard_normal(4000)
    fractions = [false_nearest_fraction(w, 1, m) for m in range(1, 7)]
    assert min(fractions) > 0.05
    with pytest.raises(NoMinimumFound) as info:
        choose_dimension(w, 1, max_dim=6)
    assert len(info.value.curve) == 6
    assert auto_config(w, delay=1).dimension == 3


def test_sinusoid_needs_low_dimension():
    # period incommensurate with the sampling, so no two samples coincide
    s = np.sin(2 * np.pi * np.arange(10_000) / 123.456)
    assert false_nearest_fraction(s, 25, 1) > 0.5
    assert choose_dimension(s, 25) == 2


def test_autocorrelation_peak(sine):
    peak, lag = autocorrelation_peak(sine, 50)
    assert lag % 100 == 0 and peak == pytest.approx(1.0, abs=1e-9)
    noise = np.random.default_rng(3).standard_normal(5000)
    assert autocorrelation_peak(noise, 10)[0] < 0.2
