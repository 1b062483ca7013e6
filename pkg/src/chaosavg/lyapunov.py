"""Largest Lyapunov exponent of a scalar time series.

Delay embedding, mutual-information delay selection, false-nearest-neighbour
dimension selection, and a nearest-neighbour divergence estimator in the
style of Rosenstein, Collins & De Luca (1993): track the mean log distance
between each point and its nearest temporally separated neighbour as both
evolve, and fit a line to the early part of that curve.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "SeriesTooShort",
    "DegenerateSeries",
    "NoMinimumFound",
    "EmbeddingConfig",
    "LyapunovEstimate",
    "embed",
    "mutual_information",
    "choose_delay",
    "false_nearest_fraction",
    "choose_dimension",
    "divergence_curve",
    "estimate_lambda_max",
    "auto_config",
    "autocorrelation_peak",
]


class SeriesTooShort(ValueError):
    pass


class DegenerateSeries(ValueError):
    """No usable nearest neighbours, e.g. a constant series."""


class NoMinimumFound(RuntimeError):
    """Automatic parameter selection failed; fall back to a configured default."""

    def __init__(self, message: str, fallback: int | None = None, curve=None):
        super().__init__(message)
        self.fallback = fallback
        self.curve = curve


@dataclass(frozen=True)
class EmbeddingConfig:
    delay: int = 1
    dimension: int = 3
    theiler_window: int = 0
    fit_range: tuple[int, int] = (1, 50)
    neighbor_count: int = 1

    def __post_init__(self):
        if self.delay < 1:
            raise ValueError("delay must be >= 1")
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        if self.theiler_window < 0:
            raise ValueError("theiler_window must be >= 0")
        k0, k1 = self.fit_range
        if not 0 <= k0 < k1:
            raise ValueError("fit_range must satisfy 0 <= k_min < k_max")
        if self.neighbor_count < 1:
            raise ValueError("neighbor_count must be >= 1")


@dataclass(frozen=True)
class LyapunovEstimate:
    lambda_max: float
    config: EmbeddingConfig
    fit_r2: float
    series_len: int
    h: float = 1.0
    curve: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {
            "lambda": self.lambda_max,
            "tau": self.config.delay,
            "m": self.config.dimension,
            "theiler_window": self.config.theiler_window,
            "fit_kmin": self.config.fit_range[0],
            "fit_kmax": self.config.fit_range[1],
            "neighbor_count": self.config.neighbor_count,
            "fit_r2": self.fit_r2,
            "series_len": self.series_len,
            "h": self.h,
        }


def _as_series(series) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("expected a one-dimensional series")
    if not np.all(np.isfinite(s)):
        raise ValueError("series contains NaN or infinite values")
    return s


def embed(series, tau: int, m: int) -> np.ndarray:
    """Delay vectors ``(s[i], s[i+tau], ..., s[i+(m-1)tau])``, one per row."""
    s = _as_series(series)
    if tau < 1 or m < 1:
        raise ValueError("tau and m must be positive")
    count = len(s) - (m - 1) * tau
    if count < 1:
        raise SeriesTooShort(f"need at least {(m - 1) * tau + 1} samples, got {len(s)}")
    return np.stack([s[j * tau: j * tau + count] for j in range(m)], axis=1)


def mutual_information(series, lag: int, bins: int = 16) -> float:
    """Histogram estimate (natural log) of I(s[t]; s[t+lag])."""
    s = _as_series(series)
    lo, hi = s.min(), s.max()
    if lo == hi:
        raise DegenerateSeries("constant series carries no information")
    edges = np.linspace(lo, hi, bins + 1)
    joint, _, _ = np.histogram2d(s[:-lag], s[lag:], bins=(edges, edges))
    pxy = joint / joint.sum()
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    nz = pxy > 0
    return float(np.sum(pxy[nz] * np.log(pxy[nz] / np.outer(px, py)[nz])))


def choose_delay(series, max_lag: int | None = None, bins: int = 16) -> int:
    """First local minimum of the time-delayed mutual information."""
    s = _as_series(series)
    if np.ptp(s) == 0:
        raise DegenerateSeries("constant series")
    if max_lag is None:
        max_lag = max(2, min(len(s) // 10, 500))
    curve = [mutual_information(s, lag, bins) for lag in range(1, max_lag + 1)]
    for i in range(1, len(curve) - 1):
        if curve[i] < curve[i - 1] and curve[i] <= curve[i + 1]:
            return i + 1
    raise NoMinimumFound(f"mutual information has no local minimum up to lag {max_lag}",
                         curve=np.array(curve))


def _nearest_excluding(points: np.ndarray, tree_pts: np.ndarray, window: int,
                       count: int = 1, positive: bool = True):
    """Indices/distances of the ``count`` nearest rows of ``tree_pts`` to each
    row of ``points``, skipping candidates with ``|i - j| <= window`` and,
    when ``positive``, candidates at distance zero.

    Rows without enough admissible candidates get index -1.
    """
    n = len(points)
    m = len(tree_pts)
    tree = cKDTree(tree_pts)
    k = min(m, 2 * window + 2 + count + 8)
    idx_out = np.full((n, count), -1, dtype=np.int64)
    dist_out = np.full((n, count), np.inf)
    pending = np.arange(n)
    while len(pending):
        dist, idx = tree.query(points[pending], k=k)
        if k == 1:
            dist, idx = dist[:, None], idx[:, None]
        ok = np.abs(idx - pending[:, None]) > window
        ok &= idx < m
        if positive:
            ok &= dist > 0
        got = ok.sum(axis=1)
        done = (got >= count) | (k >= m)
        for row in np.nonzero(done)[0]:
            sel = np.nonzero(ok[row])[0][:count]
            i = pending[row]
            idx_out[i, :len(sel)] = idx[row, sel]
            dist_out[i, :len(sel)] = dist[row, sel]
        pending = pending[~done]
        k = min(m, 4 * k)
    return idx_out, dist_out


def false_nearest_fraction(series, tau: int, m: int, rtol: float = 15.0, atol: float = 2.0,
                           theiler_window: int = 0) -> float:
    """Fraction of nearest neighbours in dimension ``m`` that separate in ``m + 1``.

    Uses both criteria of Kennel, Brown & Abarbanel (1992): the added
    coordinate gap relative to the neighbour distance exceeds ``rtol``, or the
    distance in ``m + 1`` exceeds ``atol`` times the series' standard deviation.
    """
    s = _as_series(series)
    sd = s.std()
    if sd == 0:
        raise DegenerateSeries("constant series")
    big = embed(s, tau, m + 1)
    small = big[:, :m]
    idx, dist = _nearest_excluding(small, small, theiler_window)
    j = idx[:, 0]
    ok = j >= 0
    if not ok.any():
        raise DegenerateSeries("no admissible nearest neighbours")
    i = np.nonzero(ok)[0]
    j = j[ok]
    d_m = dist[ok, 0]
    extra = np.abs(big[i, m] - big[j, m])
    d_m1 = np.sqrt(d_m**2 + extra**2)
    false = (extra / d_m > rtol) | (d_m1 / sd > atol)
    return float(false.mean())


def choose_dimension(series, tau: int, max_dim: int = 10, threshold: float = 0.01,
                     theiler_window: int = 0) -> int:
    """Smallest ``m`` (at least 2) whose false-nearest-neighbour fraction is below ``threshold``."""
    fractions = []
    for m in range(1, max_dim + 1):
        frac = false_nearest_fraction(series, tau, m, theiler_window=theiler_window)
        fractions.append(frac)
        if frac < threshold:
            return max(m, 2)
    raise NoMinimumFound(f"false-nearest-neighbour fraction stays >= {threshold} up to m={max_dim}",
                         curve=np.array(fractions))


def divergence_curve(series, cfg: EmbeddingConfig) -> np.ndarray:
    """Mean log distance ``<ln d_k>`` for ``k = 0 .. fit_range[1]``."""
    pts = embed(series, cfg.delay, cfg.dimension)
    k_max = cfg.fit_range[1]
    usable = len(pts) - k_max
    if usable < 2 * cfg.theiler_window + 2 + cfg.neighbor_count:
        raise SeriesTooShort(
            f"{len(pts)} embedded points leave too few references for k_max={k_max} "
            f"and theiler_window={cfg.theiler_window}")
    base = pts[:usable]
    if np.ptp(base, axis=0).max() == 0:
        raise DegenerateSeries("all embedded points coincide")
    idx, _ = _nearest_excluding(base, base, cfg.theiler_window, cfg.neighbor_count)
    ref = np.repeat(np.arange(usable), cfg.neighbor_count)
    nb = idx.reshape(-1)
    keep = nb >= 0
    ref, nb = ref[keep], nb[keep]
    if len(ref) == 0:
        raise DegenerateSeries("no admissible nearest neighbours")
    curve = np.empty(k_max + 1)
    for k in range(k_max + 1):
        d = np.sqrt(np.sum((pts[ref + k] - pts[nb + k]) ** 2, axis=1))
        d = d[d > 0]
        if len(d) == 0:
            raise DegenerateSeries(f"all neighbour distances vanish at k={k}")
        curve[k] = np.log(d).mean()
    return curve


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    sxy = np.sum((x - xm) * (y - ym))
    syy = np.sum((y - ym) ** 2)
    slope = sxy / sxx
    r2 = 1.0 if syy == 0 else min(1.0, max(0.0, sxy * sxy / (sxx * syy)))
    return float(slope), float(r2)


def estimate_lambda_max(series, h: float, cfg: EmbeddingConfig) -> LyapunovEstimate:
    """Slope of the divergence curve over ``cfg.fit_range``, per unit time.

    The slope is per sample, so it is divided by the sample interval ``h``.
    """
    s = _as_series(series)
    if np.ptp(s) == 0:
        raise DegenerateSeries("constant series")
    curve = divergence_curve(s, cfg)
    k0, k1 = cfg.fit_range
    ks = np.arange(k0, k1 + 1, dtype=np.float64)
    slope, r2 = _linear_fit(ks, curve[k0:k1 + 1])
    return LyapunovEstimate(slope / h, cfg, r2, len(s), h, curve)


def auto_config(series, *, fit_range: tuple[int, int] = (1, 50), fallback_delay: int | None = None,
                fallback_dimension: int = 3, neighbor_count: int = 1,
                delay: int | None = None, dimension: int | None = None,
                theiler_window: int | None = None) -> EmbeddingConfig:
    """Embedding parameters from the data, with fallbacks when selection fails.

    Delay: first mutual-information minimum, else ``fallback_delay`` (default 1).
    Dimension: false nearest neighbours, else ``fallback_dimension``.
    Theiler window: ``delay * dimension``.  Explicit arguments win.
    """
    s = _as_series(series)
    if np.ptp(s) == 0:
        raise DegenerateSeries("constant series")
    if delay is None:
        try:
            delay = choose_delay(s)
        except NoMinimumFound:
            delay = fallback_delay if fallback_delay is not None else 1
    if dimension is None:
        try:
            dimension = choose_dimension(s, delay)
        except NoMinimumFound:
            dimension = fallback_dimension
    if theiler_window is None:
        theiler_window = delay * dimension
    return EmbeddingConfig(delay, dimension, theiler_window, tuple(fit_range), neighbor_count)


def with_overrides(cfg: EmbeddingConfig, **overrides) -> EmbeddingConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides)


def autocorrelation_peak(series, min_lag: int, max_lag: int | None = None) -> tuple[float, int]:
    """Largest Pearson autocorrelation over lags ``min_lag .. max_lag``.

    Each lag correlates ``s[:-L]`` with ``s[L:]``.  ``max_lag`` defaults to half
    the series length.  Returns ``(peak, lag)``.
    """
    s = _as_series(series)
    n = len(s)
    if max_lag is None:
        max_lag = n // 2
    if not 1 <= min_lag <= max_lag < n - 1:
        raise SeriesTooShort(f"lag range [{min_lag}, {max_lag}] does not fit {n} samples")
    best, best_lag = -np.inf, min_lag
    for lag in range(min_lag, max_lag + 1):
        a, b = s[:-lag], s[lag:]
        a = a - a.mean()
        b = b - b.mean()
        den = np.sqrt(np.dot(a, a) * np.dot(b, b))
        r = 0.0 if den == 0 else float(np.dot(a, b) / den)
        if r > best:
            best, best_lag = r, lag
    return best, best_lag
