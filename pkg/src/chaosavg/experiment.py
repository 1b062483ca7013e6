"""Experiment configuration, CSV series I/O and the six-cell reproduction run."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .lyapunov import (
    DegenerateSeries,
    LyapunovEstimate,
    SeriesTooShort,
    auto_config,
    autocorrelation_peak,
    estimate_lambda_max,
)
from .models import get_model
from .odecore import NonFiniteState, StepperConfig, get_tableau
from .orbits import (
    CoupledOrbitPair,
    PseudoOrbit,
    RoundingPolicy,
    divergence,
    parse_policy,
    run_filtered,
    run_traditional,
)
from .rounding import Backend, hardware_available, parse_backend, parse_mode

log = logging.getLogger(__name__)

# Largest Lyapunov exponents reported for the reference runs: (traditional, filtered).
REFERENCE_TABLE = {
    "rk3": (0.344215, -0.011370),
    "rk4": (0.087915, -0.001371),
    "rk5": (0.165580, -0.001362),
}

TRADITIONAL_MIN = 0.02
FILTERED_MAX = 0.01
PERIODIC_PEAK = 0.95


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    model: str = "lorenz"
    sigma: float = 7.6
    rho: float = 65.0
    beta: float = 5.3
    y0: list[float] = field(default_factory=lambda: [0.06735, 1.8841, 15.7734])
    h: float = 0.01
    t_final: float = 100.0
    method: str = "rk4"
    filter: bool = False
    mode: str = "to_nearest_even"
    rounding_backend: str = "hardware"
    policy: str = "strict"
    # largest-Lyapunov-exponent estimation; None selects automatically
    lyap_tau: int | None = None
    lyap_m: int | None = None
    lyap_theiler: int | None = None
    lyap_fit_kmin: int = 100
    lyap_fit_kmax: int = 300
    lyap_neighbors: int = 1
    lyap_transient: float = 50.0
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        errors = []

        def check(ok, name, msg):
            if not ok:
                errors.append(f"{name}: {msg}")

        try:
            model = get_model(self.model)
        except KeyError as exc:
            errors.append(f"model: {exc.args[0]}")
            model = None
        for name in ("sigma", "rho", "beta", "h", "t_final", "lyap_transient"):
            v = getattr(self, name)
            check(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v),
                  name, f"must be a finite number, got {v!r}")
        if not errors:
            check(self.h > 0, "h", "must be > 0")
            check(self.t_final > 0, "t_final", "must be > 0")
            check(self.t_final / self.h >= 0.5, "t_final", "must be at least one step h")
            check(self.lyap_transient >= 0, "lyap_transient", "must be >= 0")
            if self.model == "lorenz":
                check(self.sigma > 0, "sigma", "must be > 0")
                check(self.beta > 0, "beta", "must be > 0")
        if not (isinstance(self.y0, (list, tuple)) and self.y0
                and all(isinstance(v, (int, float)) and math.isfinite(v) for v in self.y0)):
            errors.append(f"y0: must be a non-empty list of finite numbers, got {self.y0!r}")
        elif model is not None and len(self.y0) != model.dim:
            errors.append(f"y0: model {model.name!r} needs {model.dim} components, got {len(self.y0)}")
        try:
            get_tableau(self.method)
        except KeyError as exc:
            errors.append(f"method: {exc.args[0]}")
        check(isinstance(self.filter, bool), "filter", "must be on/off")
        for name, parser in (("mode", parse_mode), ("rounding_backend", parse_backend),
                             ("policy", parse_policy)):
            try:
                parser(getattr(self, name))
            except (ValueError, AttributeError) as exc:
                errors.append(f"{name}: {exc}")
        for name in ("lyap_tau", "lyap_m", "lyap_theiler"):
            v = getattr(self, name)
            check(v is None or (isinstance(v, int) and not isinstance(v, bool) and v >= 0),
                  name, "must be a non-negative integer or null")
        check(self.lyap_tau is None or self.lyap_tau >= 1, "lyap_tau", "must be >= 1")
        check(self.lyap_m is None or self.lyap_m >= 2, "lyap_m", "must be >= 2")
        check(isinstance(self.lyap_fit_kmin, int) and isinstance(self.lyap_fit_kmax, int)
              and 0 <= self.lyap_fit_kmin < self.lyap_fit_kmax,
              "lyap_fit_kmin", "need integers with 0 <= lyap_fit_kmin < lyap_fit_kmax")
        check(isinstance(self.lyap_neighbors, int) and self.lyap_neighbors >= 1,
              "lyap_neighbors", "must be a positive integer")
        if errors:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
        return self

    # -- accessors -------------------------------------------------------

    def params(self):
        model = get_model(self.model)
        if model.name == "lorenz":
            return model.make_params(sigma=float(self.sigma), rho=float(self.rho), beta=float(self.beta))
        return model.make_params()

    def stepper(self) -> StepperConfig:
        return StepperConfig(float(self.h), float(self.t_final), get_tableau(self.method))

    def backend(self) -> Backend:
        b = parse_backend(self.rounding_backend)
        if b is Backend.HARDWARE and not hardware_available():
            log.warning("hardware rounding control unavailable; using the emulated backend")
            return Backend.EMULATED
        return b

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["filter"] = "on" if self.filter else "off"
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(
                f"{k}: unknown key" for k in unknown))
        data = dict(data)
        if "filter" in data:
            data["filter"] = _parse_switch(data["filter"])
        if "y0" in data and isinstance(data["y0"], tuple):
            data["y0"] = list(data["y0"])
        return cls(**data).validate()

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a flat JSON object")
        return cls.from_dict(data)


def _parse_switch(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("on", "true", "yes", "1"):
        return True
    if s in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"invalid configuration:\n  filter: expected on/off, got {v!r}")


def default_config_text() -> str:
    return resources.files("chaosavg").joinpath("default_config.json").read_text()


# ---------------------------------------------------------------------------
# simulation and CSV

TRADITIONAL_HEADER = ["step", "t", "x", "y", "z"]
FILTERED_HEADER = ["step", "t", "x_lo", "y_lo", "z_lo", "x_hi", "y_hi", "z_hi",
                   "x_avg", "y_avg", "z_avg", "delta"]


def simulate(cfg: ExperimentConfig) -> PseudoOrbit | CoupledOrbitPair:
    model = get_model(cfg.model)
    args = (model, cfg.params(), tuple(float(v) for v in cfg.y0), cfg.stepper())
    if cfg.filter:
        return run_filtered(*args, policy=parse_policy(cfg.policy), backend=cfg.backend())
    return run_traditional(*args, mode=parse_mode(cfg.mode), backend=cfg.backend())


def _fmt(v: float) -> str:
    # repr is the shortest string that parses back to the same binary64
    return repr(float(v))


def _labels(dim: int, suffix: str = "") -> list[str]:
    names = ["x", "y", "z"] if dim == 3 else [f"s{i}" for i in range(dim)]
    return [n + suffix for n in names]


def orbit_rows(result: PseudoOrbit | CoupledOrbitPair) -> tuple[list[str], Iterable[list[str]]]:
    if isinstance(result, CoupledOrbitPair):
        dim = result.lower.states.shape[1]
        header = ["step", "t"] + _labels(dim, "_lo") + _labels(dim, "_hi") + _labels(dim, "_avg") + ["delta"]
        delta = divergence(result).values
        h = result.lower.h

        def rows():
            for k, (lo, hi, av) in enumerate(zip(result.lower.states, result.upper.states,
                                                 result.averaged.states)):
                yield ([str(k), _fmt(k * h)] + [_fmt(v) for v in lo] + [_fmt(v) for v in hi]
                       + [_fmt(v) for v in av] + [_fmt(delta[k])])
    else:
        dim = result.states.shape[1]
        header = ["step", "t"] + _labels(dim)
        h = result.h

        def rows():
            for k, s in enumerate(result.states):
                yield [str(k), _fmt(k * h)] + [_fmt(v) for v in s]
    return header, rows()


def write_csv(result, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header, rows = orbit_rows(result)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of an emitted series file, keyed by header name."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: list[list[float]] = [[] for _ in header]
        for row in reader:
            for i, v in enumerate(row):
                cols[i].append(float(v))
    return {name: np.array(c) for name, c in zip(header, cols)}


def read_series(path: str | Path, column: str | None = None) -> tuple[np.ndarray, float | None]:
    """A scalar series from an emitted CSV or a headerless one-column file.

    Returns the series and its sample interval when a ``t`` column is present.
    The default column is ``x_avg`` for filtered files and ``x`` otherwise.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        first = fh.readline()
    try:
        float(first.split(",")[0])
        headerless = True
    except ValueError:
        headerless = False
    if headerless:
        if column is not None:
            raise ConfigError(f"column: {path} has no header, cannot select {column!r}")
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        return data[:, 0].astype(np.float64), None
    cols = read_csv(path)
    if column is None:
        column = "x_avg" if "x_avg" in cols else ("x" if "x" in cols else None)
    if column is None or column not in cols:
        raise ConfigError(f"column: {column!r} not found in {path} (have {sorted(cols)})")
    h = None
    t = cols.get("t")
    if t is not None and len(t) > 1:
        h = float(t[1] - t[0])
    return cols[column], h


# ---------------------------------------------------------------------------
# Lyapunov estimation of orbits

def lyapunov_of_series(series, h: float, cfg: ExperimentConfig) -> LyapunovEstimate:
    """Estimate after dropping ``cfg.lyap_transient`` seconds of transient."""
    s = np.asarray(series, dtype=np.float64)
    skip = int(round(cfg.lyap_transient / h))
    if skip >= len(s):
        raise SeriesTooShort(f"transient of {cfg.lyap_transient} s consumes the whole series")
    s = s[skip:]
    emb = auto_config(
        s,
        fit_range=(cfg.lyap_fit_kmin, cfg.lyap_fit_kmax),
        delay=cfg.lyap_tau,
        dimension=cfg.lyap_m,
        theiler_window=cfg.lyap_theiler,
        neighbor_count=cfg.lyap_neighbors,
    )
    return estimate_lambda_max(s, h, emb)


def x_series(result: PseudoOrbit | CoupledOrbitPair) -> np.ndarray:
    orbit = result.averaged if isinstance(result, CoupledOrbitPair) else result
    return orbit.states[:, 0]


def periodicity(series, h: float, window: float | None = None, min_lag_s: float = 1.0) -> tuple[float, float]:
    """Autocorrelation peak (and its lag in seconds) over the last ``window`` seconds."""
    s = np.asarray(series, dtype=np.float64)
    if window is not None:
        s = s[-(int(round(window / h)) + 1):]
    peak, lag = autocorrelation_peak(s, max(1, int(round(min_lag_s / h))))
    return peak, lag * h


# ---------------------------------------------------------------------------
# reproduction

@dataclass
class CellResult:
    lam: float | None = None
    fit_r2: float | None = None
    tau: int | None = None
    m: int | None = None
    ac_peak: float | None = None
    ac_lag: float | None = None
    error: str | None = None


@dataclass
class ReproductionRow:
    method: str
    lambda_traditional: float | None
    lambda_filtered: float | None
    ref_traditional: float
    ref_filtered: float
    sign_match: tuple[bool, bool]
    runtime: float
    traditional: CellResult = field(default_factory=CellResult)
    filtered: CellResult = field(default_factory=CellResult)
    filtered_alt: CellResult | None = None

    @property
    def ok(self) -> bool:
        return (self.lambda_traditional is not None and self.lambda_filtered is not None
                and self.lambda_traditional > TRADITIONAL_MIN
                and self.lambda_filtered < FILTERED_MAX)


@dataclass
class ReproductionReport:
    rows: list[ReproductionRow]
    backend: str
    policy: str

    @property
    def criteria_met(self) -> bool:
        return len(self.rows) == 3 and all(r.ok for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "policy": self.policy,
            "criteria_met": self.criteria_met,
            "rows": [dataclasses.asdict(r) | {"ok": r.ok} for r in self.rows],
        }

    def table(self) -> str:
        lines = [
            f"backend={self.backend} policy={self.policy}",
            f"{'method':<7}{'lambda_trad':>13}{'lambda_filt':>13}{'ref_trad':>12}"
            f"{'ref_filt':>12}{'signs':>8}{'trad_ac':>9}{'filt_ac':>9}{'time_s':>8}",
        ]

        def num(v, w, p=6):
            return f"{'ERR':>{w}}" if v is None else f"{v:>{w}.{p}f}"

        for r in self.rows:
            signs = "".join("+" if s else "-" for s in r.sign_match)
            lines.append(
                f"{r.method:<7}{num(r.lambda_traditional, 13)}{num(r.lambda_filtered, 13)}"
                f"{r.ref_traditional:>12.6f}{r.ref_filtered:>12.6f}{signs:>8}"
                f"{num(r.traditional.ac_peak, 9, 3)}{num(r.filtered.ac_peak, 9, 3)}{r.runtime:>8.2f}")
            for tag, cell in (("traditional", r.traditional), ("filtered", r.filtered)):
                if cell.error:
                    lines.append(f"  {r.method} {tag}: {cell.error}")
            if r.filtered_alt is not None:
                alt = r.filtered_alt
                lines.append(f"  {r.method} matlab_faithful fallback: lambda={num(alt.lam, 0)} "
                             f"ac_peak={num(alt.ac_peak, 0, 3)}" + (f" error={alt.error}" if alt.error else ""))
        lines.append("criteria " + ("met" if self.criteria_met else "NOT met"))
        return "\n".join(lines)


def _cell(cfg: ExperimentConfig, window: float | None, series_out: Path | None) -> CellResult:
    cell = CellResult()
    try:
        result = simulate(cfg)
        if series_out is not None:
            write_csv(result, series_out)
        x = x_series(result)
        cell.ac_peak, cell.ac_lag = periodicity(x, cfg.h, window)
        est = lyapunov_of_series(x, cfg.h, cfg)
        cell.lam, cell.fit_r2 = est.lambda_max, est.fit_r2
        cell.tau, cell.m = est.config.delay, est.config.dimension
    except (NonFiniteState, SeriesTooShort, DegenerateSeries, ValueError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def reproduce(base: ExperimentConfig | None = None, out_dir: str | Path | None = None,
              methods: Iterable[str] = ("rk3", "rk4", "rk5")) -> ReproductionReport:
    """Traditional and filtered runs for each method, with estimated exponents.

    The traditional x-series must look aperiodic over the whole run and the
    filtered one periodic over its last 50 s.  A filtered cell that is not
    periodic under the configured policy is re-run under the other policy and
    both outcomes are kept.
    """
    base = base or ExperimentConfig()
    base.validate()
    out = Path(out_dir) if out_dir is not None else None
    rows = []
    for method in methods:
        t0 = time.perf_counter()
        trad_cfg = dataclasses.replace(base, method=method, filter=False)
        filt_cfg = dataclasses.replace(base, method=method, filter=True)
        trad = _cell(trad_cfg, None, out / f"{method}_traditional.csv" if out else None)
        filt = _cell(filt_cfg, 50.0, out / f"{method}_filtered.csv" if out else None)
        alt = None
        if filt.error is None and (filt.ac_peak or 0.0) <= PERIODIC_PEAK:
            other = (RoundingPolicy.MATLAB_FAITHFUL
                     if parse_policy(base.policy) is RoundingPolicy.STRICT else RoundingPolicy.STRICT)
            alt = _cell(dataclasses.replace(filt_cfg, policy=str(other)), 50.0, None)
        ref_t, ref_f = REFERENCE_TABLE[method]
        signs = (
            trad.lam is not None and (trad.lam > 0) == (ref_t > 0),
            filt.lam is not None and (filt.lam > 0) == (ref_f > 0),
        )
        rows.append(ReproductionRow(method, trad.lam, filt.lam, ref_t, ref_f, signs,
                                    time.perf_counter() - t0, trad, filt, alt))
    report = ReproductionReport(rows, str(base.backend()), str(parse_policy(base.policy)))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        (out / "report.txt").write_text(report.table() + "\n")
        base.dump(out / "config.json")
    return report
