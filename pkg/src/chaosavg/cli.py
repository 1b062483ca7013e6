"""Command line: ``chaosavg simulate | lyapunov | reproduce``.

Exit statuses: 0 success (criteria met), 1 usage or configuration error,
2 data error, 3 reproduction criteria unmet.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .experiment import (
    ConfigError,
    ExperimentConfig,
    default_config_text,
    lyapunov_of_series,
    reproduce,
    simulate,
    write_csv,
    read_series,
    x_series,
)
from .lyapunov import DegenerateSeries, EmbeddingConfig, SeriesTooShort, estimate_lambda_max, with_overrides
from .odecore import NonFiniteState

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_UNMET = 0, 1, 2, 3

log = logging.getLogger("chaosavg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _logistic(n: int = 10_000, x0: float = 0.1234) -> np.ndarray:
    x = np.empty(n)
    x[0] = x0
    for i in range(1, n):
        x[i] = 4.0 * x[i - 1] * (1.0 - x[i - 1])
    return x


def _sine(n: int = 10_000) -> np.ndarray:
    return np.sin(2 * np.pi * np.arange(n) / 100.0)


# name -> (series factory, sample interval, embedding defaults)
BUILTIN_SERIES = {
    "logistic": (_logistic, 1.0, EmbeddingConfig(delay=1, dimension=2, theiler_window=0, fit_range=(0, 5))),
    "sine": (_sine, 1.0, EmbeddingConfig(delay=25, dimension=2, theiler_window=50, fit_range=(1, 50))),
}


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment configuration (defaults otherwise)")
    p.add_argument("--method", choices=["rk3", "rk4", "rk5"])
    p.add_argument("--filter", choices=["on", "off"])
    p.add_argument("--backend", choices=["hardware", "emulated"])
    p.add_argument("--policy", choices=["strict", "matlab_faithful"])


def _add_lyap_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--theiler", type=int)
    p.add_argument("--fit-kmin", type=int)
    p.add_argument("--fit-kmax", type=int)
    p.add_argument("--neighbors", type=int)
    p.add_argument("--transient", type=float, help="seconds dropped from the start")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chaosavg", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="integrate and write the orbit(s) as CSV")
    _add_run_options(p)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--emit-config", metavar="PATH", help="also write the effective configuration")

    p = sub.add_parser("lyapunov", help="largest Lyapunov exponent of a series")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--series", help="CSV from `simulate`, or a headerless one-column file")
    src.add_argument("--builtin", choices=sorted(BUILTIN_SERIES))
    p.add_argument("--column", help="column of --series (default x_avg, else x)")
    p.add_argument("--h", type=float, help="sample interval for files without a t column")
    _add_run_options(p)
    _add_lyap_options(p)

    p = sub.add_parser("reproduce", help="all methods, traditional and filtered, with exponents")
    p.add_argument("--config", help="JSON configuration used as the base of every cell")
    p.add_argument("--backend", choices=["hardware", "emulated"])
    p.add_argument("--policy", choices=["strict", "matlab_faithful"])
    p.add_argument("--out", help="directory for report.json, report.txt and the series CSVs")

    p = sub.add_parser("defaults", help="print the default configuration file")
    return parser


def _config_from(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    updates = {}
    if getattr(args, "method", None):
        updates["method"] = args.method
    if getattr(args, "filter", None):
        updates["filter"] = args.filter == "on"
    if getattr(args, "backend", None):
        updates["rounding_backend"] = args.backend
    if getattr(args, "policy", None):
        updates["policy"] = args.policy
    if getattr(args, "out", None) and args.command == "simulate":
        updates["out"] = args.out
    for opt, key in (("tau", "lyap_tau"), ("m", "lyap_m"), ("theiler", "lyap_theiler"),
                     ("fit_kmin", "lyap_fit_kmin"), ("fit_kmax", "lyap_fit_kmax"),
                     ("neighbors", "lyap_neighbors"), ("transient", "lyap_transient")):
        v = getattr(args, opt, None)
        if v is not None:
            updates[key] = v
    return dataclasses.replace(cfg, **updates).validate()


def _print_kv(pairs: dict) -> None:
    for k, v in pairs.items():
        print(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")


def cmd_simulate(args) -> int:
    cfg = _config_from(args)
    out = Path(cfg.out or ("orbit_filtered.csv" if cfg.filter else "orbit.csv"))
    result = simulate(cfg)
    write_csv(result, out)
    if args.emit_config:
        cfg.dump(args.emit_config)
    print(f"wrote {out} ({len(x_series(result))} rows)")
    return EXIT_OK


def cmd_lyapunov(args) -> int:
    if args.builtin:
        factory, h, emb = BUILTIN_SERIES[args.builtin]
        emb = with_overrides(emb, delay=args.tau, dimension=args.m, theiler_window=args.theiler,
                             neighbor_count=args.neighbors)
        if args.fit_kmin is not None or args.fit_kmax is not None:
            emb = dataclasses.replace(emb, fit_range=(
                args.fit_kmin if args.fit_kmin is not None else emb.fit_range[0],
                args.fit_kmax if args.fit_kmax is not None else emb.fit_range[1]))
        est = estimate_lambda_max(factory(), h, emb)
    elif args.series:
        series, h = read_series(args.series, args.column)
        h = args.h if args.h is not None else (h if h is not None else 1.0)
        if args.transient is None:
            args.transient = 0.0
        est = lyapunov_of_series(series, h, _config_from(args))
    else:
        cfg = _config_from(args)
        est = lyapunov_of_series(x_series(simulate(cfg)), cfg.h, cfg)
    d = est.as_dict()
    _print_kv({"lambda": d["lambda"], "tau": d["tau"], "m": d["m"], "fit_r2": d["fit_r2"],
               "theiler_window": d["theiler_window"], "fit_range": f"{d['fit_kmin']}:{d['fit_kmax']}",
               "series_len": d["series_len"], "h": d["h"]})
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = _config_from(args)
    report = reproduce(cfg, args.out)
    print(report.table())
    return EXIT_OK if report.criteria_met else EXIT_UNMET


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"simulate": cmd_simulate, "lyapunov": cmd_lyapunov, "reproduce": cmd_reproduce}
    try:
        if args.command == "defaults":
            sys.stdout.write(default_config_text())
            return EXIT_OK
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SeriesTooShort, DegenerateSeries, NonFiniteState) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
