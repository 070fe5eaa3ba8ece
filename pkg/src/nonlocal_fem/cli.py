"""Command line front end.

Subcommands::

    solve                one run, errors at the final time
    converge-h           sweep over mesh sizes (``--h 1/8,1/16,1/32``)
    converge-dt          sweep over time steps (``--delta 0.1,0.05,0.025``)
    compare-integrators  all three schemes on one grid

Options can also come from a ``key = value`` file given with ``--config``;
flags override the file.
"""

from __future__ import annotations

import argparse
import configparser
import importlib
import logging
import sys
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError, StabilityWarning
from .harness import (
    Experiment,
    compare_integrators,
    convergence_study,
    default_workers,
    run_experiment,
    write_gnuplot,
    write_results,
)
from .integrators import METHODS, FixedPointParams, canonical_method, stability_limit
from .problem import PROBLEMS

log = logging.getLogger(__name__)

KEYS = {
    "problem", "method", "degree", "elements", "h", "delta", "t", "tol", "max_iter",
    "output", "format", "stability_override", "plugin", "workers", "timing",
}
_KEY_ALIASES = {"k": "degree", "horizon": "t", "max_iterations": "max_iter", "dt": "delta"}


@dataclass
class RunConfig:
    problem: str = "paper-example"
    methods: tuple[str, ...] = ("lcn",)
    degree: int = 2
    h: tuple[float, ...] = (0.01,)
    delta: tuple[float, ...] = (0.01,)
    horizon: float = 1.0
    tol: float = 1e-12
    max_iter: int = 50
    output: str | None = None
    format: str = "csv"
    stability_override: bool = False
    plugin: str | None = None
    workers: int = field(default_factory=default_workers)
    timing: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def mode(self):
        if len(self.h) > 1:
            return "h-sweep"
        if len(self.delta) > 1:
            return "dt-sweep"
        return "single"

    def experiment(self, method=None):
        return Experiment(
            problem=self.problem,
            method=method or self.methods[0],
            degree=self.degree,
            elements=_elements_for(self.h[0]),
            delta=self.delta[0],
            horizon=self.horizon,
            fixed_point=FixedPointParams(self.tol, self.max_iter),
            warn_unstable=False,
        )


def _number(key, text):
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(key, f"malformed number {text!r}") from None


def _numbers(key, text):
    items = [s for s in str(text).replace(";", ",").split(",") if s.strip()]
    if not items:
        raise ConfigError(key, "empty list")
    return tuple(_number(key, s) for s in items)


def _integer(key, text):
    value = _number(key, str(text))
    if value != int(value):
        raise ConfigError(key, f"expected an integer, got {text!r}")
    return int(value)


def _flag(key, text):
    val = str(text).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def _elements_for(h):
    return round(1.0 / h)


def load_plugin(module):
    """Import ``module`` so that it can call :func:`register_problem`."""
    try:
        importlib.import_module(module)
    except ImportError as exc:
        raise ConfigError("plugin", f"cannot import {module!r}: {exc}") from exc


def config_from_mapping(items):
    """Validate string-valued ``items`` into a :class:`RunConfig`."""
    cfg = RunConfig()
    values = {}
    for raw_key, raw in items.items():
        key = _KEY_ALIASES.get(raw_key.strip().lower(), raw_key.strip().lower())
        if key not in KEYS:
            raise ConfigError(raw_key, "unknown key")
        values[key] = str(raw).strip()

    if "plugin" in values:
        cfg.plugin = values["plugin"]
        load_plugin(cfg.plugin)
    if "problem" in values:
        cfg.problem = values["problem"]
    if cfg.problem not in PROBLEMS:
        raise ConfigError("problem", f"unknown problem {cfg.problem!r}; known: {sorted(PROBLEMS)}")
    if "method" in values:
        try:
            cfg.methods = tuple(
                canonical_method(m.strip()) for m in values["method"].split(",") if m.strip()
            )
        except ValueError as exc:
            raise ConfigError("method", str(exc)) from None
        if not cfg.methods:
            raise ConfigError("method", "empty")
    if "degree" in values:
        cfg.degree = _integer("degree", values["degree"])
        if not 1 <= cfg.degree <= 10:
            raise ConfigError("degree", "must be between 1 and 10")
    if "elements" in values and "h" in values:
        raise ConfigError("elements", "give either elements or h, not both")
    if "elements" in values:
        n = _integer("elements", values["elements"])
        if n < 2:
            raise ConfigError("elements", "need at least 2 elements")
        cfg.h = (1.0 / n,)
    if "h" in values:
        cfg.h = _numbers("h", values["h"])
        for h in cfg.h:
            n = _elements_for(h) if h > 0 else 0
            if n < 2 or abs(n * h - 1.0) > 1e-9:
                raise ConfigError("h", f"h={h} must be 1/n with n >= 2")
    if "delta" in values:
        cfg.delta = _numbers("delta", values["delta"])
    if "t" in values:
        cfg.horizon = _number("T", values["t"])
    if "tol" in values:
        cfg.tol = _number("tol", values["tol"])
    if "max_iter" in values:
        cfg.max_iter = _integer("max_iter", values["max_iter"])
    if "output" in values:
        cfg.output = values["output"]
    if "format" in values:
        cfg.format = values["format"].lower()
        if cfg.format not in ("csv", "gnuplot"):
            raise ConfigError("format", "must be csv or gnuplot")
    if "stability_override" in values:
        cfg.stability_override = _flag("stability_override", values["stability_override"])
    if "timing" in values:
        cfg.timing = _flag("timing", values["timing"])
    if "workers" in values:
        cfg.workers = _integer("workers", values["workers"])

    for key, val in (("T", cfg.horizon), ("tol", cfg.tol)):
        if not val > 0:
            raise ConfigError(key, "must be positive")
    if cfg.max_iter < 1:
        raise ConfigError("max_iter", "must be positive")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be positive")
    for d in cfg.delta:
        if not d > 0:
            raise ConfigError("delta", "must be positive")
    if len(cfg.h) > 1 and len(cfg.delta) > 1:
        raise ConfigError("h", "sweep either h or delta, not both")
    for seq, key in ((cfg.h, "h"), (cfg.delta, "delta")):
        if len(seq) > 1 and any(b >= a for a, b in zip(seq, seq[1:])):
            raise ConfigError(key, "sweep values must be strictly decreasing")

    _check_stability(cfg)
    return cfg


def _check_stability(cfg):
    moving, _ = PROBLEMS[cfg.problem](horizon=cfg.horizon)
    for method in cfg.methods:
        limit = stability_limit(method, moving.motion)
        for d in cfg.delta:
            if d > limit:
                msg = f"delta={d:g} exceeds the {method} stability bound {limit:g}"
                cfg.notes.append(msg)
                if not cfg.stability_override:
                    warnings.warn(msg, StabilityWarning, stacklevel=3)


def _read_items(source):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    text = source if source.lstrip().startswith("[") else "[run]\n" + source
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    items = {}
    for section in parser.sections():
        items.update(parser.items(section))
    return items


def parse_config(source):
    """Parse ``key = value`` lines (``#`` comments) into a :class:`RunConfig`.

    A leading ``[section]`` header is optional.
    """
    return config_from_mapping(_read_items(source))


def _print_reports(reports, out):
    print(f"{'method':6} {'k':>2} {'h':>10} {'delta':>10} {'eq':>2} {'error_l2':>12} {'max_nodal':>12} {'cpu_ms':>10}", file=out)
    for r in reports:
        for eq in range(len(r.errors_l2)):
            print(
                f"{r.method:6} {r.k:2d} {r.h:10.4g} {r.delta:10.4g} {eq + 1:2d} "
                f"{r.errors_l2[eq]:12.4e} {r.errors_max[eq]:12.4e} {r.cpu_ms:10.1f}",
                file=out,
            )
        if r.failed:
            print(f"  failed: {r.failure}", file=out)


def _print_table(table, out):
    label = "h" if table.vary == "h" else "delta"
    print(f"# {table.method}: convergence in {label}", file=out)
    print(f"{label:>10} {'eq':>2} {'error_l2':>12} {'cpu_ms':>10}", file=out)
    for r in table.rows:
        for eq in range(len(r.errors_l2)):
            print(f"{table.parameter(r):10.4g} {eq + 1:2d} {r.errors_l2[eq]:12.4e} {r.cpu_ms:10.1f}", file=out)
        if r.failed:
            print(f"  failed: {r.failure}", file=out)
    slopes = ", ".join(f"eq{eq + 1}={s:.3f}" for eq, s in enumerate(table.slopes))
    print(f"slope: {slopes}", file=out)


def _gnuplot_path(base, method, many):
    if not many:
        return base
    p = Path(base)
    return str(p.with_name(f"{p.stem}_{method}{p.suffix}"))


def run(cfg, command="solve", out=None):
    """Execute ``command`` for ``cfg``; returns the process exit status."""
    out = sys.stdout if out is None else out
    if not cfg.stability_override:
        for note in cfg.notes:
            print(f"note: {note}", file=out)

    if command == "compare-integrators":
        reports = compare_integrators(cfg.experiment(), METHODS)
        _print_reports(reports, out)
        if cfg.output:
            write_results(reports, cfg.output, timing=cfg.timing)
        return 1 if any(r.failed for r in reports) else 0

    mode = cfg.mode
    expected = {"solve": "single", "converge-h": "h-sweep", "converge-dt": "dt-sweep"}[command]
    if mode != expected:
        print(f"error: '{command}' needs {expected} parameters, config describes {mode}", file=sys.stderr)
        return 2

    if mode == "single":
        reports = [run_experiment(cfg.experiment(m)) for m in cfg.methods]
        _print_reports(reports, out)
        if cfg.output:
            write_results(reports, cfg.output, timing=cfg.timing)
        return 1 if any(r.failed for r in reports) else 0

    vary, values = ("h", cfg.h) if mode == "h-sweep" else ("delta", cfg.delta)
    tables = [
        convergence_study(cfg.experiment(m), vary, values, workers=cfg.workers) for m in cfg.methods
    ]
    for t in tables:
        _print_table(t, out)
    if cfg.output:
        if cfg.format == "gnuplot":
            for t in tables:
                write_gnuplot(t, _gnuplot_path(cfg.output, t.method, len(tables) > 1))
        else:
            write_results(tables, cfg.output, timing=cfg.timing)
    return 1 if any(t.any_failed for t in tables) else 0


def _build_parser():
    parser = argparse.ArgumentParser(prog="nonlocal-fem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "converge-h", "converge-dt", "compare-integrators"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file")
        p.add_argument("--problem", help=f"one of {sorted(PROBLEMS)} or a plugin name")
        p.add_argument("--method", help="euler, cn, lcn (comma list allowed)")
        p.add_argument("-k", "--degree")
        p.add_argument("--elements")
        p.add_argument("--h", help="mesh size or comma list, fractions allowed")
        p.add_argument("--delta", help="time step or comma list")
        p.add_argument("--T", dest="t")
        p.add_argument("--tol")
        p.add_argument("--max-iter", dest="max_iter")
        p.add_argument("--output")
        p.add_argument("--format", choices=("csv", "gnuplot"))
        p.add_argument("--plugin", help="module that registers extra problems")
        p.add_argument("--workers")
        p.add_argument("--stability-override", dest="stability_override", action="store_const", const="true")
        p.add_argument("--timing", dest="timing", action="store_const", const="true",
                       help="write cpu_ms to the result file (makes files run-dependent)")
        p.add_argument("--no-timing", dest="timing", action="store_const", const="false")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        items = {}
        if args.config:
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError("config", str(exc)) from None
            items = _read_items(text)
        flags = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "verbose") and v is not None}
        items.update(flags)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StabilityWarning)
            cfg = config_from_mapping(items)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg, args.command)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
