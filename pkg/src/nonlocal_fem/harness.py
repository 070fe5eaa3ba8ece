"""Error measurement, convergence studies and result files."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import FitError, FixedPointError, MeshWarning, SolverError
from .femspace import build_space
from .geometry import eval_gamma, map_to_moving
from .integrators import Discretization, FixedPointParams, TimeGrid, canonical_method, integrate
from .problem import PROBLEMS, transform_problem, with_horizon

log = logging.getLogger(__name__)

CSV_HEADER = ("method", "k", "h", "delta", "eq", "error_l2", "error_maxnodal", "cpu_ms", "slope")

# rows used for each fitted slope (finest values only)
FIT_ROWS = 3


def error_l2_moving(space, coef, exact_u, motion, T, npts=None):
    """L2 norm over (alpha(T), beta(T)) of ``U(y(x)) - u(x, T)``.

    Integrated on the unit interval with ``dx = gamma(T) dy`` and k+3
    Gauss points per element.
    """
    npts = space.degree + 3 if npts is None else npts
    y, wq = space.quadrature_points(npts)
    gamma = eval_gamma(motion, T)
    x = motion.alpha(T) + gamma * y
    diff = space.values_at_quadrature(coef, npts) - exact_u(x, T)
    return float(np.sqrt(gamma * np.sum(wq * diff**2)))


def max_nodal_error(space, coef, exact_u, motion, t):
    x = map_to_moving(motion, space.node_positions, t)
    return float(np.max(np.abs(exact_u(x, t) - np.asarray(coef))))


def estimate_slope(points):
    """Least-squares slope of log(error) against log(parameter).

    Points with a nonpositive (or non-finite) error or parameter are
    dropped with a :class:`MeshWarning`.
    """
    usable = []
    for p, e in points:
        if p > 0 and e > 0 and math.isfinite(p) and math.isfinite(e):
            usable.append((p, e))
        else:
            warnings.warn(f"dropping point ({p!r}, {e!r}) from slope fit", MeshWarning, stacklevel=2)
    if len(usable) < 2:
        raise FitError(f"need at least 2 usable points, got {len(usable)}")
    logp = np.log([p for p, _ in usable])
    loge = np.log([e for _, e in usable])
    if np.ptp(logp) == 0:
        raise FitError("all parameter values are equal")
    slope, _ = np.polyfit(logp, loge, 1)
    return float(slope)


@dataclass(frozen=True)
class Experiment:
    """One solve: problem name (or factory), scheme, degree, mesh and step."""

    problem: str | Callable = "self-manufactured"
    method: str = "lcn"
    degree: int = 2
    elements: int = 100
    delta: float = 1e-2
    horizon: float = 1.0
    fixed_point: FixedPointParams = field(default_factory=FixedPointParams)
    warn_unstable: bool = True

    @property
    def h(self):
        return 1.0 / self.elements

    def build(self):
        factory = PROBLEMS[self.problem] if isinstance(self.problem, str) else self.problem
        moving, exact = factory(horizon=self.horizon)
        return with_horizon(moving, self.horizon), exact


@dataclass
class RunReport:
    method: str
    k: int
    h: float
    delta: float
    errors_l2: tuple[float, ...]
    errors_max: tuple[float, ...]
    cpu_ms: float
    iterations: int
    failure: str | None = None

    @property
    def failed(self):
        return self.failure is not None


def run_experiment(exp, observer=None):
    """Solve ``exp`` and measure errors at the final time.

    Solver failures are caught and reported in ``RunReport.failure``.
    """
    method = canonical_method(exp.method)
    moving, exact = exp.build()
    fixed = transform_problem(moving)
    space = build_space(exp.elements, exp.degree)
    nan = (math.nan,) * moving.equation_count
    try:
        grid = TimeGrid.from_horizon(exp.horizon, exp.delta)
        ctx = Discretization(space, fixed, grid)
        start = time.perf_counter()
        traj = integrate(
            ctx,
            method,
            exp.fixed_point,
            store_levels=False,
            observer=observer,
            warn_unstable=exp.warn_unstable,
        )
        cpu_ms = 1e3 * (time.perf_counter() - start)
    except (FixedPointError, SolverError, ValueError, ArithmeticError) as exc:
        log.warning("run failed: %s", exc)
        return RunReport(method, exp.degree, exp.h, exp.delta, nan, nan, math.nan, 0, str(exc))

    if exact is None:
        l2, mx = nan, nan
    else:
        T = grid.horizon
        l2 = tuple(
            error_l2_moving(space, traj.final[i], exact.u[i], moving.motion, T)
            for i in range(moving.equation_count)
        )
        mx = tuple(
            max_nodal_error(space, traj.final[i], exact.u[i], moving.motion, T)
            for i in range(moving.equation_count)
        )
    return RunReport(method, exp.degree, exp.h, grid.delta, l2, mx, cpu_ms, traj.total_iterations)


@dataclass
class ConvergenceTable:
    vary: str
    method: str
    rows: list[RunReport]
    slopes: tuple[float, ...]

    def parameter(self, row):
        return row.h if self.vary == "h" else row.delta

    def points(self, eq):
        return [(self.parameter(r), r.errors_l2[eq]) for r in self.rows if not r.failed]

    @property
    def any_failed(self):
        return any(r.failed for r in self.rows) or any(math.isnan(s) for s in self.slopes)


def _experiments(base, vary, values):
    out = []
    for v in values:
        if vary == "h":
            n = round(1.0 / v)
            if n < 2 or abs(n * v - 1.0) > 1e-9:
                raise ValueError(f"h={v} does not divide the unit interval")
            out.append(replace(base, elements=n))
        elif vary == "delta":
            out.append(replace(base, delta=float(v)))
        else:
            raise ValueError(f"vary must be 'h' or 'delta', got {vary!r}")
    return out


def default_workers():
    env = os.environ.get("NONLOCAL_FEM_MAX_WORKERS")
    return max(1, int(env)) if env else 1


def convergence_study(base, vary, values, workers=None):
    """Run ``base`` once per value of ``h`` or ``delta`` and fit slopes.

    ``values`` must be strictly decreasing; each slope uses the
    :data:`FIT_ROWS` finest successful rows.
    """
    values = [float(v) for v in values]
    if len(values) < 3:
        raise ValueError("a convergence study needs at least 3 values")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ValueError("refinement values must be strictly decreasing")
    exps = _experiments(base, vary, values)
    workers = default_workers() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_experiment, exps))
    else:
        rows = [run_experiment(e) for e in exps]

    table = ConvergenceTable(vary, canonical_method(base.method), rows, ())
    n_eq = len(rows[0].errors_l2)
    slopes = []
    for eq in range(n_eq):
        pts = table.points(eq)[-FIT_ROWS:]
        try:
            slopes.append(estimate_slope(pts))
        except FitError as exc:
            log.warning("slope fit failed for eq %d: %s", eq + 1, exc)
            slopes.append(math.nan)
    table.slopes = tuple(slopes)
    return table


def compare_integrators(base, methods=("euler", "cn", "lcn")):
    return [run_experiment(replace(base, method=m)) for m in methods]


def nodal_error_history(exp, times):
    """Max nodal error per equation at each of ``times`` (which must lie on the grid).

    Returns an array of shape ``(len(times), n_e)``.
    """
    grid = TimeGrid.from_horizon(exp.horizon, exp.delta)
    wanted = {round(t / grid.delta): j for j, t in enumerate(times)}
    moving, exact = exp.build()
    space = build_space(exp.elements, exp.degree)
    out = np.full((len(times), moving.equation_count), np.nan)

    def observe(n, t, state):
        j = wanted.get(n)
        if j is not None:
            for i in range(moving.equation_count):
                out[j, i] = max_nodal_error(space, state[i], exact.u[i], moving.motion, t)

    ctx = Discretization(space, transform_problem(moving), grid)
    integrate(ctx, exp.method, exp.fixed_point, store_levels=False, observer=observe,
              warn_unstable=exp.warn_unstable)
    return out


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def result_rows(results, timing=True):
    """Flatten reports/tables into CSV rows in a fixed order."""
    if isinstance(results, (RunReport, ConvergenceTable)):
        results = [results]
    rows = []
    for item in results:
        if isinstance(item, ConvergenceTable):
            reports = [(r, item.slopes) for r in item.rows]
        else:
            reports = [(item, None)]
        for rep, slopes in reports:
            for eq in range(len(rep.errors_l2)):
                rows.append([
                    rep.method,
                    _fmt(rep.k),
                    _fmt(rep.h),
                    _fmt(rep.delta),
                    str(eq + 1),
                    _fmt(rep.errors_l2[eq]),
                    _fmt(rep.errors_max[eq]),
                    _fmt(rep.cpu_ms) if timing else "",
                    "" if slopes is None else _fmt(slopes[eq]),
                ])
    return rows


def write_results(results, path, timing=True):
    """Write reports or tables as CSV with the fixed header.

    ``timing=False`` leaves the ``cpu_ms`` column empty so identical runs
    give byte-identical files.
    """
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            writer.writerows(result_rows(results, timing))
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def write_gnuplot(table, path):
    """Two columns ``log10(parameter) log10(error_l2)``, one block per equation."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for eq in range(len(table.slopes)):
                if eq:
                    fh.write("\n\n")
                fh.write(f"# method={table.method} vary={table.vary} eq={eq + 1} "
                         f"slope={_fmt(table.slopes[eq])}\n")
                for p, e in table.points(eq):
                    if e > 0:
                        fh.write(f"{_fmt(math.log10(p))} {_fmt(math.log10(e))}\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
