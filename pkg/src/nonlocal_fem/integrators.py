"""Fully discrete schemes for the transformed system on (0, 1).

All three schemes share the semidiscrete Galerkin form

    (dV_i/dt, W) + a_i(l(V)) b2 (V_i', W') - (b1 V_i', W) = (g_i, W)

and differ only in where the operator is evaluated in time and how the
nonlocal coefficient is resolved:

``euler``  backward Euler at t_{n+1}; coefficient implicit, fixed-point iteration.
``cn``     Crank-Nicolson at t_{n-1/2}; coefficient at the midpoint average,
           fixed-point iteration.
``lcn``    Crank-Nicolson with the coefficient at the extrapolation
           3/2 V^{n-1} - 1/2 V^{n-2}; one linear solve per step after a
           predictor-corrector first step.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import FixedPointError, SolverError, StabilityWarning
from .femspace import BandedMatrix, assemble_load, interpolate, solve_banded
from .geometry import b1_coefficients, eval_b2, eval_gamma
from .problem import eval_diffusion

log = logging.getLogger(__name__)

METHODS = ("euler", "cn", "lcn")
_ALIASES = {
    "euler": "euler",
    "backward_euler": "euler",
    "be": "euler",
    "cn": "cn",
    "crank_nicolson": "cn",
    "lcn": "lcn",
    "linearized_cn": "lcn",
    "linearised_cn": "lcn",
}


def canonical_method(method):
    try:
        return _ALIASES[method.lower().replace("-", "_")]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}") from None


@dataclass(frozen=True)
class TimeGrid:
    delta: float
    step_count: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.step_count < 1:
            raise ValueError("step_count must be >= 1")

    @classmethod
    def from_horizon(cls, horizon, delta):
        """Uniform grid on [0, horizon]; ``horizon / delta`` must be an integer."""
        n = round(horizon / delta)
        if n < 1 or abs(n * delta - horizon) > 1e-9 * horizon:
            raise ValueError(f"horizon {horizon} is not a multiple of delta {delta}")
        return cls(horizon / n, n)

    @property
    def horizon(self):
        return self.delta * self.step_count

    def time(self, n):
        return n * self.delta

    def midpoint(self, n):
        """``t_{n-1/2}``."""
        return (n - 0.5) * self.delta


@dataclass(frozen=True)
class FixedPointParams:
    tolerance: float = 1e-12
    max_iterations: int = 50

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class StepReport:
    iterations: int
    residual: float
    distances: tuple[float, ...] = ()


@dataclass
class Trajectory:
    """Coefficient vectors per stored level, shape ``(levels, n_e, n_p)``."""

    method: str
    times: np.ndarray
    levels: np.ndarray
    reports: list[StepReport]
    wall_seconds: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def final(self):
        return self.levels[-1]

    @property
    def total_iterations(self):
        return sum(r.iterations for r in self.reports)


class Discretization:
    """Space, transformed problem and time grid, plus the constant matrices.

    Mass and stiffness are taken from the space (assembled once); advection
    and load vectors are rebuilt for every time value requested.
    """

    def __init__(self, space, problem, grid):
        self.space = space
        self.problem = problem
        self.grid = grid

    @property
    def equation_count(self):
        return self.problem.equation_count

    @property
    def delta(self):
        return self.grid.delta

    @cached_property
    def mass(self):
        return self.space.mass

    @cached_property
    def stiffness(self):
        return self.space.stiffness

    def initial_state(self):
        return np.array([interpolate(self.space, v0) for v0 in self.problem.initial])

    def l_values(self, state, t):
        return eval_gamma(self.problem.motion, t) * (state @ self.space.basis_integrals)

    def diffusion(self, state, t):
        lv = self.l_values(state, t)
        return np.array([eval_diffusion(self.problem, i, lv) for i in range(self.equation_count)])

    def advection(self, t):
        c0, c1 = b1_coefficients(self.problem.motion, t)
        b0, b1 = self.space.advection_parts
        return c0 * b0.bands + c1 * b1.bands

    def loads(self, t):
        return np.array([assemble_load(self.space, g, t) for g in self.problem.forcing])


def _solve(bands, k, rhs):
    return solve_banded(BandedMatrix(bands, k), rhs)


def _euler_update(ctx, state, a, t_new, load, adv):
    k = ctx.space.degree
    delta = ctx.delta
    b2 = eval_b2(ctx.problem.motion, t_new)
    out = np.empty_like(state)
    for i in range(ctx.equation_count):
        lhs = ctx.mass.bands + delta * (b2 * a[i] * ctx.stiffness.bands - adv)
        out[i] = _solve(lhs, k, ctx.mass @ state[i] + delta * load[i])
    return out


def _midpoint_update(ctx, prev, a, t_half, load, adv=None):
    k = ctx.space.degree
    half = 0.5 * ctx.delta
    b2 = eval_b2(ctx.problem.motion, t_half)
    adv = ctx.advection(t_half) if adv is None else adv
    out = np.empty_like(prev)
    for i in range(ctx.equation_count):
        op = half * (b2 * a[i] * ctx.stiffness.bands - adv)
        lhs = ctx.mass.bands + op
        rhs = BandedMatrix(ctx.mass.bands - op, k) @ prev[i] + ctx.delta * load[i]
        out[i] = _solve(lhs, k, rhs)
    return out


def _fixed_point(update, coefficient, start, fp):
    current = start
    distances = []
    for it in range(1, fp.max_iterations + 1):
        new = update(coefficient(current))
        dist = float(np.max(np.abs(new - current))) if new.size else 0.0
        distances.append(dist)
        current = new
        if dist <= fp.tolerance:
            return current, StepReport(it, dist, tuple(distances))
    raise FixedPointError(distances[-1], fp.max_iterations)


def step_backward_euler(state, ctx, n, fp=FixedPointParams()):
    """Advance ``state`` (shape ``(n_e, n_p)``) from t_n to t_{n+1}.

    The coefficient ``a_i(l(V^{n+1}))`` is frozen at the current iterate,
    the linear system solved for the next iterate, starting from ``V^n``,
    until the max-norm change is at most ``fp.tolerance``.
    """
    t_new = ctx.grid.time(n + 1)
    load = ctx.loads(t_new)
    adv = ctx.advection(t_new)
    return _fixed_point(
        lambda a: _euler_update(ctx, state, a, t_new, load, adv),
        lambda v: ctx.diffusion(v, t_new),
        state,
        fp,
    )


def step_crank_nicolson(prev, ctx, n, fp=FixedPointParams()):
    """Advance ``prev`` from t_{n-1} to t_n with the coefficient at ``l((V^n + V^{n-1})/2)``."""
    t_half = ctx.grid.midpoint(n)
    load = ctx.loads(t_half)
    adv = ctx.advection(t_half)
    return _fixed_point(
        lambda a: _midpoint_update(ctx, prev, a, t_half, load, adv),
        lambda v: ctx.diffusion(0.5 * (v + prev), t_half),
        prev,
        fp,
    )


def stability_limit(method, motion):
    """Sufficient step-size bound: ``g0/(g0+g'max)`` for Euler, ``4 g0/(g'max+g0)`` otherwise."""
    g0, gp = motion.gamma0, motion.gamma_prime_max
    if canonical_method(method) == "euler":
        return g0 / (g0 + gp)
    return 4.0 * g0 / (gp + g0)


class _Recorder:
    def __init__(self, ctx, store_levels, observer):
        self.ctx = ctx
        self.store_levels = store_levels
        self.observer = observer
        self.times = []
        self.levels = []

    def __call__(self, n, state, last=False):
        t = self.ctx.grid.time(n)
        if self.observer is not None:
            self.observer(n, t, state)
        if self.store_levels or n == 0 or last:
            self.times.append(t)
            self.levels.append(state.copy())


def _run_implicit(ctx, step, fp, record):
    state = ctx.initial_state()
    record(0, state)
    reports = []
    for n in range(ctx.grid.step_count):
        try:
            state, rep = step(state, ctx, n, fp)
        except FixedPointError as exc:
            exc.step = n + 1
            exc.args = (f"{exc.args[0]} (step {n + 1})",)
            raise
        except SolverError as exc:
            raise SolverError(f"step {n + 1}: {exc}") from exc
        reports.append(rep)
        record(n + 1, state, last=n + 1 == ctx.grid.step_count)
    return reports


def _step_cn_shifted(state, ctx, n, fp):
    return step_crank_nicolson(state, ctx, n + 1, fp)


def _run_lcn(ctx, record):
    if ctx.grid.step_count < 2:
        raise ValueError("linearised Crank-Nicolson needs at least 2 steps")
    v0 = ctx.initial_state()
    record(0, v0)
    t_half = ctx.grid.midpoint(1)
    load = ctx.loads(t_half)
    adv = ctx.advection(t_half)
    try:
        # predictor with the coefficient frozen at the initial level, then corrector
        pred = _midpoint_update(ctx, v0, ctx.diffusion(v0, 0.0), t_half, load, adv)
        v1 = _midpoint_update(ctx, v0, ctx.diffusion(0.5 * (pred + v0), t_half), t_half, load, adv)
    except SolverError as exc:
        raise SolverError(f"step 1: {exc}") from exc
    reports = [StepReport(2, 0.0)]
    record(1, v1, last=ctx.grid.step_count == 1)
    older, prev = v0, v1
    for n in range(2, ctx.grid.step_count + 1):
        t_half = ctx.grid.midpoint(n)
        a = ctx.diffusion(1.5 * prev - 0.5 * older, t_half)
        try:
            new = _midpoint_update(ctx, prev, a, t_half, ctx.loads(t_half))
        except SolverError as exc:
            raise SolverError(f"step {n}: {exc}") from exc
        reports.append(StepReport(1, 0.0))
        older, prev = prev, new
        record(n, new, last=n == ctx.grid.step_count)
    return reports


def run_linearized_cn(ctx, fp=None, store_levels=True, observer=None):
    """Linearised Crank-Nicolson trajectory; ``fp`` is accepted for symmetry and unused."""
    return integrate(ctx, "lcn", fp, store_levels=store_levels, observer=observer)


def integrate(ctx, method, fp=None, store_levels=True, observer=None, warn_unstable=True):
    """Run ``method`` over the whole grid of ``ctx``.

    Parameters
    ----------
    ctx : Discretization
    method : {"euler", "cn", "lcn"}
    fp : FixedPointParams, optional
        Inner iteration controls (ignored by ``lcn``).
    store_levels : bool
        Keep every level; otherwise only the initial and final ones.
    observer : callable, optional
        ``observer(n, t_n, state)`` is called at every level.
    warn_unstable : bool
        Emit a :class:`StabilityWarning` when delta exceeds
        :func:`stability_limit`. The note is recorded in the trajectory
        either way.
    """
    method = canonical_method(method)
    fp = FixedPointParams() if fp is None else fp
    notes = []
    limit = stability_limit(method, ctx.problem.motion)
    if ctx.delta > limit:
        msg = f"delta={ctx.delta:.6g} exceeds the {method} stability bound {limit:.6g}"
        notes.append(msg)
        log.info(msg)
        if warn_unstable:
            warnings.warn(msg, StabilityWarning, stacklevel=2)

    record = _Recorder(ctx, store_levels, observer)
    start = time.perf_counter()
    if method == "euler":
        reports = _run_implicit(ctx, step_backward_euler, fp, record)
    elif method == "cn":
        reports = _run_implicit(ctx, _step_cn_shifted, fp, record)
    else:
        reports = _run_lcn(ctx, record)
    elapsed = time.perf_counter() - start
    return Trajectory(
        method=method,
        times=np.array(record.times),
        levels=np.array(record.levels),
        reports=reports,
        wall_seconds=elapsed,
        warnings=notes,
    )


def make_context(space, problem, delta, horizon=None):
    horizon = problem.horizon if horizon is None else horizon
    return Discretization(space, problem, TimeGrid.from_horizon(horizon, delta))
