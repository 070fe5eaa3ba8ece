"""Nonlocal reaction-diffusion systems on a moving interval.

Each unknown ``u_i`` satisfies::

    du_i/dt - a_i(I_1(t), ..., I_ne(t)) d2u_i/dx2 = f_i(x, t)   on (alpha(t), beta(t))

with zero boundary values and ``I_j(t)`` the integral of ``u_j`` over the
current interval. :func:`transform_problem` rewrites a system on the unit
interval where the solvers work.

All user callables are expected to be vectorised over the spatial argument.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DiffusionBoundWarning, EvaluationError
from .femspace import gauss_rule
from .geometry import BoundaryMotion, eval_gamma, map_to_fixed, paper_motion

Diffusion = Callable[[Sequence[float]], float]
SpaceTimeFn = Callable[[np.ndarray, float], np.ndarray]

FORCING_QUADRATURE_POINTS = 32


@dataclass(frozen=True)
class MovingProblem:
    """The system on the moving interval.

    ``diffusion_bounds`` are the declared ``(m_a, M_a)`` shared by all
    coefficients.
    """

    diffusion: tuple[Diffusion, ...]
    diffusion_bounds: tuple[float, float]
    forcing: tuple[SpaceTimeFn, ...]
    initial: tuple[Callable[[np.ndarray], np.ndarray], ...]
    motion: BoundaryMotion
    horizon: float
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        n = len(self.diffusion)
        if n < 1 or len(self.forcing) != n or len(self.initial) != n:
            raise ValueError("diffusion, forcing and initial must have one entry per equation")
        m_a, big_m = self.diffusion_bounds
        if not (0 < m_a <= big_m):
            raise ValueError("diffusion bounds must satisfy 0 < m_a <= M_a")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        ends = np.array([self.motion.alpha(0.0), self.motion.beta(0.0)])
        for i, u0 in enumerate(self.initial):
            vals = np.asarray(u0(ends), dtype=float) * np.ones(2)
            if np.max(np.abs(vals)) > 1e-10:
                raise ValueError(f"initial datum {i} does not vanish at the boundary: {vals}")

    @property
    def equation_count(self):
        return len(self.diffusion)


@dataclass(frozen=True)
class FixedProblem:
    """The transformed system on (0, 1); forcing ``g_i(y, t)``, initial ``v_i0(y)``."""

    diffusion: tuple[Diffusion, ...]
    diffusion_bounds: tuple[float, float]
    forcing: tuple[SpaceTimeFn, ...]
    initial: tuple[Callable[[np.ndarray], np.ndarray], ...]
    motion: BoundaryMotion
    horizon: float
    name: str = field(default="custom", compare=False)

    @property
    def equation_count(self):
        return len(self.diffusion)


@dataclass(frozen=True)
class ExactSolution:
    """Reference solution ``u_i(x, t)`` with optional ``du_i/dt`` and ``d2u_i/dx2``."""

    u: tuple[SpaceTimeFn, ...]
    u_t: tuple[SpaceTimeFn, ...] | None = None
    u_xx: tuple[SpaceTimeFn, ...] | None = None

    def fixed(self, motion, i):
        """``v_i(y, t) = u_i(alpha(t) + gamma(t) y, t)``."""
        u = self.u[i]
        return lambda y, t: u(motion.alpha(t) + eval_gamma(motion, t) * np.asarray(y), t)


def transform_problem(p):
    motion = p.motion

    def pull_forcing(f):
        def g(y, t):
            return f(motion.alpha(t) + eval_gamma(motion, t) * np.asarray(y), t)

        return g

    a0, gamma0 = motion.alpha(0.0), eval_gamma(motion, 0.0)

    def pull_initial(u0):
        return lambda y: u0(a0 + gamma0 * np.asarray(y))

    return FixedProblem(
        diffusion=p.diffusion,
        diffusion_bounds=p.diffusion_bounds,
        forcing=tuple(pull_forcing(f) for f in p.forcing),
        initial=tuple(pull_initial(u0) for u0 in p.initial),
        motion=motion,
        horizon=p.horizon,
        name=p.name,
    )


def eval_diffusion(p, i, l_values):
    """``a_i(l_values)`` for the 0-based equation index ``i``.

    Values outside the declared bounds are reported with a
    :class:`DiffusionBoundWarning` and returned unchanged.
    """
    value = float(p.diffusion[i](l_values))
    if not math.isfinite(value):
        raise EvaluationError(f"diffusion coefficient {i} is {value!r} at {tuple(l_values)!r}")
    m_a, big_m = p.diffusion_bounds
    if not (m_a <= value <= big_m):
        warnings.warn(
            f"a_{i}={value:.6g} outside declared [{m_a}, {big_m}]",
            DiffusionBoundWarning,
            stacklevel=2,
        )
    return value


def moving_integrals(exact, motion, t, npts=FORCING_QUADRATURE_POINTS):
    """``I_j(t)``: integrals of the exact components over (alpha(t), beta(t))."""
    s, w = gauss_rule(npts)
    a = motion.alpha(t)
    gamma = eval_gamma(motion, t)
    x = a + gamma * s
    return np.array([gamma * float(np.dot(w, u(x, t))) for u in exact.u])


class ManufacturedForcing:
    """Forcing ``f_i = du_i/dt - a_i(I(t)) d2u_i/dx2`` for a chosen exact solution.

    The nonlocal integrals are cached per time value. An instance belongs
    to one run at a time.
    """

    def __init__(self, exact, diffusion, motion, cache_size=64):
        if exact.u_t is None or exact.u_xx is None:
            raise ValueError("manufactured forcing needs u_t and u_xx")
        self.exact = exact
        self.diffusion = diffusion
        self.motion = motion
        self._cache: dict[float, np.ndarray] = {}
        self._cache_size = cache_size

    def coefficients(self, t):
        t = float(t)
        hit = self._cache.get(t)
        if hit is None:
            integrals = moving_integrals(self.exact, self.motion, t)
            hit = np.array([float(a(integrals)) for a in self.diffusion])
            if len(self._cache) >= self._cache_size:
                self._cache.clear()
            self._cache[t] = hit
        return hit

    def __call__(self, i, x, t):
        a = self.coefficients(t)[i]
        return self.exact.u_t[i](x, t) - a * self.exact.u_xx[i](x, t)

    def component(self, i):
        return lambda x, t: self(i, x, t)


def eval_forcing_manufactured(exact, p, x, t):
    """All forcing components at ``(x, t)``; shape ``(n_e,) + shape(x)``."""
    forcing = ManufacturedForcing(exact, p.diffusion, p.motion)
    return np.array([forcing(i, x, t) for i in range(len(exact.u))])


def manufactured_problem(exact, diffusion, diffusion_bounds, motion, horizon, name="manufactured"):
    """Problem whose forcing and initial data are generated from ``exact``."""
    forcing = ManufacturedForcing(exact, diffusion, motion)
    initial = tuple((lambda x, u=u: u(x, 0.0)) for u in exact.u)
    return MovingProblem(
        diffusion=tuple(diffusion),
        diffusion_bounds=diffusion_bounds,
        forcing=tuple(forcing.component(i) for i in range(len(exact.u))),
        initial=initial,
        motion=motion,
        horizon=horizon,
        name=name,
    )


# --- separable exact solutions u_i = tau_i(t) P_i(z(x, t)) ---------------------------


def _separable(time_factors, profiles, z, z_x, z_t):
    """Build an :class:`ExactSolution` with ``z_xx = 0``.

    ``time_factors`` holds ``(tau, tau')`` pairs, ``profiles`` holds
    ``(P, P', P'')`` triples; ``z_x`` depends on ``t`` only.
    """
    u, u_t, u_xx = [], [], []
    for (tau, dtau), (prof, dprof, d2prof) in zip(time_factors, profiles):
        u.append(lambda x, t, tau=tau, prof=prof: tau(t) * prof(z(x, t)))
        u_t.append(
            lambda x, t, tau=tau, dtau=dtau, prof=prof, dprof=dprof: (
                dtau(t) * prof(z(x, t)) + tau(t) * dprof(z(x, t)) * z_t(x, t)
            )
        )
        u_xx.append(lambda x, t, tau=tau, d2prof=d2prof: tau(t) * d2prof(z(x, t)) * z_x(t) ** 2)
    return ExactSolution(tuple(u), tuple(u_t), tuple(u_xx))


PAPER_QUARTICS = (
    (0.0, 611 / 70, -10513 / 210, 646 / 7, -1070 / 21),
    (0.0, 2047 / 140, -27701 / 420, 691 / 7, -995 / 21),
)

PAPER_TIME_FACTORS = (
    (lambda t: 1.0 / (t + 1.0), lambda t: -1.0 / (t + 1.0) ** 2),
    (lambda t: math.exp(-t), lambda t: -math.exp(-t)),
)


def _quartic_profiles():
    out = []
    for coefs in PAPER_QUARTICS:
        p = Polynomial(coefs)
        out.append((p, p.deriv(), p.deriv(2)))
    return out


def paper_diffusion():
    a1 = lambda l: 2.0 - 1.0 / (1.0 + l[0] ** 2) + 1.0 / (1.0 + l[1] ** 2)  # noqa: E731
    a2 = lambda l: 3.0 + 2.0 / (1.0 + l[0] ** 2) - 1.0 / (1.0 + l[1] ** 2)  # noqa: E731
    return (a1, a2), (1.0, 5.0)


def printed_coordinate():
    """The stretched coordinate exactly as printed with the example.

    ``z = (2t+1)(x + t x + t) / (5t^2 + 5t + 1)``. It vanishes at
    ``alpha(t)`` but ``z(beta(t), t) = (8t^2+6t+1)/(5t^2+5t+1)``, which is
    not 1 for t > 0, so the resulting quartics do not vanish on the right
    boundary.
    """

    def z(x, t):
        return (2 * t + 1) * (np.asarray(x) * (1 + t) + t) / (5 * t * t + 5 * t + 1)

    def z_x(t):
        return (2 * t + 1) * (1 + t) / (5 * t * t + 5 * t + 1)

    def z_t(x, t):
        x = np.asarray(x)
        num = (2 * t + 1) * (x * (1 + t) + t)
        dnum = 2 * (x * (1 + t) + t) + (2 * t + 1) * (x + 1)
        den = 5 * t * t + 5 * t + 1
        return (dnum * den - num * (10 * t + 5)) / den**2

    return z, z_x, z_t


def fixed_coordinate(motion):
    """``z = (x - alpha(t)) / gamma(t)`` with its derivatives."""

    def z(x, t):
        return map_to_fixed(motion, x, t, check=False)

    def z_x(t):
        return 1.0 / eval_gamma(motion, t)

    def z_t(x, t):
        zz = z(x, t)
        return -(motion.alpha_prime(t) + motion.gamma_prime(t) * zz) / eval_gamma(motion, t)

    return z, z_x, z_t


def build_paper_example(horizon=1.0):
    """Two-equation example with the printed exact solutions and moving boundaries."""
    motion = paper_motion()
    exact = _separable(PAPER_TIME_FACTORS, _quartic_profiles(), *printed_coordinate())
    diffusion, bounds = paper_diffusion()
    p = manufactured_problem(exact, diffusion, bounds, motion, horizon, name="paper-example")
    return p, exact


def build_corrected_paper_example(horizon=1.0):
    """Same quartic profiles, in the coordinate that does fix both boundaries."""
    motion = paper_motion()
    exact = _separable(PAPER_TIME_FACTORS, _quartic_profiles(), *fixed_coordinate(motion))
    diffusion, bounds = paper_diffusion()
    p = manufactured_problem(exact, diffusion, bounds, motion, horizon, name="paper-example-corrected")
    return p, exact


def build_self_manufactured(horizon=1.0, motion=None):
    """``u_i = tau_i(t) sin(pi y)`` with ``y`` the fixed coordinate, same coefficients and motion."""
    motion = paper_motion() if motion is None else motion
    pi = math.pi
    sine = (
        lambda z: np.sin(pi * z),
        lambda z: pi * np.cos(pi * z),
        lambda z: -pi * pi * np.sin(pi * z),
    )
    exact = _separable(PAPER_TIME_FACTORS, (sine, sine), *fixed_coordinate(motion))
    diffusion, bounds = paper_diffusion()
    p = manufactured_problem(exact, diffusion, bounds, motion, horizon, name="self-manufactured")
    return p, exact


def with_horizon(p, horizon):
    return replace(p, horizon=horizon)


# --- registry used by the command line -------------------------------------------------

PROBLEMS: dict[str, Callable[..., tuple[MovingProblem, ExactSolution | None]]] = {
    "paper-example": build_paper_example,
    "paper-example-corrected": build_corrected_paper_example,
    "self-manufactured": build_self_manufactured,
}


def register_problem(name, factory):
    """Make ``factory(horizon=...) -> (MovingProblem, ExactSolution | None)`` selectable by name."""
    if name in PROBLEMS:
        raise ValueError(f"problem {name!r} already registered")
    PROBLEMS[name] = factory
    return factory
