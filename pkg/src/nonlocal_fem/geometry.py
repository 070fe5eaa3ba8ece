"""Moving interval (alpha(t), beta(t)) and its map onto the unit interval.

With ``gamma = beta - alpha`` and ``y = (x - alpha) / gamma`` a parabolic
problem on the moving interval becomes one on (0, 1) with an extra
advection term of rate ``b1(y, t) = (alpha' + gamma' y) / gamma`` and a
diffusion scaling ``b2(t) = 1 / gamma**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainCollapseError, OutOfDomainError

Curve = Callable[[float], float]

# slack on sampled comparisons against declared bounds
_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class BoundaryMotion:
    """Left/right boundary curves with their derivatives and declared bounds.

    ``gamma0``/``gamma1`` bound the width from below/above,
    ``gamma_prime_max`` bounds ``|beta' - alpha'|`` and ``alpha_prime_max``
    bounds ``|alpha'|``. The bounds are declarations checked by
    :func:`validate_motion`, not computed.
    """

    alpha: Curve
    beta: Curve
    alpha_prime: Curve
    beta_prime: Curve
    gamma0: float
    gamma1: float
    gamma_prime_max: float
    alpha_prime_max: float
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if not (self.gamma0 > 0 and self.gamma1 >= self.gamma0):
            raise ValueError("need 0 < gamma0 <= gamma1")
        if self.gamma_prime_max < 0 or self.alpha_prime_max < 0:
            raise ValueError("derivative bounds must be nonnegative")

    def gamma_prime(self, t):
        return self.beta_prime(t) - self.alpha_prime(t)


def fixed_motion(left=0.0, right=1.0):
    """Stationary interval ``(left, right)``; the identity map when (0, 1)."""
    width = right - left
    zero = lambda t: 0.0  # noqa: E731
    return BoundaryMotion(
        alpha=lambda t: left,
        beta=lambda t: right,
        alpha_prime=zero,
        beta_prime=zero,
        gamma0=width,
        gamma1=width,
        gamma_prime_max=0.0,
        alpha_prime_max=0.0,
        name="fixed",
    )


def paper_motion():
    """alpha(t) = -t/(1+t), beta(t) = 1 + 2t/(1+t), with bounds valid on [0, 1]."""
    return BoundaryMotion(
        alpha=lambda t: -t / (1.0 + t),
        beta=lambda t: 1.0 + 2.0 * t / (1.0 + t),
        alpha_prime=lambda t: -1.0 / (1.0 + t) ** 2,
        beta_prime=lambda t: 2.0 / (1.0 + t) ** 2,
        gamma0=1.0,
        gamma1=4.0,
        gamma_prime_max=3.0,
        alpha_prime_max=1.0,
        name="paper",
    )


def eval_gamma(motion, t):
    gamma = motion.beta(t) - motion.alpha(t)
    if not gamma > 0:
        raise DomainCollapseError(f"interval width {gamma!r} at t={t!r}")
    return gamma


def eval_b1(motion, y, t):
    """Advection rate ``(alpha'(t) + gamma'(t) y) / gamma(t)``; ``y`` may be an array."""
    gamma = eval_gamma(motion, t)
    return (motion.alpha_prime(t) + motion.gamma_prime(t) * np.asarray(y)) / gamma


def b1_coefficients(motion, t):
    """Return ``(c0, c1)`` with ``b1(y, t) = c0 + c1 * y``."""
    gamma = eval_gamma(motion, t)
    return motion.alpha_prime(t) / gamma, motion.gamma_prime(t) / gamma


def eval_b2(motion, t):
    return 1.0 / eval_gamma(motion, t) ** 2


def map_to_fixed(motion, x, t, check=True):
    """Position ``x`` on the moving interval to ``y`` in [0, 1].

    Raises :class:`OutOfDomainError` when ``check`` is set and any ``x``
    lies outside ``[alpha(t), beta(t)]`` (a relative slack of 1e-12 is
    allowed for rounding at the endpoints).
    """
    a = motion.alpha(t)
    gamma = eval_gamma(motion, t)
    x = np.asarray(x, dtype=float)
    if check:
        slack = 1e-12 * max(1.0, abs(a), abs(a + gamma))
        if np.any(x < a - slack) or np.any(x > a + gamma + slack):
            raise OutOfDomainError(
                f"x outside [{a!r}, {a + gamma!r}] at t={t!r}"
            )
    y = (x - a) / gamma
    return float(y) if y.ndim == 0 else y


def map_to_moving(motion, y, t):
    x = motion.alpha(t) + eval_gamma(motion, t) * np.asarray(y, dtype=float)
    return float(x) if x.ndim == 0 else x


@dataclass
class MotionReport:
    passed: bool
    failures: list[str]
    warnings: list[str]
    gamma_min: float
    gamma_max: float
    gamma_nondecreasing: bool

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        lines = [f"motion check: {status} (gamma in [{self.gamma_min:.6g}, {self.gamma_max:.6g}])"]
        lines += [f"  failure: {m}" for m in self.failures]
        lines += [f"  warning: {m}" for m in self.warnings]
        return "\n".join(lines)


def _fd_derivative(f, t, h, lo, hi):
    # central where possible, second-order one-sided at the ends of [lo, hi]
    if t - h < lo:
        return (-3.0 * f(t) + 4.0 * f(t + h) - f(t + 2 * h)) / (2 * h)
    if t + h > hi:
        return (3.0 * f(t) - 4.0 * f(t - h) + f(t - 2 * h)) / (2 * h)
    return (f(t + h) - f(t - h)) / (2 * h)


def validate_motion(motion, T, samples=1024, fd_step=1e-6, fd_rtol=1e-4):
    """Check the declared bounds of ``motion`` on ``samples`` points of [0, T].

    Bound violations and derivative closures that disagree with finite
    differences of the curves are failures. A width that decreases
    somewhere is only a warning: the schemes need the bounds, not
    monotonicity.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    times = np.linspace(0.0, T, samples)
    failures: list[str] = []
    warnings: list[str] = []

    alpha = np.array([motion.alpha(t) for t in times])
    beta = np.array([motion.beta(t) for t in times])
    gamma = beta - alpha
    if np.any(gamma <= 0):
        t_bad = times[np.argmax(gamma <= 0)]
        failures.append(f"interval collapses (gamma <= 0) at t={t_bad:.6g}")
    g_lo, g_hi = float(gamma.min()), float(gamma.max())
    if g_lo < motion.gamma0 - _BOUND_SLACK:
        failures.append(f"gamma reaches {g_lo:.6g} < gamma0={motion.gamma0:.6g}")
    if g_hi > motion.gamma1 + _BOUND_SLACK:
        failures.append(f"gamma reaches {g_hi:.6g} > gamma1={motion.gamma1:.6g}")

    da = np.array([motion.alpha_prime(t) for t in times])
    db = np.array([motion.beta_prime(t) for t in times])
    dg = db - da
    if np.max(np.abs(da)) > motion.alpha_prime_max + _BOUND_SLACK:
        failures.append(
            f"|alpha'| reaches {np.max(np.abs(da)):.6g} > alpha_prime_max={motion.alpha_prime_max:.6g}"
        )
    if np.max(np.abs(dg)) > motion.gamma_prime_max + _BOUND_SLACK:
        failures.append(
            f"|gamma'| reaches {np.max(np.abs(dg)):.6g} > gamma_prime_max={motion.gamma_prime_max:.6g}"
        )

    for label, curve, deriv in (("alpha", motion.alpha, da), ("beta", motion.beta, db)):
        fd = np.array([_fd_derivative(curve, t, fd_step, 0.0, T) for t in times])
        err = np.abs(fd - deriv) / np.maximum(1.0, np.abs(deriv))
        if np.max(err) > fd_rtol:
            t_bad = times[np.argmax(err)]
            failures.append(
                f"{label}' disagrees with finite differences at t={t_bad:.6g} "
                f"(relative error {np.max(err):.3e})"
            )

    nondecreasing = bool(np.all(np.diff(gamma) >= -_BOUND_SLACK))
    if not nondecreasing:
        warnings.append("gamma is not nondecreasing on [0, T]")

    return MotionReport(
        passed=not failures,
        failures=failures,
        warnings=warnings,
        gamma_min=g_lo,
        gamma_max=g_hi,
        gamma_nondecreasing=nondecreasing,
    )
