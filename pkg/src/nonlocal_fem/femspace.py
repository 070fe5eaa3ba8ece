"""Continuous degree-k Lagrange elements on (0, 1) with zero boundary values.

Global nodes are numbered left to right; the two boundary nodes carry no
unknown, so a space with ``ne`` elements has ``k*ne - 1`` coefficients.
Matrices couple nodes at most ``k`` apart and are stored in LAPACK band
layout (``bands[k + i - j, j] = A[i, j]``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg
from numpy.polynomial import legendre

from .errors import ConstructionError, EvaluationError, SolverError
from .geometry import b1_coefficients, eval_gamma

MAX_DEGREE = 10


@lru_cache(maxsize=None)
def gauss_rule(npts):
    """Gauss-Legendre points and weights on [0, 1] (read-only arrays)."""
    x, w = legendre.leggauss(npts)
    s, w = 0.5 * (x + 1.0), 0.5 * w
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


def lagrange_basis(nodes, s):
    """Values and derivatives of the Lagrange polynomials through ``nodes``.

    Returns two arrays of shape ``(len(s), len(nodes))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    n = len(nodes)
    diff = s[:, None] - nodes[None, :]  # (q, n)
    denom = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(denom, 1.0)
    scale = 1.0 / np.prod(denom, axis=1)  # (n,)

    phi = np.empty((len(s), n))
    dphi = np.zeros((len(s), n))
    for a in range(n):
        others = [b for b in range(n) if b != a]
        phi[:, a] = np.prod(diff[:, others], axis=1) * scale[a]
        for c in others:
            rest = [b for b in others if b != c]
            dphi[:, a] += np.prod(diff[:, rest], axis=1)
        dphi[:, a] *= scale[a]
    return phi, dphi


def reference_nodes(degree, family="equispaced"):
    if family == "equispaced":
        return np.linspace(0.0, 1.0, degree + 1)
    if family == "lobatto":
        inner = legendre.Legendre.basis(degree).deriv().roots()
        pts = np.concatenate(([-1.0], np.sort(inner.real), [1.0]))
        return 0.5 * (pts + 1.0)
    raise ConstructionError(f"unknown node family {family!r}")


@dataclass(frozen=True, eq=False)
class BandedMatrix:
    """Square matrix with ``half_bandwidth`` sub- and super-diagonals."""

    bands: np.ndarray
    half_bandwidth: int

    @property
    def order(self):
        return self.bands.shape[1]

    @classmethod
    def zeros(cls, order, half_bandwidth):
        return cls(np.zeros((2 * half_bandwidth + 1, order)), half_bandwidth)

    @classmethod
    def from_dense(cls, dense, half_bandwidth):
        dense = np.asarray(dense, dtype=float)
        n = dense.shape[0]
        k = half_bandwidth
        if np.any(np.triu(dense, k + 1)) or np.any(np.tril(dense, -k - 1)):
            raise ValueError(f"matrix has entries outside half bandwidth {k}")
        bands = np.zeros((2 * k + 1, n))
        reach = min(k, n - 1)
        for d in range(-reach, reach + 1):
            diag = np.diagonal(dense, offset=-d)  # entries A[j+d, j]
            if d >= 0:
                bands[k + d, : n - d] = diag
            else:
                bands[k + d, -d:] = diag
        return cls(bands, k)

    def to_dense(self):
        n, k = self.order, self.half_bandwidth
        dense = np.zeros((n, n))
        reach = min(k, n - 1)
        for d in range(-reach, reach + 1):
            if d >= 0:
                dense += np.diag(self.bands[k + d, : n - d], -d)
            else:
                dense += np.diag(self.bands[k + d, -d:], -d)
        return dense

    def __matmul__(self, x):
        x = np.asarray(x, dtype=float)
        n, k = self.order, self.half_bandwidth
        out = np.zeros_like(x)
        reach = min(k, n - 1)
        for d in range(-reach, reach + 1):
            row = self.bands[k + d]
            if d >= 0:
                out[d:] += row[: n - d] * x[: n - d]
            else:
                out[: n + d] += row[-d:] * x[-d:]
        return out

    def _check(self, other):
        if self.bands.shape != other.bands.shape:
            raise ValueError("banded matrices differ in shape")

    def __add__(self, other):
        self._check(other)
        return BandedMatrix(self.bands + other.bands, self.half_bandwidth)

    def __sub__(self, other):
        self._check(other)
        return BandedMatrix(self.bands - other.bands, self.half_bandwidth)

    def __mul__(self, scalar):
        return BandedMatrix(self.bands * scalar, self.half_bandwidth)

    __rmul__ = __mul__

    def __neg__(self):
        return BandedMatrix(-self.bands, self.half_bandwidth)

    def quadratic_form(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ (self @ x))


@dataclass(frozen=True, eq=False)
class FemSpace:
    """Degree-``degree`` Lagrange space on the partition ``element_boundaries``.

    Instances are immutable; derived arrays and constant matrices are
    computed lazily and cached on the instance.
    """

    element_boundaries: np.ndarray
    degree: int
    local_nodes: np.ndarray

    @property
    def element_count(self):
        return len(self.element_boundaries) - 1

    @cached_property
    def widths(self):
        return np.diff(self.element_boundaries)

    @property
    def h(self):
        return float(self.widths.max())

    @property
    def interior_node_count(self):
        return self.degree * self.element_count - 1

    @cached_property
    def all_node_positions(self):
        left = self.element_boundaries[:-1]
        pos = left[:, None] + self.widths[:, None] * self.local_nodes[None, :]
        k = self.degree
        flat = np.empty(k * self.element_count + 1)
        flat[:-1] = pos[:, :k].ravel()
        flat[-1] = self.element_boundaries[-1]
        return flat

    @property
    def node_positions(self):
        return self.all_node_positions[1:-1]

    @property
    def quadrature(self):
        """Reference rule used for bilinear forms (exact to degree 2k+1)."""
        return gauss_rule(self.degree + 1)

    @cached_property
    def dofs(self):
        """Unknown index of local node ``a`` in element ``e``; -1 on the boundary."""
        k, ne = self.degree, self.element_count
        glob = np.arange(ne)[:, None] * k + np.arange(k + 1)[None, :]
        idx = glob - 1
        idx[idx >= self.interior_node_count] = -1
        return idx

    @cached_property
    def _rules(self):
        return {}

    def reference_basis(self, npts):
        """Gauss points/weights on [0, 1] with basis values and derivatives there."""
        key = ("basis", npts)
        if key not in self._rules:
            s, w = gauss_rule(npts)
            phi, dphi = lagrange_basis(self.local_nodes, s)
            self._rules[key] = (s, w, phi, dphi)
        return self._rules[key]

    def quadrature_points(self, npts):
        """Physical points ``(ne, npts)`` and weights ``(ne, npts)`` on (0, 1)."""
        key = ("points", npts)
        if key not in self._rules:
            s, w = gauss_rule(npts)
            left = self.element_boundaries[:-1]
            y = left[:, None] + self.widths[:, None] * s[None, :]
            self._rules[key] = (y, self.widths[:, None] * w[None, :])
        return self._rules[key]

    def local_coefficients(self, coef):
        """Coefficients gathered per element, shape ``(ne, k+1)``; zeros on the boundary."""
        coef = np.asarray(coef, dtype=float)
        full = np.concatenate(([0.0], coef, [0.0]))
        k = self.degree
        glob = np.arange(self.element_count)[:, None] * k + np.arange(k + 1)[None, :]
        return full[glob]

    def values_at_quadrature(self, coef, npts):
        _, _, phi, _ = self.reference_basis(npts)
        return self.local_coefficients(coef) @ phi.T

    def evaluate(self, coef, y):
        """Evaluate the finite element function with coefficients ``coef`` at ``y``."""
        y = np.asarray(y, dtype=float)
        flat = np.atleast_1d(y).ravel()
        e = np.searchsorted(self.element_boundaries, flat, side="right") - 1
        e = np.clip(e, 0, self.element_count - 1)
        s = (flat - self.element_boundaries[e]) / self.widths[e]
        phi, _ = lagrange_basis(self.local_nodes, s)
        vals = np.sum(self.local_coefficients(coef)[e] * phi, axis=1)
        return vals.reshape(y.shape) if y.ndim else vals

    def assemble_local(self, local):
        """Scatter element matrices ``local[e, i_test, j_trial]`` into band storage."""
        k = self.degree
        out = BandedMatrix.zeros(self.interior_node_count, k)
        dofs = self.dofs
        for a in range(k + 1):
            for b in range(k + 1):
                i, j = dofs[:, a], dofs[:, b]
                keep = (i >= 0) & (j >= 0)
                np.add.at(out.bands, (k + i[keep] - j[keep], j[keep]), local[keep, a, b])
        return out

    def assemble_vector(self, local):
        """Scatter element vectors ``local[e, a]`` into a global vector."""
        out = np.zeros(self.interior_node_count)
        dofs = self.dofs.ravel()
        keep = dofs >= 0
        np.add.at(out, dofs[keep], local.ravel()[keep])
        return out

    @cached_property
    def mass(self):
        _, w, phi, _ = self.reference_basis(self.degree + 1)
        ref = np.einsum("q,qa,qb->ab", w, phi, phi)
        return self.assemble_local(self.widths[:, None, None] * ref[None])

    @cached_property
    def stiffness(self):
        _, w, _, dphi = self.reference_basis(self.degree + 1)
        ref = np.einsum("q,qa,qb->ab", w, dphi, dphi)
        return self.assemble_local(ref[None] / self.widths[:, None, None])

    @cached_property
    def advection_parts(self):
        """``(B0, B1)`` with ``B0_ij = (phi_j', phi_i)`` and ``B1_ij = (y phi_j', phi_i)``."""
        s, w, phi, dphi = self.reference_basis(self.degree + 1)
        ref0 = np.einsum("q,qa,qb->ab", w, phi, dphi)
        y, _ = self.quadrature_points(self.degree + 1)
        ref1 = np.einsum("q,eq,qa,qb->eab", w, y, phi, dphi)
        b0 = self.assemble_local(np.broadcast_to(ref0, ref1.shape))
        return b0, self.assemble_local(ref1)

    @cached_property
    def basis_integrals(self):
        _, w, phi, _ = self.reference_basis(self.degree + 1)
        return self.assemble_vector(self.widths[:, None] * (w @ phi)[None, :])


def build_space(element_count=None, degree=1, boundaries=None, node_family="equispaced"):
    """Construct a :class:`FemSpace`.

    Parameters
    ----------
    element_count : int, optional
        Number of uniform elements. Ignored when ``boundaries`` is given
        (but must agree with it if both are passed).
    degree : int
        Polynomial degree, 1 to 10.
    boundaries : array_like, optional
        Explicit ascending element boundaries starting at 0 and ending at 1.
    node_family : {"equispaced", "lobatto"}
        Placement of the local Lagrange nodes inside each element.
    """
    if not (1 <= degree <= MAX_DEGREE):
        raise ConstructionError(f"degree must be in 1..{MAX_DEGREE}, got {degree}")
    if boundaries is None:
        if element_count is None or element_count < 2:
            raise ConstructionError("need at least 2 elements")
        boundaries = np.linspace(0.0, 1.0, int(element_count) + 1)
    else:
        boundaries = np.array(boundaries, dtype=float)
        if element_count is not None and element_count != len(boundaries) - 1:
            raise ConstructionError("element_count does not match boundaries")
        if len(boundaries) < 3:
            raise ConstructionError("need at least 2 elements")
        if boundaries[0] != 0.0 or boundaries[-1] != 1.0:
            raise ConstructionError("boundaries must start at 0 and end at 1")
        if np.any(np.diff(boundaries) <= 0):
            raise ConstructionError("element boundaries must be strictly increasing")
    boundaries.setflags(write=False)
    nodes = reference_nodes(degree, node_family)
    nodes.setflags(write=False)
    return FemSpace(boundaries, int(degree), nodes)


def interpolate(space, f):
    """Nodal values of ``f`` (vectorised over y) at the interior nodes."""
    return np.asarray(f(space.node_positions), dtype=float) * np.ones(space.interior_node_count)


def assemble_mass(space):
    return space.mass


def assemble_stiffness(space):
    return space.stiffness


def assemble_advection(space, motion, t):
    """``B_ij(t) = int b1(y, t) phi_j' phi_i dy``; b1 is affine so the k+1 point rule is exact."""
    c0, c1 = b1_coefficients(motion, t)
    b0, b1 = space.advection_parts
    return BandedMatrix(c0 * b0.bands + c1 * b1.bands, space.degree)


def assemble_load(space, g, t, npts=None):
    """``G_i = int g(y, t) phi_i dy`` with k+2 Gauss points per element."""
    npts = space.degree + 2 if npts is None else npts
    _, w, phi, _ = space.reference_basis(npts)
    y, _ = space.quadrature_points(npts)
    vals = np.asarray(g(y, t), dtype=float) * np.ones_like(y)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError(f"non-finite load value at t={t!r}")
    local = space.widths[:, None] * ((vals * w[None, :]) @ phi)
    return space.assemble_vector(local)


def nonlocal_value(space, coef, motion, t):
    """``gamma(t) * int_0^1 V dy``, the integral of V over the moving interval."""
    return eval_gamma(motion, t) * float(space.basis_integrals @ np.asarray(coef, dtype=float))


def l2_norm(space, coef):
    coef = np.asarray(coef, dtype=float)
    return float(np.sqrt(max(space.mass.quadratic_form(coef), 0.0)))


def l2_distance(space, coef, f, npts=None):
    """``||V - f||`` on (0, 1) with k+3 points per element; ``f`` vectorised over y."""
    npts = space.degree + 3 if npts is None else npts
    y, wq = space.quadrature_points(npts)
    diff = space.values_at_quadrature(coef, npts) - f(y)
    return float(np.sqrt(np.sum(wq * diff**2)))


def ritz_projection(space, u, u_prime, npts=None):
    """Coefficients of the Ritz projection: ``(V', W') = (u', W')`` for all W.

    The default rule has k+5 points; in 1-D the projection is exact at the
    vertices, and a shorter rule leaves visible quadrature error there.
    """
    npts = space.degree + 5 if npts is None else npts
    _, w, _, dphi = space.reference_basis(npts)
    y, _ = space.quadrature_points(npts)
    du = np.asarray(u_prime(y), dtype=float)
    # dphi/dy = dphi/ds / width and dy = width ds cancel
    rhs = space.assemble_vector((du * w[None, :]) @ dphi)
    return solve_banded(space.stiffness, rhs)


def solve_banded(matrix, rhs):
    """Solve ``matrix @ x = rhs`` by banded LU with partial pivoting (LAPACK gbsv)."""
    k = matrix.half_bandwidth
    try:
        x = scipy.linalg.solve_banded((k, k), matrix.bands, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"banded solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("banded solve produced non-finite values (singular pivot)")
    return x
