import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate as quad

from nonlocal_fem.errors import ConstructionError, EvaluationError, SolverError
from nonlocal_fem.femspace import (
    BandedMatrix,
    assemble_advection,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    build_space,
    gauss_rule,
    interpolate,
    l2_distance,
    l2_norm,
    lagrange_basis,
    nonlocal_value,
    reference_nodes,
    ritz_projection,
    solve_banded,
)
from nonlocal_fem.geometry import fixed_motion, paper_motion

bubble = lambda y: y * (1 - y)  # noqa: E731
sine = lambda y: np.sin(np.pi * y)  # noqa: E731
dsine = lambda y: np.pi * np.cos(np.pi * y)  # noqa: E731


def test_space_sizes():
    s = build_space(2, 1)
    assert s.interior_node_count == 1
    assert s.node_positions == pytest.approx([0.5])
    assert build_space(4, 5).interior_node_count == 19
    assert build_space(3, 2).interior_node_count == 5


def test_node_positions_equispaced():
    s = build_space(3, 2)
    np.testing.assert_allclose(s.node_positions, np.arange(1, 6) / 6, atol=1e-15)


def test_graded_mesh():
    s = build_space(boundaries=[0.0, 0.1, 0.5, 1.0], degree=2)
    np.testing.assert_allclose(s.node_positions, [0.05, 0.1, 0.3, 0.5, 0.75], atol=1e-15)
    assert s.h == pytest.approx(0.5)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(element_count=1, degree=1),
        dict(element_count=4, degree=0),
        dict(element_count=4, degree=11),
        dict(boundaries=[0.0, 0.5, 0.5, 1.0]),
        dict(boundaries=[0.0, 0.6, 0.4, 1.0]),
        dict(boundaries=[0.1, 0.5, 1.0]),
    ],
)
def test_space_rejects_bad_input(kwargs):
    with pytest.raises(ConstructionError):
        build_space(**kwargs)


def test_gauss_rule_exactness():
    s, w = gauss_rule(4)
    for p in range(8):
        assert np.dot(w, s**p) == pytest.approx(1 / (p + 1), rel=1e-14)


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("family", ["equispaced", "lobatto"])
def test_lagrange_basis(k, family):
    nodes = reference_nodes(k, family)
    phi, dphi = lagrange_basis(nodes, nodes)
    np.testing.assert_allclose(phi, np.eye(k + 1), atol=1e-12)
    s = np.linspace(0, 1, 13)
    phi, dphi = lagrange_basis(nodes, s)
    np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(dphi.sum(axis=1), 0.0, atol=1e-9)
    # reproduces s**k exactly
    np.testing.assert_allclose(phi @ nodes**k, s**k, atol=1e-11)
    np.testing.assert_allclose(dphi @ nodes**k, k * s ** (k - 1), atol=1e-8)


def test_mass_and_stiffness_two_elements():
    s = build_space(2, 1)
    assert assemble_mass(s).to_dense()[0, 0] == pytest.approx(1 / 3, abs=1e-15)
    assert assemble_stiffness(s).to_dense()[0, 0] == pytest.approx(4.0, abs=1e-14)


@pytest.mark.parametrize("ne", [4, 7])
def test_linear_stencils(ne):
    h = 1 / ne
    s = build_space(ne, 1)
    n = ne - 1
    m_exact = np.diag(np.full(n, 2 * h / 3)) + np.diag(np.full(n - 1, h / 6), 1) + np.diag(np.full(n - 1, h / 6), -1)
    a_exact = np.diag(np.full(n, 2 / h)) + np.diag(np.full(n - 1, -1 / h), 1) + np.diag(np.full(n - 1, -1 / h), -1)
    np.testing.assert_allclose(assemble_mass(s).to_dense(), m_exact, atol=1e-14)
    np.testing.assert_allclose(assemble_stiffness(s).to_dense(), a_exact, atol=1e-14 * ne)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_stiffness_energy_of_sine(k):
    errs = []
    for ne in (4, 8, 16):
        s = build_space(ne, k)
        v = interpolate(s, sine)
        errs.append(abs(assemble_stiffness(s).quadratic_form(v) - np.pi**2 / 2))
    # the interpolant is only energy-orthogonal for k=1, so the rate is min(2k, k+1)
    order = min(2 * k, k + 1)
    assert errs[-1] < 10 / 16**order
    assert math.log2(errs[1] / errs[2]) > order - 0.3


def test_advection_vanishes_on_fixed_domain():
    s = build_space(5, 3)
    assert np.max(np.abs(assemble_advection(s, fixed_motion(), 0.4).to_dense())) == 0.0


@given(t=st.floats(0, 1), seed=st.integers(0, 2**31))
@settings(max_examples=40)
def test_advection_mass_identity(t, seed):
    s = build_space(6, 3)
    m = paper_motion()
    v = np.random.default_rng(seed).normal(size=s.interior_node_count)
    g = m.beta(t) - m.alpha(t)
    lhs = assemble_advection(s, m, t).quadratic_form(v)
    rhs = -m.gamma_prime(t) / (2 * g) * assemble_mass(s).quadratic_form(v)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_load_examples():
    s = build_space(5, 1)
    assert np.all(assemble_load(s, lambda y, t: 0 * y, 0.0) == 0)
    np.testing.assert_allclose(assemble_load(s, lambda y, t: np.ones_like(y), 0.0), 0.2, atol=1e-15)
    s = build_space(3, 3)
    dense = assemble_mass(s).to_dense()
    for m in range(s.interior_node_count):
        e = np.zeros(s.interior_node_count)
        e[m] = 1.0
        g = lambda y, t, e=e: s.evaluate(e, y)
        np.testing.assert_allclose(assemble_load(s, g, 0.0, npts=6), dense[:, m], atol=1e-15)


def test_load_rejects_nonfinite():
    s = build_space(3, 1)
    with pytest.raises(EvaluationError):
        assemble_load(s, lambda y, t: np.where(y > 0.5, np.nan, y), 0.0)


def test_interpolate_examples():
    s = build_space(2, 1)
    assert interpolate(s, bubble) == pytest.approx([0.25])
    assert np.all(interpolate(build_space(4, 3), lambda y: 0 * y) == 0)
    s = build_space(5, 4)
    np.testing.assert_allclose(s.evaluate(interpolate(s, sine), s.node_positions), sine(s.node_positions), atol=1e-15)


def test_interpolation_error_bubble():
    s = build_space(2, 1)
    v = interpolate(s, bubble)
    assert l2_distance(s, v, bubble) == pytest.approx(math.sqrt(1 / 480), rel=1e-12)
    # cross-check the same integral with adaptive quadrature
    ref = quad.quad(lambda y: (bubble(y) - float(s.evaluate(v, np.array([y]))[0])) ** 2, 0, 1, points=[0.5])[0]
    assert l2_distance(s, v, bubble) == pytest.approx(math.sqrt(ref), rel=1e-10)


def test_nonlocal_value():
    s = build_space(3, 2)
    v = interpolate(s, bubble)
    assert nonlocal_value(s, np.zeros_like(v), fixed_motion(), 0.0) == 0.0
    assert nonlocal_value(s, v, fixed_motion(), 0.0) == pytest.approx(1 / 6, abs=1e-15)
    assert nonlocal_value(s, v, paper_motion(), 1.0) == pytest.approx(2.5 / 6, abs=1e-14)


def test_l2_norm():
    assert l2_norm(build_space(3, 2), np.zeros(5)) == 0.0
    assert l2_norm(build_space(2, 1), np.array([1.0])) == pytest.approx(math.sqrt(1 / 3))
    s = build_space(64, 2)
    assert l2_norm(s, interpolate(s, sine)) == pytest.approx(math.sqrt(0.5), abs=1e-6)


def test_ritz_identity_on_space():
    s = build_space(3, 2)
    np.testing.assert_allclose(ritz_projection(s, bubble, lambda y: 1 - 2 * y), interpolate(s, bubble), atol=1e-13)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_ritz_matches_vertices(k):
    s = build_space(8, k)
    r = ritz_projection(s, sine, dsine)
    verts = np.arange(1, 8) / 8
    np.testing.assert_allclose(s.evaluate(r, verts), sine(verts), atol=1e-10)


def test_solve_banded_examples():
    s = build_space(2, 1)
    assert solve_banded(s.mass, np.array([1.0])) == pytest.approx([3.0])
    s = build_space(6, 3)
    ones = np.ones(s.interior_node_count)
    np.testing.assert_allclose(solve_banded(s.mass, s.mass @ ones), ones, atol=1e-12)


@given(seed=st.integers(0, 2**31), n=st.integers(1, 30), kb=st.integers(0, 4))
@settings(max_examples=50)
def test_solve_banded_vs_dense(seed, n, kb):
    rng = np.random.default_rng(seed)
    dense = rng.normal(size=(n, n))
    dense[np.abs(np.subtract.outer(np.arange(n), np.arange(n))) > kb] = 0.0
    dense += np.diag(np.full(n, 2.0 * (2 * kb + 1)))
    rhs = rng.normal(size=n)
    mat = BandedMatrix.from_dense(dense, kb)
    x = solve_banded(mat, rhs)
    np.testing.assert_allclose(x, np.linalg.solve(dense, rhs), atol=1e-10)
    assert np.max(np.abs(mat @ x - rhs)) <= 1e-10 * (1 + np.max(np.abs(rhs)))


def test_solve_banded_singular():
    with pytest.raises(SolverError):
        solve_banded(BandedMatrix.from_dense(np.zeros((3, 3)), 1), np.ones(3))


@given(m=arrays(np.float64, (6, 6), elements=st.floats(-10, 10)), x=arrays(np.float64, 6, elements=st.floats(-10, 10)))
def test_banded_round_trip_and_product(m, x):
    m = np.triu(np.tril(m, 2), -2)
    b = BandedMatrix.from_dense(m, 2)
    np.testing.assert_array_equal(b.to_dense(), m)
    np.testing.assert_allclose(b @ x, m @ x, atol=1e-10)
    np.testing.assert_allclose((2.0 * b - b).to_dense(), m, atol=1e-12)


def test_from_dense_rejects_wide_matrix():
    with pytest.raises(ValueError):
        BandedMatrix.from_dense(np.ones((4, 4)), 1)


@pytest.mark.parametrize("k", [1, 2, 4, 6])
def test_mass_stiffness_symmetric_positive(k):
    s = build_space(5, k)
    for mat in (s.mass.to_dense(), s.stiffness.to_dense()):
        np.testing.assert_allclose(mat, mat.T, atol=1e-13)
        assert np.linalg.eigvalsh(mat).min() > 0
