import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import simpson

from nonlocal_fem.errors import FitError, MeshWarning
from nonlocal_fem.femspace import build_space, interpolate, l2_distance
from nonlocal_fem.geometry import eval_gamma, map_to_moving, paper_motion
from nonlocal_fem.harness import (
    CSV_HEADER,
    ConvergenceTable,
    Experiment,
    compare_integrators,
    convergence_study,
    error_l2_moving,
    estimate_slope,
    max_nodal_error,
    nodal_error_history,
    read_results,
    run_experiment,
    write_gnuplot,
    write_results,
)
from nonlocal_fem.problem import build_paper_example, build_self_manufactured

MOTION = paper_motion()
_, PAPER_EXACT = build_paper_example()


def bubble_moving(x, t):
    """y(1 - y) pushed to the moving interval; lies in S_h^2."""
    y = (x - MOTION.alpha(t)) / eval_gamma(MOTION, t)
    return y * (1 - y)


def test_error_exact_representation():
    s = build_space(4, 2)
    coef = interpolate(s, lambda y: y * (1 - y))
    assert error_l2_moving(s, coef, bubble_moving, MOTION, 1.0) < 1e-12


def test_error_of_zero_against_simpson():
    s = build_space(8, 3)
    T = 0.7
    x = np.linspace(MOTION.alpha(T), MOTION.beta(T), 1001)
    ref = math.sqrt(simpson(PAPER_EXACT.u[0](x, T) ** 2, x=x))
    err = error_l2_moving(s, np.zeros(s.interior_node_count), PAPER_EXACT.u[0], MOTION, T)
    assert err == pytest.approx(ref, abs=1e-8)


def test_error_constant_mismatch():
    s = build_space(3, 1)
    err = error_l2_moving(s, np.zeros(2), lambda x, t: 0.3 + 0 * x, MOTION, 1.0)
    assert err == pytest.approx(0.3 * math.sqrt(2.5), rel=1e-14)


def test_error_change_of_variables():
    _, exact = build_self_manufactured()
    s = build_space(5, 2)
    T = 0.6
    coef = np.random.default_rng(1).normal(size=s.interior_node_count)
    v = exact.fixed(MOTION, 0)
    fixed = l2_distance(s, coef, lambda y: v(y, T))
    moving = error_l2_moving(s, coef, exact.u[0], MOTION, T)
    assert moving == pytest.approx(math.sqrt(eval_gamma(MOTION, T)) * fixed, rel=1e-10)


def test_max_nodal_error():
    s = build_space(4, 5)
    t = 0.5
    u = PAPER_EXACT.u[0]
    nodes_x = map_to_moving(MOTION, s.node_positions, t)
    assert max_nodal_error(s, u(nodes_x, t), u, MOTION, t) == 0.0
    direct = max(abs(u(float(x), 0.0)) for x in s.node_positions)
    assert max_nodal_error(s, np.zeros(19), u, MOTION, 0.0) == pytest.approx(direct, rel=1e-15)


def test_slope_examples():
    assert estimate_slope([(1, 1), (0.5, 0.125)]) == pytest.approx(3.0)
    assert estimate_slope([(1, 2), (0.5, 2), (0.25, 2)]) == pytest.approx(0.0, abs=1e-14)
    h = [0.1, 0.05, 0.025]
    assert estimate_slope([(x, x**3) for x in h]) == pytest.approx(3.0, abs=1e-12)


@given(c=st.floats(1e-8, 1e8), p=st.floats(0.5, 4))
def test_slope_scale_invariance(c, p):
    d = [0.1, 0.05, 0.025, 0.0125]
    pts = [(x, 7 * x**p) for x in d]
    base = estimate_slope(pts)
    assert base == pytest.approx(p, abs=1e-9)
    assert estimate_slope([(x, c * e) for x, e in pts]) == pytest.approx(base, abs=1e-9)


def test_slope_drops_bad_points():
    with pytest.warns(MeshWarning):
        assert estimate_slope([(1, 1), (0.5, 0.0), (0.25, 1 / 16)]) == pytest.approx(2.0)
    with pytest.warns(MeshWarning), pytest.raises(FitError):
        estimate_slope([(1, 1), (0.5, -1)])
    with pytest.raises(FitError):
        estimate_slope([(1, 1)])


def test_study_validates_values():
    base = Experiment(horizon=0.1, delta=0.01)
    with pytest.raises(ValueError):
        convergence_study(base, "h", [0.5, 0.25])
    with pytest.raises(ValueError):
        convergence_study(base, "h", [0.25, 0.5, 0.125])
    with pytest.raises(ValueError):
        convergence_study(base, "h", [0.3, 0.2, 0.1])


def small_study(workers=1):
    base = Experiment("self-manufactured", "cn", degree=1, delta=1e-3, horizon=0.1)
    return convergence_study(base, "h", [1 / 8, 1 / 16, 1 / 32], workers=workers)


def test_h_study_k1():
    table = small_study()
    assert not table.any_failed
    assert [r.h for r in table.rows] == [1 / 8, 1 / 16, 1 / 32]
    for s in table.slopes:
        assert 1.8 < s < 2.2
    # errors decrease along the refinement
    for eq in range(2):
        errs = [e for _, e in table.points(eq)]
        assert errs == sorted(errs, reverse=True)


def test_study_parallel_matches_serial():
    a, b = small_study(1), small_study(3)
    assert [r.errors_l2 for r in a.rows] == [r.errors_l2 for r in b.rows]
    assert a.slopes == b.slopes


def test_failed_row_reported():
    rep = run_experiment(Experiment(delta=0.3, horizon=1.0))
    assert rep.failed and "multiple" in rep.failure
    assert all(math.isnan(e) for e in rep.errors_l2)


def test_compare_integrators_rows():
    reps = compare_integrators(Experiment(degree=2, elements=8, delta=0.05, horizon=0.2))
    assert [r.method for r in reps] == ["euler", "cn", "lcn"]
    assert all(r.iterations > 0 and r.cpu_ms >= 0 for r in reps)
    assert reps[0].errors_l2[0] > reps[1].errors_l2[0]


def test_nodal_error_history():
    exp = Experiment(degree=2, elements=8, delta=0.05, horizon=0.2)
    hist = nodal_error_history(exp, [0.0, 0.1, 0.2])
    assert hist.shape == (3, 2)
    assert np.all(hist[0] == 0.0)
    assert hist[2] == pytest.approx(run_experiment(exp).errors_max, rel=1e-12)


def test_write_empty_table(tmp_path):
    path = tmp_path / "empty.csv"
    write_results([], path)
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


def test_results_round_trip(tmp_path):
    rep = run_experiment(Experiment(degree=2, elements=8, delta=0.05, horizon=0.2))
    path = tmp_path / "one.csv"
    write_results(rep, path)
    rows = read_results(path)
    assert len(rows) == 2
    for eq, row in enumerate(rows):
        assert float(row["error_l2"]) == rep.errors_l2[eq]
        assert float(row["error_maxnodal"]) == rep.errors_max[eq]
        assert float(row["h"]) == rep.h and row["method"] == "lcn"
        assert float(row["cpu_ms"]) == rep.cpu_ms


def test_results_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_results(small_study(), a, timing=False)
    write_results(small_study(), b, timing=False)
    assert a.read_bytes() == b.read_bytes()
    rows = read_results(a)
    assert len(rows) == 6 and rows[0]["cpu_ms"] == "" and rows[0]["slope"] != ""


def test_write_error_names_path(tmp_path):
    bad = tmp_path / "missing" / "out.csv"
    with pytest.raises(OSError, match="missing"):
        write_results([], bad)


def test_gnuplot_file(tmp_path):
    table = ConvergenceTable("h", "lcn", [], (3.0,))
    rep = run_experiment(Experiment(degree=1, elements=4, delta=0.05, horizon=0.1))
    table.rows = [rep]
    path = tmp_path / "g.dat"
    write_gnuplot(table, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# method=lcn vary=h eq=1 slope=3")
    x, y = map(float, lines[1].split())
    assert x == pytest.approx(math.log10(0.25)) and y == pytest.approx(math.log10(rep.errors_l2[0]))
