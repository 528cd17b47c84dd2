import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stokes_ife.analysis import (
    ConvergenceReport,
    ExactSolution,
    StudyConfig,
    compute_errors,
    interpolant,
    rate,
    run_study,
    solve_problem,
)
from stokes_ife.geometry import cut_mesh
from stokes_ife.mesh import build_uniform_mesh
from stokes_ife.quadrature import triangle_rule
from stokes_ife.space import build_space


class LinearField:
    """u = (1, 2), p = 0."""

    def u(self, x):
        return np.tile([1.0, 2.0], (len(np.atleast_2d(x)), 1))

    def grad_u(self, x):
        return np.zeros((len(np.atleast_2d(x)), 2, 2))

    def p(self, x):
        return np.zeros(len(np.atleast_2d(x)))


@pytest.mark.parametrize("mus", [(5.0, 1.0), (1.0, 1000.0)])
def test_exact_solution_invariants(mus):
    ex = ExactSolution(0.5, *mus)
    th = np.linspace(0, 2 * np.pi, 50)
    on = 0.5 * np.column_stack((np.cos(th), np.sin(th)))
    inside = on * (1 - 1e-15)
    assert np.abs(ex.u(on)).max() <= 1e-13
    assert np.abs(ex.u(inside)).max() <= 1e-13
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (200, 2))
    div = np.trace(ex.grad_u(x), axis1=1, axis2=2)
    assert np.abs(div).max() <= 1e-13
    # gradient against central differences
    h = 1e-6
    for b in range(2):
        e = np.zeros(2)
        e[b] = h
        fd = (ex.u(x + e) - ex.u(x - e)) / (2 * h)
        far = np.abs(np.linalg.norm(x, axis=1) - 0.5) > 1e-3
        assert np.allclose(fd[far], ex.grad_u(x)[far, :, b], atol=1e-6)
    r = triangle_rule([[-1, -1], [1, -1], [1, 1]], 2).integrate(ex.p) + triangle_rule(
        [[-1, -1], [1, 1], [-1, 1]], 2
    ).integrate(ex.p)
    assert abs(r) <= 1e-14


def test_linear_field_reproduced_exactly():
    mesh = build_uniform_mesh(8)
    ex = ExactSolution(0.5, 3.0, 3.0)
    space = build_space(mesh, cut_mesh(mesh, ex.levelset), 3.0, 3.0)
    lin = LinearField()
    dm = space.dofmap
    x = np.zeros(dm.size)
    x[: dm.n_edges] = 1.0
    x[dm.n_edges : dm.n_velocity] = 2.0
    errs = compute_errors(space, x, lin)
    assert max(errs) <= 1e-12


def test_rate_examples():
    assert rate(1.001e-2, 2.688e-3) == pytest.approx(1.90, abs=0.005)
    assert rate(4e-2, 1e-2) == pytest.approx(2.0)
    assert rate(1e-3, 1e-3) == 0.0
    with pytest.raises(ValueError):
        rate(0.0, 1.0)
    with pytest.raises(ValueError):
        rate(1.0, -1.0)


@given(st.floats(1e-12, 1e3), st.floats(1e-12, 1e3))
def test_property_rate_antisymmetric(a, b):
    assert rate(a, b) == pytest.approx(-rate(b, a), abs=1e-12)
    assert rate(a, b) == pytest.approx(math.log2(a / b))


def test_error_quadrature_robustness():
    res = solve_problem(16, 5.0, 1.0)
    e6 = compute_errors(res.space, res.field, ExactSolution(0.5, 5.0, 1.0), 6)
    e8 = compute_errors(res.space, res.field, ExactSolution(0.5, 5.0, 1.0), 8)
    for a, b in zip(e6, e8):
        assert abs(a - b) <= 1e-3 * b


def test_interpolant_dofs_match_exact_means():
    ex = ExactSolution(0.5, 5.0, 1.0)
    mesh = build_uniform_mesh(8)
    space = build_space(mesh, cut_mesh(mesh, ex.levelset), 5.0, 1.0)
    x = interpolant(space, ex)
    dm = space.dofmap
    # pressure DOF = element mean of p
    for t in (0, 37, 100):
        mean = triangle_rule(mesh.tri_coords[t], 4).integrate(ex.p) / mesh.areas[t]
        assert x[dm.p(t)] == pytest.approx(mean, abs=1e-13)


def test_study_report_structure():
    report = run_study(StudyConfig(n_list=(8, 16), mu_plus=5.0, mu_minus=1.0))
    assert [r.n for r in report.rows] == [8, 16]
    first, second = report.rows
    assert first.eu_l2_rate is None and first.eu_h1_rate is None and first.ep_l2_rate is None
    assert second.eu_l2_rate == pytest.approx(math.log2(first.eu_l2 / second.eu_l2))
    d = report.to_dict()
    assert d["params"]["mu_plus"] == 5.0 and d["params"]["delta"] == -1 and d["params"]["eta"] == 0.0
    assert len(d["rows"]) == 2 and report.column("eu_h1").shape == (2,)


def test_degenerate_study_outside_circle():
    # with the circle outside the domain and equal viscosities this is a plain CR-P0 study
    report = run_study(StudyConfig(n_list=(8, 16, 32), mu_plus=2.0, mu_minus=2.0, r0=3.0))
    last = report.rows[-1]
    assert 1.8 <= last.eu_l2_rate <= 2.2
    assert 0.85 <= last.eu_h1_rate <= 1.15
    assert last.ep_l2_rate >= 0.85


def test_report_general_refinement_factor():
    rep = ConvergenceReport(params={})
    rep.add(8, (1.0, 1.0, 1.0))
    rep.add(32, (1 / 16, 1 / 4, 1 / 4))
    assert rep.rows[1].eu_l2_rate == pytest.approx(2.0)
    assert rep.rows[1].eu_h1_rate == pytest.approx(1.0)
