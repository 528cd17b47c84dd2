import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from reference import ReferenceStokes
from stokes_ife.analysis import ExactSolution
from stokes_ife.assembly import assemble_space
from stokes_ife.exceptions import ResidualTooLarge, SingularMatrix
from stokes_ife.mesh import build_uniform_mesh
from stokes_ife.solver import (
    MEAN_RTOL,
    dissection_order,
    mean_is_zero,
    pressure_mean,
    residual,
    solve,
    solve_linear,
    symmetric_scaling,
)
from stokes_ife.space import build_space
from test_assembly import _reference_permutation


def test_trivial_system():
    x, res = solve_linear(sp.csr_matrix([[2.0]]), np.array([4.0]), order=[0])
    assert x[0] == pytest.approx(2.0) and res <= 1e-15


def test_residual_examples():
    rng = np.random.default_rng(0)
    A = sp.random(30, 30, density=0.3, random_state=1) + 5 * sp.eye(30)
    b = rng.normal(size=30)
    x, _ = solve_linear(A, b)
    assert residual(A, x, b) <= 1e-12
    assert residual(A, x + 1e-3 * rng.normal(size=30), b) > 1e-6
    assert residual(A, np.zeros(30), np.zeros(30)) == 0.0
    with pytest.raises(ValueError):
        residual(A, np.zeros(29), b)


def test_singular_matrix_raises():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularMatrix):
        solve_linear(A, np.array([1.0, 0.0]))


def test_matches_textbook_path_without_interface():
    ex = ExactSolution(0.5, 1.0, 1.0)
    mesh = build_uniform_mesh(4)
    sy = assemble_space(build_space(mesh, None, 1.0, 1.0), f=ex.f, g=ex.u)
    fld = solve(sy)
    ref = ReferenceStokes(mesh.vertices, mesh.triangles, 1.0, ex.f, ex.u)
    x = ref.solve()
    P = _reference_permutation(mesh, ref)
    assert np.abs(fld.coefficients[P] - x).max() <= 1e-10


def test_baseline_invariants(baseline_n8):
    fld = baseline_n8.field
    sy = baseline_n8.system
    assert fld.residual <= 1e-10
    assert mean_is_zero(sy, fld.pressure, MEAN_RTOL)
    assert abs(pressure_mean(sy, fld.pressure)) <= 1e-11 * np.linalg.norm(fld.pressure)
    assert len(fld.velocity) == sy.dofmap.n_velocity and len(fld.pressure) == sy.dofmap.n_pressure
    assert np.array_equal(fld.ux, fld.velocity[: sy.dofmap.n_edges])


def test_deterministic(baseline_n8):
    sy = baseline_n8.system
    a = solve(sy).coefficients
    b = solve(sy).coefficients
    assert np.array_equal(a, b)


def test_scale_equivariance(baseline_n8):
    sy = baseline_n8.system
    order = dissection_order(sy.matrix, sy.space.dof_points, last=[sy.dofmap.multiplier])
    x, _ = solve_linear(sy.matrix, sy.rhs, order)
    y, _ = solve_linear(10.0 * sy.matrix, 10.0 * sy.rhs, order)
    assert np.abs(x - y).max() <= 1e-12 * np.abs(x).max()


def test_dissection_order_is_permutation(baseline_n8):
    sy = baseline_n8.system
    mult = sy.dofmap.multiplier
    order = dissection_order(sy.matrix, sy.space.dof_points, last=[mult])
    assert np.array_equal(np.sort(order), np.arange(sy.matrix.shape[0]))
    assert order[-1] == mult


def test_symmetric_scaling_unit_diagonal(baseline_n8):
    A = baseline_n8.system.matrix
    d = symmetric_scaling(A)
    S = sp.diags(d) @ A @ sp.diags(d)
    diag = S.diagonal()
    nz = A.diagonal() != 0
    assert np.allclose(np.abs(diag[nz]), 1.0)
    # zero-diagonal rows: entries against the unit-diagonal unknowns are O(1)
    zero_rows = np.flatnonzero(~nz)
    block = abs(S.tocsr()[zero_rows][:, np.flatnonzero(nz)])
    peak = block.max(axis=1).toarray().ravel()
    coupled = np.diff(block.tocsr().indptr) > 0
    assert coupled.sum() >= len(zero_rows) - 1
    assert np.all(peak[coupled] <= 1.0 + 1e-14) and np.all(peak[coupled] >= 0.5)


def test_residual_warning(baseline_n8):
    with pytest.warns(ResidualTooLarge):
        solve(baseline_n8.system, tol=0.0)


def test_thread_cap_gives_same_answer(baseline_n8, monkeypatch):
    monkeypatch.setenv("STOKES_IFE_THREADS", "1")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        x = solve(baseline_n8.system).coefficients
    assert np.array_equal(x, baseline_n8.field.coefficients)
