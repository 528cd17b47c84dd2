"""
Direct sparse solution of the assembled saddle-point system.

SuperLU's own column orderings produce heavy fill on this indefinite system
(the zero pressure block forces off-diagonal pivots).  When DOF locations are
known, a symmetric geometric nested-dissection order is used instead, with
every zero-diagonal unknown placed right after its last coupled neighbour so
that its pivot has already received a Schur-complement contribution.  Rows
and columns are scaled symmetrically first (unit diagonal on the velocity
block, unit-size coupling on the pressure rows), which keeps large viscosity
contrasts from triggering off-diagonal pivots.  The factorization keeps
threshold partial pivoting; if the residual check fails the solve is repeated
with SuperLU's default ordering and full pivoting.
"""
from __future__ import annotations

import os
import warnings
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SaddlePointSystem
from .exceptions import ResidualTooLarge, SingularMatrix

RESIDUAL_TOL = 1e-9
MEAN_RTOL = 1e-11
PIVOT_THRESHOLD = 1e-6
LEAF_SIZE = 32
THREADS_ENV = "STOKES_IFE_THREADS"


@dataclass(frozen=True, eq=False)
class SolutionField:
    velocity: np.ndarray  # (2 * n_edges,), x-components then y-components
    pressure: np.ndarray  # (n_triangles,)
    multiplier: float
    residual: float
    coefficients: np.ndarray  # full solution vector

    @property
    def ux(self) -> np.ndarray:
        return self.velocity[: len(self.velocity) // 2]

    @property
    def uy(self) -> np.ndarray:
        return self.velocity[len(self.velocity) // 2 :]


def residual(matrix, x, b) -> float:
    """Relative residual ``||A x - b|| / max(||b||, eps)``."""
    x = np.asarray(x, float)
    b = np.asarray(b, float)
    if matrix.shape[1] != x.shape[0] or matrix.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {matrix.shape}, x {x.shape}, b {b.shape}")
    r = matrix @ x - b
    return float(np.linalg.norm(r) / max(np.linalg.norm(b), np.finfo(float).tiny))


def dissection_order(matrix, points, last=(), leaf: int = LEAF_SIZE) -> np.ndarray:
    """Symmetric fill-reducing permutation from DOF coordinates.

    Uncoupled rows come first, the rows in ``last`` at the end.  Unknowns with
    a zero diagonal follow their last-ordered neighbour.
    """
    a = sp.csr_matrix(matrix)
    n = a.shape[0]
    points = np.asarray(points, float)
    last = np.asarray(last, dtype=np.int64)
    g = (abs(a) + abs(a.T)).tocsr()
    g.setdiag(0.0)
    g.eliminate_zeros()
    keep = np.ones(n)
    keep[last] = 0.0
    g = (sp.diags(keep) @ g @ sp.diags(keep)).tocsr()
    g.eliminate_zeros()

    degree = np.diff(g.indptr)
    diag = a.diagonal()
    isolated = (degree == 0) & (keep > 0)
    zero_diag = (diag == 0.0) & ~isolated & (keep > 0)
    main = np.flatnonzero((keep > 0) & ~isolated & ~zero_diag)

    order = []
    stack = [main]
    # iterative dissection: each range emits left, right, then its separator
    while stack:
        idx = stack.pop()
        if isinstance(idx, tuple):
            order.extend(idx[1])
            continue
        if len(idx) <= leaf:
            order.extend(idx.tolist())
            continue
        p = points[idx]
        ax = int(np.argmax(np.ptp(p, axis=0)))
        med = np.median(p[:, ax])
        left = idx[p[:, ax] < med]
        right = idx[p[:, ax] >= med]
        if len(left) == 0 or len(right) == 0:
            order.extend(idx.tolist())
            continue
        in_right = np.zeros(n, dtype=bool)
        in_right[right] = True
        sub = g[left]
        touches = np.asarray(sub[:, in_right].sum(axis=1)).ravel() > 0
        sep = left[touches]
        stack.append(("sep", sep.tolist()))
        stack.append(right)
        stack.append(left[~touches])

    pos = np.full(n, np.inf)
    pos[np.asarray(order, dtype=np.int64)] = np.arange(len(order), dtype=float)
    pos[isolated] = -1.0
    for i in np.flatnonzero(zero_diag):
        nb = g.indices[g.indptr[i] : g.indptr[i + 1]]
        nb = nb[np.isfinite(pos[nb]) & ~zero_diag[nb]]
        pos[i] = pos[nb].max() + 0.5 if len(nb) else len(order) + 0.25
    pos[last] = len(order) + 1.0 + np.arange(len(last))
    return np.argsort(pos, kind="stable")


def symmetric_scaling(matrix) -> np.ndarray:
    """Diagonal ``d`` such that ``diag(d) A diag(d)`` has unit nonzero diagonal entries.

    Rows with a zero diagonal are scaled so their largest scaled entry is 1.
    """
    a = sp.csr_matrix(matrix)
    diag = np.abs(a.diagonal())
    d = np.ones(a.shape[0])
    nz = diag > 0.0
    d[nz] = 1.0 / np.sqrt(diag[nz])
    z = ~nz
    if np.any(z):
        rows = abs(a[z] @ sp.diags(d))
        rmax = rows.max(axis=1).toarray().ravel()
        d[np.flatnonzero(z)[rmax > 0.0]] = 1.0 / rmax[rmax > 0.0]
    return d


def _thread_limit():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(limits=int(n))


def _factor_solve(a, b, **kw):
    try:
        lu = spla.splu(a, **kw)
    except RuntimeError as exc:
        raise SingularMatrix(f"factorization failed: {exc}") from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("factorization produced non-finite values")
    return x


def solve_linear(matrix, b, order=None, tol: float = RESIDUAL_TOL) -> tuple[np.ndarray, float]:
    """LU with pivoting; ``order`` is an optional symmetric permutation.  Returns (x, residual)."""
    a = sp.csr_matrix(matrix, dtype=float)
    b = np.asarray(b, float)
    if a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {a.shape}, rhs {b.shape}")
    with _thread_limit():
        if order is not None:
            order = np.asarray(order)
            d = symmetric_scaling(a)
            sa = sp.diags(d) @ a @ sp.diags(d)
            pa = sp.csc_matrix(sa.tocsr()[order][:, order])
            y = np.empty_like(b)
            try:
                y[order] = _factor_solve(pa, (d * b)[order], permc_spec="NATURAL", diag_pivot_thresh=PIVOT_THRESHOLD)
                x = d * y
                res = residual(a, x, b)
            except SingularMatrix:
                res = np.inf
            if res <= tol:
                return x, res
        x = _factor_solve(sp.csc_matrix(a), b)
    return x, residual(a, x, b)


def pressure_mean(system: SaddlePointSystem, p) -> float:
    """The integral sum_T |T| p_T of a pressure coefficient vector."""
    return float(system.space.mesh.areas @ np.asarray(p, float))


def mean_is_zero(system: SaddlePointSystem, p, rtol: float = MEAN_RTOL) -> bool:
    """True if |int p| <= rtol * ||p||_L2."""
    p = np.asarray(p, float)
    scale = np.sqrt(system.space.mesh.areas @ (p * p))
    return abs(pressure_mean(system, p)) <= rtol * max(scale, np.finfo(float).tiny)


def solve(system: SaddlePointSystem, tol: float = RESIDUAL_TOL) -> SolutionField:
    """Solve the saddle-point system and check the residual and the pressure mean."""
    dm = system.dofmap
    order = dissection_order(system.matrix, system.space.dof_points, last=[dm.multiplier])
    x, res = solve_linear(system.matrix, system.rhs, order, tol)
    if res > tol:
        warnings.warn(f"relative residual {res:.3e} exceeds {tol:.0e}", ResidualTooLarge, stacklevel=2)
    p = x[dm.pressure_slice]
    mean = pressure_mean(system, p)
    if not mean_is_zero(system, p):
        warnings.warn(f"pressure integral {mean:.3e} is not zero", ResidualTooLarge, stacklevel=2)
    return SolutionField(
        velocity=x[: dm.n_velocity].copy(),
        pressure=p.copy(),
        multiplier=float(x[dm.multiplier]),
        residual=res,
        coefficients=x,
    )


__all__ = [
    "MEAN_RTOL",
    "RESIDUAL_TOL",
    "SolutionField",
    "dissection_order",
    "mean_is_zero",
    "pressure_mean",
    "residual",
    "solve",
    "solve_linear",
    "symmetric_scaling",
]
