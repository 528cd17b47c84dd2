"""
Local CR-P0 and immersed CR-P0 shape functions.

Local numbering of the seven shape-function pairs on a triangle::

    0, 1, 2   x-velocity, edge average on local edge 0, 1, 2
    3, 4, 5   y-velocity, edge average on local edge 0, 1, 2
    6         pressure, element mean

On an interface element the pair ``i < 6`` is the standard CR pair plus two
scalar corrections,

    velocity = phi_i + c2[i] * (w - pi_CR w) * t_h
    pressure = c1[i] * (z - pi_0 z)

where ``w`` is the distance to the chord on the plus part (zero on the minus
part) and ``z`` is -1 on the plus part, 0 on the minus part.  The pair 6 is
(0, 1) everywhere.  Every side's velocity is affine and its pressure constant,
so a basis is stored as per-side arrays ``const (7, 2)``, ``grad (7, 2, 2)``
(``grad[i, a, b] = d v_a / d x_b``) and ``pres (7,)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidParams, SingularSystem
from .geometry import MINUS, PLUS, CutElement
from .mesh import check_triangle, local_edge_vertices
from .quadrature import polygon_rule, segment_rule

N_LOCAL = 7


class SideArrays(NamedTuple):
    const: np.ndarray  # (7, 2)
    grad: np.ndarray  # (7, 2, 2)
    pres: np.ndarray  # (7,)

    def velocity(self, x, coeffs=None):
        """Velocities of all 7 functions (n, 7, 2), or of a combination (n, 2)."""
        x = np.atleast_2d(np.asarray(x, float))
        v = self.const[None] + np.einsum("iab,nb->nia", self.grad, x)
        if coeffs is None:
            return v
        return np.einsum("nia,i->na", v, coeffs)

    def combine(self, coeffs) -> "SideArrays":
        c = np.asarray(coeffs, float)
        return SideArrays(c @ self.const, np.einsum("i,iab->ab", c, self.grad), c @ self.pres)


@dataclass(frozen=True, eq=False)
class CRBasis:
    """The three affine CR functions of a triangle; lambda_k has unit mean on edge k."""

    vertices: np.ndarray
    area: float
    const: np.ndarray  # (3,)
    grad: np.ndarray  # (3, 2)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        return self.const[None] + x @ self.grad.T

    def side_arrays(self, side: int = PLUS) -> SideArrays:
        return crp0_arrays(self.const, self.grad)


def build_cr_basis(vertices) -> CRBasis:
    v = np.asarray(vertices, float)
    area = check_triangle(v)
    grad = np.empty((3, 2))
    const = np.empty(3)
    for k in range(3):
        i, j = local_edge_vertices(k)
        d = v[j] - v[i]
        gb = np.array([-d[1], d[0]]) / (2.0 * area)  # gradient of barycentric coordinate k
        bk_const = -gb @ v[i]  # b_k vanishes on edge k
        grad[k] = -2.0 * gb
        const[k] = 1.0 - 2.0 * bk_const
    return CRBasis(v, area, const, grad)


def crp0_arrays(cr_const, cr_grad) -> SideArrays:
    """Side arrays of the standard CR-P0 pairs built from CR coefficients."""
    const = np.zeros((N_LOCAL, 2))
    grad = np.zeros((N_LOCAL, 2, 2))
    pres = np.zeros(N_LOCAL)
    const[0:3, 0] = cr_const
    const[3:6, 1] = cr_const
    grad[0:3, 0, :] = cr_grad
    grad[3:6, 1, :] = cr_grad
    pres[6] = 1.0
    return SideArrays(const, grad, pres)


def _positive_part_mean(ga: float, gb: float) -> float:
    """Mean over a segment of max(g, 0) for g linear with end values ga, gb."""
    if ga >= 0.0 and gb >= 0.0:
        return 0.5 * (ga + gb)
    if ga <= 0.0 and gb <= 0.0:
        return 0.0
    pos, neg = (ga, gb) if ga > 0.0 else (gb, ga)
    return pos * pos / (2.0 * (pos - neg))


@dataclass(frozen=True, eq=False)
class IFELocalBasis:
    cut: CutElement
    cr: CRBasis
    mu_plus: float
    mu_minus: float
    w_means: np.ndarray  # edge means of w
    pi_w_const: float
    pi_w_grad: np.ndarray
    theta: float
    denom: float
    frac_plus: float
    c1: np.ndarray  # (6,)
    c2: np.ndarray  # (6,)
    plus: SideArrays
    minus: SideArrays

    def side_arrays(self, side: int) -> SideArrays:
        return self.plus if side == PLUS else self.minus


def build_ife_basis(cut: CutElement, mu_plus: float, mu_minus: float) -> IFELocalBasis:
    """Explicit immersed CR-P0 basis on an interface element."""
    if not (mu_plus > 0.0 and mu_minus > 0.0):
        raise InvalidParams(f"viscosities must be positive, got {mu_plus}, {mu_minus}")
    cr = build_cr_basis(cut.vertices)
    n, t, D = cut.n_h, cut.t_h, cut.D

    # w+ = n.(x - D); its edge means in closed form (exact, feeds the denominator)
    g = (cut.vertices - D) @ n
    w_means = np.array([_positive_part_mean(g[i], g[j]) for i, j in map(local_edge_vertices, range(3))])
    pi_w_const = float(w_means @ cr.const)
    pi_w_grad = w_means @ cr.grad
    theta = float(pi_w_grad @ n)
    ratio = mu_minus / mu_plus
    denom = 1.0 + (ratio - 1.0) * theta

    std = crp0_arrays(cr.const, cr.grad)
    c1 = np.empty(6)
    c2 = np.empty(6)
    for i in range(6):
        G = std.grad[i]
        Gn = G @ n
        Gt = G @ t
        c1[i] = 2.0 * (mu_minus - mu_plus) * float(Gn @ n)
        c2[i] = (ratio - 1.0) * float(Gn @ t + Gt @ n) / denom

    frac = cut.frac_plus
    sides = []
    for side in (PLUS, MINUS):
        w_grad = n if side == PLUS else np.zeros(2)
        w_const = -float(n @ D) if side == PLUS else 0.0
        const = std.const.copy()
        grad = std.grad.copy()
        pres = std.pres.copy()
        const[:6] += c2[:, None] * (w_const - pi_w_const) * t[None, :]
        grad[:6] += c2[:, None, None] * np.outer(t, w_grad - pi_w_grad)[None]
        z = -1.0 if side == PLUS else 0.0
        pres[:6] = c1 * (z + frac)
        sides.append(SideArrays(const, grad, pres))

    return IFELocalBasis(
        cut=cut,
        cr=cr,
        mu_plus=float(mu_plus),
        mu_minus=float(mu_minus),
        w_means=w_means,
        pi_w_const=pi_w_const,
        pi_w_grad=pi_w_grad,
        theta=theta,
        denom=denom,
        frac_plus=frac,
        c1=c1,
        c2=c2,
        plus=sides[0],
        minus=sides[1],
    )


def eval_basis(basis, i: int, x, side: int = PLUS):
    """Velocity (n, 2), velocity gradient (2, 2) and pressure of local function ``i`` (0-based).

    ``basis`` is an IFELocalBasis or a CRBasis; ``side`` selects the plus or
    minus polynomial piece (ignored for CR).
    """
    if not 0 <= int(i) < N_LOCAL:
        raise IndexError(f"local basis index {i} out of range [0, 7)")
    arr = basis.side_arrays(side)
    x = np.atleast_2d(np.asarray(x, float))
    vel = arr.const[i][None] + x @ arr.grad[i].T
    return vel, arr.grad[i].copy(), float(arr.pres[i])


# ---------------------------------------------------------------------------
# degrees of freedom and interpolation
# ---------------------------------------------------------------------------


def _edge_pieces(vertices, cut, k):
    if cut is not None:
        return cut.edge_pieces(k)
    i, j = local_edge_vertices(k)
    return [(vertices[i], vertices[j], PLUS)]


def _element_regions(vertices, cut):
    if cut is not None:
        return [(cut.poly_plus, PLUS), (cut.poly_minus, MINUS)]
    return [(vertices, PLUS)]


def local_dofs(vertices, v, q, cut: CutElement | None = None, degree: int = 6) -> np.ndarray:
    """The 7 local DOFs of a field pair.

    ``v(x, side)`` returns (n, 2) velocities and ``q(x, side)`` (n,) pressures,
    ``side`` being the chord side of the sample points (ignored by smooth
    fields).  Edges crossed by the chord are integrated piecewise.
    """
    vertices = np.asarray(vertices, float)
    out = np.empty(N_LOCAL)
    for k in range(3):
        i, j = local_edge_vertices(k)
        length = np.linalg.norm(vertices[j] - vertices[i])
        total = np.zeros(2)
        for p0, p1, side in _edge_pieces(vertices, cut, k):
            r = segment_rule(p0, p1, degree)
            total += r.weights @ np.asarray(v(r.points, side))
        out[k] = total[0] / length
        out[3 + k] = total[1] / length
    area = abs(check_triangle(vertices))
    total = 0.0
    for poly, side in _element_regions(vertices, cut):
        r = polygon_rule(poly, degree)
        total += float(r.weights @ np.asarray(q(r.points, side)))
    out[6] = total / area
    return out


def basis_dof_matrix(basis, degree: int = 4) -> np.ndarray:
    """N_j(phi_i) for all local pairs, computed by cut quadrature; should be the identity.

    Row i holds the DOFs of pair i.  Pressures are constant on each side, so
    the element mean uses the exact sub-areas.
    """
    cut = basis.cut if isinstance(basis, IFELocalBasis) else None
    verts = cut.vertices if cut is not None else basis.vertices
    M = np.empty((N_LOCAL, N_LOCAL))
    for k in range(3):
        i, j = local_edge_vertices(k)
        length = np.linalg.norm(verts[j] - verts[i])
        total = np.zeros((N_LOCAL, 2))
        for p0, p1, side in _edge_pieces(verts, cut, k):
            r = segment_rule(p0, p1, degree)
            total += np.einsum("q,qia->ia", r.weights, basis.side_arrays(side).velocity(r.points))
        M[:, k] = total[:, 0] / length
        M[:, 3 + k] = total[:, 1] / length
    if cut is None:
        M[:, 6] = basis.side_arrays(PLUS).pres
    else:
        M[:, 6] = cut.frac_plus * basis.plus.pres + (1.0 - cut.frac_plus) * basis.minus.pres
    return M


def interpolate(element, v, q, degree: int = 6) -> np.ndarray:
    """Local interpolation coefficients (the 7 DOFs) of the pair (v, q).

    ``element`` is a CutElement, an IFELocalBasis, a CRBasis or a (3, 2)
    vertex array.  ``v(x)`` / ``q(x)`` take (n, 2) points.  On cut elements
    edges are split at the crossings so fields with a kink across the
    interface are integrated exactly.
    """
    if isinstance(element, IFELocalBasis):
        element = element.cut
    if isinstance(element, CRBasis):
        element = element.vertices
    cut = element if isinstance(element, CutElement) else None
    verts = cut.vertices if cut is not None else np.asarray(element, float)
    return local_dofs(verts, lambda x, s: v(x), lambda x, s: q(x), cut, degree)


# ---------------------------------------------------------------------------
# discrete jump conditions
# ---------------------------------------------------------------------------


def jump_residuals(basis: IFELocalBasis, coeffs=None, n_points: int = 10) -> dict:
    """Residuals of the discrete interface conditions for a combination of basis pairs.

    With ``coeffs=None`` the maximum over the seven basis pairs is returned.
    Keys: ``stress`` (norm of the traction jump), ``value`` (max velocity jump
    on the chord), ``tangential`` (norm of the jump of grad v t_h),
    ``divergence``.
    """
    if coeffs is None:
        res = [jump_residuals(basis, np.eye(N_LOCAL)[i], n_points) for i in range(N_LOCAL)]
        return {k: max(r[k] for r in res) for k in res[0]}
    cut = basis.cut
    p = basis.plus.combine(coeffs)
    m = basis.minus.combine(coeffs)
    n, t = cut.n_h, cut.t_h
    stress = (
        basis.mu_plus * (p.grad + p.grad.T) @ n
        - p.pres * n
        - basis.mu_minus * (m.grad + m.grad.T) @ n
        + m.pres * n
    )
    s = np.linspace(0.0, 1.0, n_points)
    x = cut.D[None] + s[:, None] * (cut.E - cut.D)[None]
    vp = p.const[None] + x @ p.grad.T
    vm = m.const[None] + x @ m.grad.T
    return {
        "stress": float(np.linalg.norm(stress)),
        "value": float(np.abs(vp - vm).max()),
        "tangential": float(np.linalg.norm((p.grad - m.grad) @ t)),
        "divergence": float(abs(np.trace(p.grad) - np.trace(m.grad))),
    }


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


class PiecewisePair(NamedTuple):
    """A side-wise (P1^2, P0) pair as returned by the dense oracle."""

    plus: SideArrays
    minus: SideArrays

    def side_arrays(self, side):
        return self.plus if side == PLUS else self.minus

    def velocity(self, x, side):
        return self.side_arrays(side).velocity(x)[:, 0]

    def pressure(self, side):
        return float(self.side_arrays(side).pres[0])


def oracle_system(cut: CutElement, mu_plus: float, mu_minus: float):
    """The dense 14 x 14 matrix (7 DOF rows, 7 interface-condition rows).

    Unknowns per side (plus first): v1 = a + b.xi, v2 = c + d.xi, q, in
    scaled coordinates ``xi = (x - x_c) / h``.
    """
    if not (mu_plus > 0.0 and mu_minus > 0.0):
        raise InvalidParams("viscosities must be positive")
    v = cut.vertices
    xc = v.mean(axis=0)
    h = cut.diameter
    mu = (mu_plus, mu_minus)
    sign = (1.0, -1.0)
    A = np.zeros((14, 14))

    def row_value(x, side, comp):
        r = np.zeros(14)
        xi = (np.asarray(x) - xc) / h
        o = 7 * side + 3 * comp
        r[o : o + 3] = (1.0, xi[0], xi[1])
        return r

    # DOF rows
    for k in range(3):
        i, j = local_edge_vertices(k)
        length = np.linalg.norm(v[j] - v[i])
        for p0, p1, side in cut.edge_pieces(k):
            r = segment_rule(p0, p1, 2)
            for x, wq in zip(r.points, r.weights):
                for comp in range(2):
                    A[3 * comp + k] += wq / length * row_value(x, side, comp)
    A[6, 6] = cut.frac_plus
    A[6, 13] = 1.0 - cut.frac_plus

    n, t = cut.n_h, cut.t_h
    scale = max(mu_plus, mu_minus)
    # traction jump: mu (grad v + grad v^T) n - q n, divided by max(mu)
    for a in range(2):
        row = 7 + a
        for side in (PLUS, MINUS):
            o = 7 * side
            for b in range(2):
                # d v_a / d x_b and d v_b / d x_a in scaled coordinates
                A[row, o + 3 * a + 1 + b] += sign[side] * mu[side] * n[b] / (h * scale)
                A[row, o + 3 * b + 1 + a] += sign[side] * mu[side] * n[b] / (h * scale)
            A[row, o + 6] += -sign[side] * n[a] / scale
    # value jump at x_T
    for a in range(2):
        A[9 + a] = row_value(cut.x_T, PLUS, a) - row_value(cut.x_T, MINUS, a)
    # tangential derivative jump (grad v_a . t)
    for a in range(2):
        for side in (PLUS, MINUS):
            o = 7 * side + 3 * a
            A[11 + a, o + 1] += sign[side] * t[0]
            A[11 + a, o + 2] += sign[side] * t[1]
    # divergence jump
    for side in (PLUS, MINUS):
        o = 7 * side
        A[13, o + 1] += sign[side]
        A[13, o + 5] += sign[side]
    return A, xc, h


def oracle_solve_14x14(cut: CutElement, mu_plus: float, mu_minus: float, dofs) -> PiecewisePair:
    """Solve the raw 14-unknown system for the pair with the given 7 DOFs."""
    A, xc, h = oracle_system(cut, mu_plus, mu_minus)
    rhs = np.zeros(14)
    rhs[:7] = np.asarray(dofs, float)
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(sol)) or np.linalg.cond(A) > 1e15:
        raise SingularSystem("oracle matrix is numerically singular")
    sides = []
    for side in (PLUS, MINUS):
        s = sol[7 * side : 7 * side + 7]
        grad = np.array([[s[1], s[2]], [s[4], s[5]]]) / h
        const = np.array([s[0], s[3]]) - grad @ xc
        sides.append(SideArrays(const[None], grad[None], np.array([s[6]])))
    return PiecewisePair(*sides)

