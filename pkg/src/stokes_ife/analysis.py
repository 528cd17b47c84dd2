"""
Errors against the closed-form circular-interface solution and convergence studies.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import (
    DEFAULT_BOUNDARY_PENALTY,
    DEFAULT_DELTA,
    DEFAULT_ETA,
    DEFAULT_PENALTY_WEIGHT,
    SaddlePointSystem,
    assemble_space,
    body_force,
)
from .geometry import MINUS, PLUS, CircleLevelSet, CutMesh, cut_mesh
from .mesh import Mesh, build_uniform_mesh
from .quadrature import gauss_legendre, polygon_rule, reference_triangle_rule
from .solver import SolutionField, solve
from .space import IFESpace, build_space


@dataclass(frozen=True)
class ExactSolution:
    """u = (r0^2 - |x|^2) / mu_s (-x2, x1), p = x2^2 - x1^2, s the side of x."""

    r0: float = 0.5
    mu_plus: float = 5.0
    mu_minus: float = 1.0

    @property
    def levelset(self) -> CircleLevelSet:
        return CircleLevelSet(self.r0)

    def mu(self, x) -> np.ndarray:
        return np.where(self.levelset(np.atleast_2d(x)) >= 0.0, self.mu_plus, self.mu_minus)

    def u(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        s = (self.r0**2 - np.einsum("ij,ij->i", x, x)) / self.mu(x)
        return np.column_stack((-s * x[:, 1], s * x[:, 0]))

    def grad_u(self, x) -> np.ndarray:
        """(n, 2, 2) with [i, a, b] = d u_a / d x_b."""
        x = np.atleast_2d(np.asarray(x, float))
        x1, x2 = x[:, 0], x[:, 1]
        s = self.r0**2 - x1 * x1 - x2 * x2
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = 2.0 * x1 * x2
        g[:, 0, 1] = 2.0 * x2 * x2 - s
        g[:, 1, 0] = s - 2.0 * x1 * x1
        g[:, 1, 1] = -2.0 * x1 * x2
        return g / self.mu(x)[:, None, None]

    def p(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        return x[:, 1] ** 2 - x[:, 0] ** 2

    def f(self, x) -> np.ndarray:
        return body_force(x)


@dataclass(frozen=True)
class ErrorNorms:
    eu_l2: float
    eu_h1: float
    ep_l2: float

    def __iter__(self):
        return iter((self.eu_l2, self.eu_h1, self.ep_l2))


def _sq_errors(x, w, uh, guh, ph, exact):
    du = exact.u(x) - uh
    dg = exact.grad_u(x) - guh
    dp = exact.p(x) - ph
    return np.array(
        [w @ np.einsum("qa,qa->q", du, du), w @ np.einsum("qab,qab->q", dg, dg), w @ (dp * dp)]
    )


CURVE_DEPTH = 7


def _straddles(tris, ls) -> np.ndarray:
    """True for triangles (m, 3, 2) whose samples (vertices, edge midpoints, centroid) change sign."""
    mids = 0.5 * (tris + np.roll(tris, -1, axis=1))
    cen = tris.mean(axis=1, keepdims=True)
    samples = np.concatenate((tris, mids, cen), axis=1)
    vals = ls(samples.reshape(-1, 2)).reshape(len(tris), -1) >= 0.0
    return vals.any(axis=1) & ~vals.all(axis=1)


def _refine(tris):
    """Split each triangle (m, 3, 2) into its four midpoint children."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    kids = np.stack(
        (np.stack((a, ab, ca), 1), np.stack((ab, b, bc), 1), np.stack((ca, bc, c), 1), np.stack((ab, bc, ca), 1)), 1
    )
    return kids.reshape(-1, 3, 2)


def curve_adapted_rule(tris, owner, ls, degree: int, depth: int = CURVE_DEPTH):
    """Composite rule on triangles, refined where the interface passes through.

    Triangles the curve crosses are split into four, up to ``depth`` times,
    so a kink of the integrand on the curve costs only the area of the last
    crossing tiles.  Returns points (n, 2), weights (n,) and the ``owner``
    label of every point.
    """
    bary, w = reference_triangle_rule(int(degree))
    pts, wts, own = [], [], []
    cur = np.asarray(tris, float)
    lab = np.asarray(owner)
    for level in range(depth + 1):
        if len(cur) == 0:
            break
        split = _straddles(cur, ls) if level < depth else np.zeros(len(cur), dtype=bool)
        keep = cur[~split]
        d1 = keep[:, 1] - keep[:, 0]
        d2 = keep[:, 2] - keep[:, 0]
        area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        pts.append(np.einsum("qk,tkd->tqd", bary, keep).reshape(-1, 2))
        wts.append((area[:, None] * w[None]).ravel())
        own.append(np.repeat(lab[~split], len(w), axis=0))
        cur = _refine(cur[split])
        lab = np.repeat(lab[split], 4, axis=0)
    return np.concatenate(pts), np.concatenate(wts), np.concatenate(own)


def compute_errors(space: IFESpace, coeffs, exact: ExactSolution, degree: int = 6) -> ErrorNorms:
    """L2 velocity error, broken H1 seminorm of the velocity error, L2 pressure error.

    The exact solution takes the side of the true interface at every
    quadrature point; elements and sub-polygons the curve passes through are
    integrated with a rule refined towards the curve.
    """
    if isinstance(coeffs, SolutionField):
        coeffs = coeffs.coefficients
    mesh = space.mesh
    const, grad, pres = space.field_arrays(coeffs)
    ls = getattr(exact, "levelset", None)
    regular = np.flatnonzero(space.side_of_element >= 0)
    if ls is None:
        near = np.zeros(len(regular), dtype=bool)
    else:
        near = _straddles(mesh.tri_coords[regular], ls)
    smooth = regular[~near]
    s = space.side_of_element[smooth]

    bary, w = reference_triangle_rule(int(degree))
    pts = np.einsum("qk,tkd->tqd", bary, mesh.tri_coords[smooth])  # (m, q, 2)
    c = const[smooth, s]
    g = grad[smooth, s]
    uh = c[:, None, :] + np.einsum("tab,tqb->tqa", g, pts)
    flat = pts.reshape(-1, 2)
    m, q = pts.shape[:2]
    du = exact.u(flat).reshape(m, q, 2) - uh
    dg = exact.grad_u(flat).reshape(m, q, 2, 2) - g[:, None]
    dp = exact.p(flat).reshape(m, q) - pres[smooth, s][:, None]
    aw = mesh.areas[smooth][:, None] * w[None, :]
    total = np.array(
        [
            np.sum(aw * np.einsum("tqa,tqa->tq", du, du)),
            np.sum(aw * np.einsum("tqab,tqab->tq", dg, dg)),
            np.sum(aw * dp * dp),
        ]
    )

    # (element, chord side) tiles the curve may pass through
    tiles, owner = [], []
    for t in regular[near]:
        tiles.append(mesh.tri_coords[t])
        owner.append((t, space.side_of_element[t]))
    for t, basis in space.bases.items():
        for side in (PLUS, MINUS):
            poly = basis.cut.polygon(side)
            for i in range(1, len(poly) - 1):
                tiles.append(poly[[0, i, i + 1]])
                owner.append((t, side))
    if tiles:
        x, wq, own = curve_adapted_rule(np.array(tiles), np.array(owner), ls, degree, CURVE_DEPTH if ls is not None else 0)
        tt, ss = own[:, 0], own[:, 1]
        g = grad[tt, ss]
        uh = const[tt, ss] + np.einsum("qab,qb->qa", g, x)
        total += _sq_errors(x, wq, uh, g, pres[tt, ss], exact)
    return ErrorNorms(*map(float, np.sqrt(np.maximum(total, 0.0))))


def rate(coarse: float, fine: float) -> float:
    """Observed order log2(coarse / fine) for a halved mesh size."""
    if not (coarse > 0.0 and fine > 0.0):
        raise ValueError(f"errors must be positive, got {coarse!r}, {fine!r}")
    return math.log2(coarse / fine)


def interpolant(space: IFESpace, exact: ExactSolution, degree: int = 6) -> np.ndarray:
    """Global coefficient vector of the IFE interpolant of the exact (u, p)."""
    mesh = space.mesh
    dm = space.dofmap
    out = np.zeros(dm.size)
    t, w = gauss_legendre(int(degree) // 2 + 1)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    means = np.einsum("q,eqa->ea", w, exact.u(pts.reshape(-1, 2)).reshape(len(a), len(t), 2))
    # the exact velocity has a kink on the interface: split crossed edges there
    crossings = space.cuts.crossings if space.cuts is not None else {}
    for e, x in crossings.items():
        acc = np.zeros(2)
        for p0, p1 in ((a[e], x), (x, b[e])):
            if np.linalg.norm(p1 - p0) > 0.0:
                xs = p0 + t[:, None] * (p1 - p0)
                acc += np.linalg.norm(p1 - p0) * (w @ exact.u(xs))
        means[e] = acc / np.linalg.norm(b[e] - a[e])
    out[: dm.n_edges] = means[:, 0]
    out[dm.n_edges : 2 * dm.n_edges] = means[:, 1]

    bary, wt = reference_triangle_rule(int(degree))
    tp = np.einsum("qk,tkd->tqd", bary, mesh.tri_coords)
    pm = (exact.p(tp.reshape(-1, 2)).reshape(mesh.n_triangles, len(wt))) @ wt
    for tri, basis in space.bases.items():
        acc = 0.0
        for side in (PLUS, MINUS):
            rule = polygon_rule(basis.cut.polygon(side), degree)
            acc += rule.weights @ exact.p(rule.points)
        pm[tri] = acc / basis.cut.area
    out[dm.pressure_slice] = pm
    return out


@dataclass(frozen=True)
class StudyConfig:
    n_list: tuple = (8, 16, 32, 64)
    mu_plus: float = 5.0
    mu_minus: float = 1.0
    delta: int = DEFAULT_DELTA
    eta: float = DEFAULT_ETA
    r0: float = 0.5
    error_degree: int = 6
    penalty_weight: str = DEFAULT_PENALTY_WEIGHT
    boundary_penalty: str = DEFAULT_BOUNDARY_PENALTY


@dataclass(frozen=True)
class SolveResult:
    n: int
    mesh: Mesh
    cuts: CutMesh
    space: IFESpace
    system: SaddlePointSystem
    field: SolutionField
    errors: ErrorNorms
    seconds: float


def solve_problem(
    n: int,
    mu_plus: float = 5.0,
    mu_minus: float = 1.0,
    delta: int = DEFAULT_DELTA,
    eta: float = DEFAULT_ETA,
    r0: float = 0.5,
    error_degree: int = 6,
    penalty_weight: str = DEFAULT_PENALTY_WEIGHT,
    boundary_penalty: str = DEFAULT_BOUNDARY_PENALTY,
) -> SolveResult:
    """Mesh, classify, cut, build bases, assemble, solve and measure errors for one N."""
    start = time.perf_counter()
    exact = ExactSolution(r0, mu_plus, mu_minus)
    mesh = build_uniform_mesh(n)
    cuts = cut_mesh(mesh, exact.levelset)
    space = build_space(mesh, cuts, mu_plus, mu_minus)
    system = assemble_space(
        space,
        delta,
        eta,
        f=exact.f,
        g=exact.u,
        penalty_weight=penalty_weight,
        boundary_penalty=boundary_penalty,
    )
    fld = solve(system)
    errors = compute_errors(space, fld, exact, error_degree)
    return SolveResult(n, mesh, cuts, space, system, fld, errors, time.perf_counter() - start)


@dataclass
class ReportRow:
    n: int
    eu_l2: float
    eu_h1: float
    ep_l2: float
    eu_l2_rate: float | None = None
    eu_h1_rate: float | None = None
    ep_l2_rate: float | None = None
    residual: float | None = None
    seconds: float | None = None


@dataclass
class ConvergenceReport:
    params: dict
    rows: list = field(default_factory=list)

    def add(self, n, errors, residual=None, seconds=None) -> ReportRow:
        row = ReportRow(int(n), *map(float, errors), residual=residual, seconds=seconds)
        if self.rows:
            prev = self.rows[-1]
            if n == 2 * prev.n:
                row.eu_l2_rate = rate(prev.eu_l2, row.eu_l2)
                row.eu_h1_rate = rate(prev.eu_h1, row.eu_h1)
                row.ep_l2_rate = rate(prev.ep_l2, row.ep_l2)
            else:
                # general refinement factor
                k = math.log2(n / prev.n)
                row.eu_l2_rate = rate(prev.eu_l2, row.eu_l2) / k
                row.eu_h1_rate = rate(prev.eu_h1, row.eu_h1) / k
                row.ep_l2_rate = rate(prev.ep_l2, row.ep_l2) / k
        self.rows.append(row)
        return row

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) if getattr(r, name) is not None else np.nan for r in self.rows])

    def to_dict(self) -> dict:
        return {"params": dict(self.params), "rows": [asdict(r) for r in self.rows]}


def run_study(config: StudyConfig = StudyConfig(), progress=None) -> ConvergenceReport:
    """Solve on every N of the config and collect errors and rates."""
    report = ConvergenceReport(
        params={
            "mu_plus": config.mu_plus,
            "mu_minus": config.mu_minus,
            "delta": config.delta,
            "eta": config.eta,
            "r0": config.r0,
            "penalty_weight": config.penalty_weight,
            "boundary_penalty": config.boundary_penalty,
        }
    )
    for n in config.n_list:
        res = solve_problem(
            n,
            config.mu_plus,
            config.mu_minus,
            config.delta,
            config.eta,
            config.r0,
            config.error_degree,
            config.penalty_weight,
            config.boundary_penalty,
        )
        row = report.add(n, res.errors, res.field.residual, res.seconds)
        if progress is not None:
            progress(row)
    return report


__all__ = [
    "ConvergenceReport",
    "ErrorNorms",
    "ExactSolution",
    "ReportRow",
    "SolveResult",
    "StudyConfig",
    "compute_errors",
    "curve_adapted_rule",
    "interpolant",
    "rate",
    "run_study",
    "solve_problem",
]
