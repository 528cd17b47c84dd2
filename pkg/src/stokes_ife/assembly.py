"""
Global assembly of the immersed CR-P0 saddle-point system.

With u_h = sum_j U_j phi_j and p_h = sum_j U_j psi_j over all local pairs
(the IFE velocity depends on the element pressure DOF and vice versa), the
matrix is

    K = A + B - B^T + J,    A[i, j] = a_h(phi_j, phi_i),
                            B[i, j] = b_h(phi_i, psi_j),
                            J[i, j] = J_h(psi_j, psi_i),

bordered by one Lagrange multiplier for the zero-mean pressure.  Volume
integrands are constant on each side of an element, so they are integrated
exactly with the side areas.  Edges away from the interface carry only the
CR jump penalty and are handled in one vectorized pass; the remaining edges go
through a piecewise loop that also adds the interface-edge terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidParams
from .geometry import CutMesh, PLUS, MINUS
from .mesh import Mesh
from .quadrature import polygon_rule, reference_triangle_rule, segment_rule, gauss_legendre
from .space import DofMap, IFESpace, build_space

DEFAULT_DELTA = -1
DEFAULT_ETA = 0.0
PENALTY_WEIGHTS = ("viscosity", "unit")
BOUNDARY_PENALTIES = ("data", "jump")
DEFAULT_PENALTY_WEIGHT = "viscosity"
DEFAULT_BOUNDARY_PENALTY = "data"


def body_force(x) -> np.ndarray:
    """Manufactured right-hand side of the circular-interface test, valid on both sides."""
    x = np.asarray(x, float)
    x1 = x[..., 0]
    x2 = x[..., 1]
    return np.stack((-8.0 * x2 - 2.0 * x1, 8.0 * x1 + 2.0 * x2), axis=-1)


def dirichlet_averages(mesh: Mesh, g, degree: int = 6, crossings: dict | None = None) -> np.ndarray:
    """Edge averages ``(1/|e|) int_e g`` on all boundary edges, shape (n_boundary, 2).

    Edges listed in ``crossings`` (edge -> point) are integrated piecewise, so a
    g with a kink at the interface is still averaged exactly.
    """
    bnd = mesh.boundary_edges
    out = np.zeros((len(bnd), 2))
    if g is None:
        return out
    t, w = gauss_legendre(int(degree) // 2 + 1)
    a = mesh.vertices[mesh.edges[bnd, 0]]
    b = mesh.vertices[mesh.edges[bnd, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    vals = np.asarray(g(pts.reshape(-1, 2)), float).reshape(len(a), len(t), 2)
    out[:] = np.einsum("q,eqa->ea", w, vals)
    for k, e in enumerate(bnd):
        x = (crossings or {}).get(int(e))
        if x is None:
            continue
        length = np.linalg.norm(b[k] - a[k])
        acc = np.zeros(2)
        for p, q in ((a[k], x), (x, b[k])):
            piece = np.linalg.norm(q - p)
            if piece > 0.0:
                acc += piece * (w @ np.asarray(g(p + t[:, None] * (q - p)), float))
        out[k] = acc / length
    return out


@dataclass(frozen=True, eq=False)
class SaddlePointSystem:
    """Assembled system after Dirichlet elimination, with its unreduced pieces."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    space: IFESpace
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray
    delta: int
    eta: float
    a_matrix: sp.csr_matrix = field(repr=False)
    b_matrix: sp.csr_matrix = field(repr=False)
    j_matrix: sp.csr_matrix = field(repr=False)
    full_matrix: sp.csr_matrix = field(repr=False)
    load: np.ndarray = field(repr=False)

    @property
    def dofmap(self) -> DofMap:
        return self.space.dofmap

    @property
    def shape(self):
        return self.matrix.shape

    def dump_coo(self, fh: TextIO) -> None:
        """Write the reduced matrix and right-hand side as ``row col value`` text."""
        m = self.matrix.tocoo()
        fh.write(f"# matrix {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for i, j, v in zip(m.row, m.col, m.data):
            fh.write(f"{i} {j} {v:.17g}\n")
        fh.write(f"# rhs {len(self.rhs)}\n")
        for i, v in enumerate(self.rhs):
            fh.write(f"{i} {v:.17g}\n")


def _check_params(delta, eta):
    if delta not in (-1, 1):
        raise InvalidParams(f"delta must be -1 or +1, got {delta!r}")
    if not (np.isfinite(eta) and eta >= 0.0):
        raise InvalidParams(f"eta must be a non-negative number, got {eta!r}")


def _check_choice(name, value, choices):
    if value not in choices:
        raise InvalidParams(f"{name} must be one of {choices}, got {value!r}")
    return value


def _sym(g):
    return 0.5 * (g + np.swapaxes(g, -1, -2))


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add_blocks(self, dofs, blocks):
        """``dofs`` (m, k), ``blocks`` (m, k, k)."""
        k = dofs.shape[1]
        self.rows.append(np.repeat(dofs, k, axis=1).ravel())
        self.cols.append(np.tile(dofs, (1, k)).ravel())
        self.vals.append(np.asarray(blocks).ravel())

    def matrix(self, n):
        if not self.rows:
            return sp.csr_matrix((n, n))
        m = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))), shape=(n, n)
        ).tocsr()
        m.eliminate_zeros()
        return m


def _volume_blocks(space: IFESpace):
    eps = _sym(space.grad)  # (nt, 2, 7, 2, 2)
    div = np.trace(space.grad, axis1=-2, axis2=-1)  # (nt, 2, 7)
    wa = space.side_area * (2.0 * space.mu)[None, :]
    a = np.einsum("ts,tsiab,tsjab->tij", wa, eps, eps)
    b = -np.einsum("ts,tsj,tsi->tij", space.side_area, space.pres, div)
    return a, b


def _plain_edge_ids(mesh: Mesh, special: np.ndarray) -> np.ndarray:
    mask = np.ones(mesh.n_edges, dtype=bool)
    mask[special] = False
    return np.flatnonzero(mask)


def _plain_edges(space: IFESpace, special: np.ndarray, weighted: bool = False):
    """CR jump penalty on edges whose neighbours are both standard elements."""
    mesh = space.mesh
    edges = _plain_edge_ids(mesh, special)
    if len(edges) == 0:
        return np.zeros((0, 6), dtype=np.int64), np.zeros((0, 6, 6))
    t, w = gauss_legendre(2)
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    length = np.hypot(*(b - a).T)
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]  # (m, 2, 2)
    t1 = mesh.edge_tris[edges, 0]
    t2 = mesh.edge_tris[edges, 1]
    bnd = t2 < 0
    t2 = np.where(bnd, t1, t2)

    def lam(tris):
        s = space.side_of_element[tris]
        c = space.const[tris, s, 0:3, 0]  # (m, 3)
        g = space.grad[tris, s, 0:3, 0, :]  # (m, 3, 2)
        return c[:, None, :] + np.einsum("mkb,mqb->mqk", g, pts)

    v1 = lam(t1)
    v2 = np.where(bnd[:, None, None], 0.0, lam(t2))
    jump = np.concatenate((v1, -v2), axis=2)  # (m, q, 6)
    blocks = np.einsum("q,mqi,mqj->mij", w, jump, jump)  # weights on [0, 1] absorb |e| / |e|
    if weighted:
        mu = 0.5 * (space.mu[space.side_of_element[t1]] + space.mu[space.side_of_element[t2]])
        blocks *= mu[:, None, None]
    dofs = np.concatenate((mesh.tri_edges[t1], mesh.tri_edges[t2]), axis=1)
    return dofs, blocks


def _edge_pieces(space: IFESpace, e: int):
    mesh = space.mesh
    a = mesh.vertices[mesh.edges[e, 0]]
    b = mesh.vertices[mesh.edges[e, 1]]
    cuts = space.cuts
    if cuts is not None and e in cuts.crossings:
        x = cuts.crossings[e]
        tol = 1e-10 * np.linalg.norm(b - a)
        return [(p, q) for p, q in ((a, x), (x, b)) if np.linalg.norm(q - p) > tol]
    return [(a, b)]


def _special_edge(space: IFESpace, e: int, is_gamma: bool, delta: int, eta: float, degree: int, weighted: bool = False):
    """Local 14 x 14 (or 7 x 7 on the boundary) blocks of one edge touching the interface."""
    mesh = space.mesh
    t1, t2 = mesh.edge_tris[e]
    tris = [int(t1)] if t2 < 0 else [int(t1), int(t2)]
    avg = 1.0 / len(tris)
    n = mesh.edge_normals[e]
    length = float(np.linalg.norm(mesh.vertices[mesh.edges[e, 1]] - mesh.vertices[mesh.edges[e, 0]]))
    m = 7 * len(tris)
    A = np.zeros((m, m))
    B = np.zeros((m, m))
    J = np.zeros((m, m))
    pen = (1.0 + (eta if is_gamma else 0.0)) / length
    for p, q in _edge_pieces(space, e):
        rule = segment_rule(p, q, degree)
        x = rule.points
        mid = 0.5 * (p + q)
        ju = np.zeros((len(x), m, 2))
        stress = np.zeros((m, 2))
        pav = np.zeros(m)
        pj = np.zeros(m)
        mu_piece = 0.0
        for k, t in enumerate(tris):
            s = int(space.element_side(t, mid)[0])
            sl = slice(7 * k, 7 * k + 7)
            sign = 1.0 if k == 0 else -1.0
            g = space.grad[t, s]
            vel = space.const[t, s][None] + np.einsum("iab,qb->qia", g, x)
            ju[:, sl] = sign * vel
            stress[sl] = avg * 2.0 * space.mu[s] * (_sym(g) @ n)
            pav[sl] = avg * space.pres[t, s]
            pj[sl] = sign * space.pres[t, s]
            mu_piece += avg * space.mu[s]
        A += (mu_piece if weighted else 1.0) * pen * np.einsum("q,qia,qja->ij", rule.weights, ju, ju)
        if is_gamma:
            ji = np.einsum("q,qia->ia", rule.weights, ju)
            A -= ji @ stress.T + delta * (stress @ ji.T)
            B += np.outer(ji @ n, pav)
            if len(tris) == 2:
                J += length * rule.measure * np.outer(pj, pj)
    dofs = np.concatenate([space.dofmap.element_dofs[t] for t in tris])
    return dofs, A, B, J


def _boundary_data_load(space: IFESpace, g, gamma: set, delta: int, eta: float, degree: int, weighted: bool):
    """Right-hand side terms that make the boundary-edge terms consistent with u = g.

    Every boundary edge contributes ``(1/|e|) int_e g . v``; a boundary edge
    crossed by the interface also carries the data halves of its penalty,
    symmetrizing and pressure terms.
    """
    mesh = space.mesh
    out = np.zeros(space.dofmap.size)
    if g is None:
        return out
    for e in mesh.boundary_edges:
        e = int(e)
        t = int(mesh.edge_tris[e, 0])
        n = mesh.edge_normals[e]
        a, b = mesh.vertices[mesh.edges[e]]
        length = float(np.linalg.norm(b - a))
        is_gamma = e in gamma
        loc = np.zeros(7)
        for p, q in _edge_pieces(space, e):
            rule = segment_rule(p, q, degree)
            s = int(space.element_side(t, 0.5 * (p + q))[0])
            gv = np.asarray(g(rule.points), float)
            vel = space.const[t, s][None] + np.einsum("iab,qb->qia", space.grad[t, s], rule.points)
            scale = space.mu[s] if weighted else 1.0
            pen = scale * (1.0 + (eta if is_gamma else 0.0)) / length
            loc += pen * np.einsum("q,qa,qia->i", rule.weights, gv, vel)
            if is_gamma:
                gi = rule.weights @ gv
                stress = 2.0 * space.mu[s] * (_sym(space.grad[t, s]) @ n)
                loc -= delta * (stress @ gi) + space.pres[t, s] * (gi @ n)
        out[space.dofmap.element_dofs[t]] += loc
    return out


def _load_vector(space: IFESpace, f, degree: int) -> np.ndarray:
    """Element contributions of int f . phi_i, scattered into a global vector."""
    mesh = space.mesh
    nt = mesh.n_triangles
    two_sided = isinstance(f, (tuple, list))
    ls = space.cuts.levelset if space.cuts is not None else None

    def fval(x):
        if not two_sided:
            return np.asarray(f(x), float)
        if ls is None:
            return np.asarray(f[0](x), float)
        plus = np.asarray(ls(x)) >= 0.0
        return np.where(plus[:, None], f[0](x), f[1](x))

    bary, w = reference_triangle_rule(int(degree))
    pts = np.einsum("qk,tkd->tqd", bary, mesh.tri_coords)
    fv = fval(pts.reshape(-1, 2)).reshape(nt, len(w), 2)
    area = mesh.areas
    f0 = np.einsum("q,tqa->ta", w, fv) * area[:, None]
    f1 = np.einsum("q,tqa,tqb->tab", w, fv, pts) * area[:, None, None]
    s = np.maximum(space.side_of_element, 0)
    idx = np.arange(nt)
    loc = np.einsum("tia,ta->ti", space.const[idx, s], f0) + np.einsum("tiab,tab->ti", space.grad[idx, s], f1)
    for t, basis in space.bases.items():
        loc[t] = 0.0
        for side in (PLUS, MINUS):
            rule = polygon_rule(basis.cut.polygon(side), degree)
            fx = fval(rule.points)
            vel = space.const[t, side][None] + np.einsum("iab,qb->qia", space.grad[t, side], rule.points)
            loc[t] += np.einsum("q,qa,qia->i", rule.weights, fx, vel)
    out = np.zeros(space.dofmap.size)
    np.add.at(out, space.dofmap.element_dofs, loc)
    return out


def assemble_space(
    space: IFESpace,
    delta: int = DEFAULT_DELTA,
    eta: float = DEFAULT_ETA,
    f=body_force,
    g=None,
    edge_degree: int = 4,
    load_degree: int = 4,
    dirichlet_degree: int = 6,
    penalty_weight: str = DEFAULT_PENALTY_WEIGHT,
    boundary_penalty: str = DEFAULT_BOUNDARY_PENALTY,
) -> SaddlePointSystem:
    """Assemble on a prepared space.  ``f`` may be a callable or a (f_plus, f_minus) pair.

    ``penalty_weight`` scales the edge jump penalty: "viscosity" multiplies it
    by the viscosity average across the edge, "unit" uses the bare 1/|e|.
    ``boundary_penalty`` selects how boundary edges see the prescribed data:
    "data" penalizes u - g (consistent for any g), "jump" penalizes u itself.
    """
    _check_params(delta, eta)
    weighted = _check_choice("penalty_weight", penalty_weight, PENALTY_WEIGHTS) == "viscosity"
    _check_choice("boundary_penalty", boundary_penalty, BOUNDARY_PENALTIES)
    mesh = space.mesh
    dm = space.dofmap
    n = dm.size
    ta, tb, tj = _Triplets(), _Triplets(), _Triplets()

    va, vb = _volume_blocks(space)
    ta.add_blocks(dm.element_dofs, va)
    tb.add_blocks(dm.element_dofs, vb)

    gamma = set(int(e) for e in space.interface_edges)
    iface = np.zeros(mesh.n_triangles, dtype=bool)
    iface[list(space.bases)] = True
    et = mesh.edge_tris
    touching = iface[et[:, 0]] | (iface[np.maximum(et[:, 1], 0)] & (et[:, 1] >= 0))
    special = np.union1d(np.flatnonzero(touching), np.array(sorted(gamma), dtype=np.int64))

    pdofs, pblocks = _plain_edges(space, special, weighted)
    ta.add_blocks(pdofs, pblocks)
    ta.add_blocks(pdofs + dm.n_edges, pblocks)

    for e in special:
        dofs, A, B, J = _special_edge(space, int(e), int(e) in gamma, delta, eta, edge_degree, weighted)
        ta.add_blocks(dofs[None], A[None])
        tb.add_blocks(dofs[None], B[None])
        tj.add_blocks(dofs[None], J[None])

    a_mat = ta.matrix(n)
    b_mat = tb.matrix(n)
    j_mat = tj.matrix(n)

    areas = mesh.areas
    pd = dm.p(np.arange(mesh.n_triangles))
    mult = np.full(len(pd), dm.multiplier)
    c = sp.coo_matrix(
        (np.concatenate((areas, areas)), (np.concatenate((pd, mult)), np.concatenate((mult, pd)))), shape=(n, n)
    )
    full = (a_mat + b_mat - b_mat.T + j_mat + c).tocsr()
    full.eliminate_zeros()

    load = _load_vector(space, f, load_degree)
    if boundary_penalty == "data":
        load += _boundary_data_load(space, g, gamma, delta, eta, edge_degree, weighted)
    gvals = dirichlet_averages(mesh, g, dirichlet_degree, space.cuts.crossings if space.cuts is not None else None)
    ddofs = dm.dirichlet_dofs
    dvals = np.concatenate((gvals[:, 0], gvals[:, 1]))

    xg = np.zeros(n)
    xg[ddofs] = dvals
    rhs = load - full @ xg
    rhs[ddofs] = dvals
    free = np.ones(n)
    free[ddofs] = 0.0
    keep = sp.diags(free)
    matrix = (keep @ full @ keep + sp.diags(1.0 - free)).tocsr()
    matrix.eliminate_zeros()
    matrix.sort_indices()

    return SaddlePointSystem(
        matrix=matrix,
        rhs=rhs,
        space=space,
        dirichlet_dofs=ddofs,
        dirichlet_values=dvals,
        delta=int(delta),
        eta=float(eta),
        a_matrix=a_mat,
        b_matrix=b_mat,
        j_matrix=j_mat,
        full_matrix=full,
        load=load,
    )


def assemble(
    mesh: Mesh,
    cuts: CutMesh | None,
    bases: dict | None,
    mu_plus: float,
    mu_minus: float,
    delta: int = DEFAULT_DELTA,
    eta: float = DEFAULT_ETA,
    f=body_force,
    g=None,
    **kwargs,
) -> SaddlePointSystem:
    """Build the IFE space for ``cuts``/``bases`` and assemble the saddle-point system."""
    _check_params(delta, eta)
    space = build_space(mesh, cuts, mu_plus, mu_minus, bases)
    return assemble_space(space, delta, eta, f, g, **kwargs)


__all__ = [
    "BOUNDARY_PENALTIES",
    "DEFAULT_BOUNDARY_PENALTY",
    "DEFAULT_DELTA",
    "DEFAULT_PENALTY_WEIGHT",
    "PENALTY_WEIGHTS",
    "DEFAULT_ETA",
    "SaddlePointSystem",
    "assemble",
    "assemble_space",
    "body_force",
    "dirichlet_averages",
]
