"""
The global immersed CR-P0 space: DOF numbering and per-element shape data.

Global unknowns are ordered as x-velocity edge means (one per edge),
y-velocity edge means, element pressure means, and finally one Lagrange
multiplier for the zero-mean pressure constraint.

Every element stores its seven local pairs for both sides (index 0 = plus,
1 = minus).  A non-interface element stores identical arrays on both sides
and puts its whole area on its own side, so the volume integrals need no
special casing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParams, MissingCutData
from .geometry import MINUS, PLUS, CutMesh
from .ife import N_LOCAL, IFELocalBasis, build_ife_basis
from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class DofMap:
    n_edges: int
    n_triangles: int
    element_dofs: np.ndarray  # (nt, 7)
    dirichlet_edges: np.ndarray

    @classmethod
    def for_mesh(cls, mesh: Mesh) -> "DofMap":
        ne = mesh.n_edges
        te = mesh.tri_edges
        dofs = np.column_stack((te, ne + te, 2 * ne + np.arange(mesh.n_triangles)))
        dofs.setflags(write=False)
        return cls(ne, mesh.n_triangles, dofs, mesh.boundary_edges)

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_edges

    @property
    def n_pressure(self) -> int:
        return self.n_triangles

    @property
    def multiplier(self) -> int:
        return 2 * self.n_edges + self.n_triangles

    @property
    def size(self) -> int:
        return self.multiplier + 1

    def ux(self, e):
        return np.asarray(e)

    def uy(self, e):
        return self.n_edges + np.asarray(e)

    def p(self, t):
        return 2 * self.n_edges + np.asarray(t)

    @property
    def dirichlet_dofs(self) -> np.ndarray:
        return np.concatenate((self.dirichlet_edges, self.n_edges + self.dirichlet_edges))

    @property
    def pressure_slice(self) -> slice:
        return slice(2 * self.n_edges, 2 * self.n_edges + self.n_triangles)


@dataclass(frozen=True, eq=False)
class IFESpace:
    mesh: Mesh
    cuts: CutMesh | None
    bases: dict  # tri -> IFELocalBasis
    mu: np.ndarray  # (2,) viscosity per side index
    dofmap: DofMap
    side_of_element: np.ndarray  # (nt,) side index of non-interface elements, -1 for interface
    side_area: np.ndarray  # (nt, 2)
    const: np.ndarray  # (nt, 2, 7, 2)
    grad: np.ndarray  # (nt, 2, 7, 2, 2)
    pres: np.ndarray  # (nt, 2, 7)

    @property
    def mu_plus(self) -> float:
        return float(self.mu[PLUS])

    @property
    def mu_minus(self) -> float:
        return float(self.mu[MINUS])

    @property
    def interface_elements(self) -> np.ndarray:
        return np.array(sorted(self.bases), dtype=np.int64)

    @property
    def interface_edges(self) -> np.ndarray:
        if self.cuts is None:
            return np.zeros(0, dtype=np.int64)
        return self.cuts.interface_edges

    @property
    def dof_points(self) -> np.ndarray:
        """A representative location of every global unknown (edge midpoints, centroids)."""
        mid = self.mesh.edge_midpoints
        cen = self.mesh.tri_coords.mean(axis=1)
        box = np.asarray(self.mesh.domain, float).mean(axis=1)
        return np.vstack((mid, mid, cen, box[None]))

    def element_side(self, t: int, x) -> np.ndarray:
        """Side index of points ``x`` inside element ``t``."""
        x = np.atleast_2d(x)
        s = self.side_of_element[t]
        if s >= 0:
            return np.full(len(x), s)
        return self.bases[t].cut.side_of(x)

    def field_arrays(self, coeffs):
        """Per element and side: velocity const (nt, 2, 2), grad (nt, 2, 2, 2), pressure (nt, 2)."""
        c = np.asarray(coeffs, float)[self.dofmap.element_dofs]  # (nt, 7)
        const = np.einsum("ti,tsia->tsa", c, self.const)
        grad = np.einsum("ti,tsiab->tsab", c, self.grad)
        pres = np.einsum("ti,tsi->ts", c, self.pres)
        return const, grad, pres


def build_space(mesh: Mesh, cuts: CutMesh | None, mu_plus: float, mu_minus: float, bases: dict | None = None) -> IFESpace:
    """Assemble the shape data of all elements.

    ``bases`` defaults to the explicit IFE basis of every cut element.  When
    ``cuts`` is None every element is a plain CR-P0 element on the plus side.
    """
    if not (mu_plus > 0.0 and mu_minus > 0.0):
        raise InvalidParams("viscosities must be positive")
    nt = mesh.n_triangles
    p = mesh.tri_coords
    areas = mesh.areas

    # CR functions lambda_k = 1 - 2 b_k, vectorized
    lam_grad = np.empty((nt, 3, 2))
    lam_const = np.empty((nt, 3))
    for k in range(3):
        a = p[:, (k + 1) % 3]
        d = p[:, (k + 2) % 3] - a
        gb = np.column_stack((-d[:, 1], d[:, 0])) / (2.0 * areas[:, None])
        lam_grad[:, k] = -2.0 * gb
        lam_const[:, k] = 1.0 + 2.0 * np.einsum("ij,ij->i", gb, a)

    const = np.zeros((nt, 7, 2))
    grad = np.zeros((nt, 7, 2, 2))
    pres = np.zeros((nt, 7))
    const[:, 0:3, 0] = lam_const
    const[:, 3:6, 1] = lam_const
    grad[:, 0:3, 0, :] = lam_grad
    grad[:, 3:6, 1, :] = lam_grad
    pres[:, 6] = 1.0
    const = np.repeat(const[:, None], 2, axis=1)
    grad = np.repeat(grad[:, None], 2, axis=1)
    pres = np.repeat(pres[:, None], 2, axis=1)

    if cuts is None:
        side = np.full(nt, PLUS, dtype=np.int64)
        cut_dict = {}
    else:
        if cuts.mesh is not mesh:
            raise MissingCutData("cut data belongs to a different mesh")
        side = np.where(cuts.labels > 0, PLUS, MINUS).astype(np.int64)
        cut_dict = cuts.cuts
    if bases is None:
        bases = {t: build_ife_basis(c, mu_plus, mu_minus) for t, c in cut_dict.items()}
    missing = set(cut_dict) - set(bases)
    if missing:
        raise MissingCutData(f"no IFE basis for interface elements {sorted(missing)[:5]}")

    side_area = np.zeros((nt, 2))
    side_area[np.arange(nt), side] = areas
    for t, b in bases.items():
        if not isinstance(b, IFELocalBasis):
            raise MissingCutData(f"element {t}: expected an IFELocalBasis")
        side[t] = -1
        for s in (PLUS, MINUS):
            arr = b.side_arrays(s)
            const[t, s] = arr.const
            grad[t, s] = arr.grad
            pres[t, s] = arr.pres
        side_area[t] = (b.cut.area_plus, b.cut.area_minus)

    for arr in (const, grad, pres, side_area, side):
        arr.setflags(write=False)
    return IFESpace(
        mesh=mesh,
        cuts=cuts,
        bases=dict(bases),
        mu=np.array([mu_plus, mu_minus], dtype=float),
        dofmap=DofMap.for_mesh(mesh),
        side_of_element=side,
        side_area=side_area,
        const=const,
        grad=grad,
        pres=pres,
    )


assert N_LOCAL == 7
