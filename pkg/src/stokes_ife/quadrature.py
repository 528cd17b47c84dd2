"""
Quadrature on triangles, segments, cut sub-polygons and cut edges.

Triangle rules are collapsed (Duffy) Gauss-Legendre products, exact for any
requested total degree.  Cut regions are integrated relative to the straight
chord, never the curved interface.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import DegenerateTriangle, NoRoot
from .geometry import MINUS, PLUS, CutElement, CutMesh
from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class QuadRule:
    points: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,)
    degree: int

    def integrate(self, f):
        """Sum of ``weights * f(points)`` over the leading axis."""
        vals = np.asarray(f(self.points))
        return np.tensordot(self.weights, vals, axes=(0, 0))

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def __add__(self, other: "QuadRule") -> "QuadRule":
        return QuadRule(
            np.concatenate((self.points, other.points)),
            np.concatenate((self.weights, other.weights)),
            min(self.degree, other.degree),
        )


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def reference_triangle_rule(degree: int):
    """Barycentric points (n, 3) and weights summing to 1 on the reference triangle."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    # (s, t) in the unit square -> (x, y) = (t (1 - s), s); the Jacobian (1 - s)
    # raises the degree in s by one
    s, ws = gauss_legendre((degree + 1) // 2 + 1)
    t, wt = gauss_legendre(degree // 2 + 1)
    S, T = np.meshgrid(s, t, indexing="ij")
    x = T * (1.0 - S)
    y = S
    w = 2.0 * np.outer(ws, wt) * (1.0 - S)
    bary = np.column_stack((1.0 - x.ravel() - y.ravel(), x.ravel(), y.ravel()))
    weights = w.ravel()
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights


def triangle_rule(vertices, degree: int = 4) -> QuadRule:
    """Rule exact for polynomials of total degree <= ``degree`` on a triangle."""
    v = np.asarray(vertices, float)
    area = abs(_signed_area(v))
    if v.shape != (3, 2) or area <= 1e-14 * max(np.ptp(v, axis=0).max(), 1e-300) ** 2:
        raise DegenerateTriangle("degenerate triangle in quadrature")
    bary, w = reference_triangle_rule(int(degree))
    return QuadRule(bary @ v, w * area, int(degree))


def _signed_area(v):
    d1 = v[1] - v[0]
    d2 = v[2] - v[0]
    return 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])


def segment_rule(p0, p1, degree: int = 4) -> QuadRule:
    """Gauss rule on a segment, exact to ``degree``."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    length = float(np.linalg.norm(p1 - p0))
    if length == 0.0:
        raise ValueError("zero-length segment")
    t, w = gauss_legendre(int(degree) // 2 + 1)
    return QuadRule(p0 + t[:, None] * (p1 - p0), w * length, int(degree))


def polygon_rule(poly, degree: int = 4) -> QuadRule:
    """Fan-triangulate a convex counterclockwise polygon from its first vertex."""
    poly = np.asarray(poly, float)
    rules = [triangle_rule(poly[[0, i, i + 1]], degree) for i in range(1, len(poly) - 1)]
    out = rules[0]
    for r in rules[1:]:
        out = out + r
    return out


def cut_element_rule(cut: CutElement, side: int, degree: int = 4) -> QuadRule:
    """Rule on the plus (``side=PLUS``) or minus sub-polygon of a cut element."""
    if side not in (PLUS, MINUS):
        raise ValueError("side must be PLUS or MINUS")
    return polygon_rule(cut.polygon(side), degree)


def cut_edge_rule(mesh: Mesh, cuts: CutMesh, edge: int, degree: int = 4):
    """Split an interface edge at its crossing point; returns (rule_plus, rule_minus)."""
    e = int(edge)
    if e not in cuts.crossings or e not in set(cuts.interface_edges.tolist()):
        raise NoRoot(f"edge {e} is not an interface edge")
    v0, v1 = mesh.edges[e]
    a, b = mesh.vertices[v0], mesh.vertices[v1]
    x = cuts.crossings[e]
    ra = segment_rule(a, x, degree)
    rb = segment_rule(x, b, degree)
    if cuts.signs[v0] > 0:
        return ra, rb
    return rb, ra


def element_edge_rules(cut: CutElement, k: int, degree: int = 4):
    """Pieces of local edge ``k`` of a cut element as a list of ``(side, QuadRule)``."""
    return [(side, segment_rule(p, q, degree)) for p, q, side in cut.edge_pieces(k)]


__all__ = [
    "QuadRule",
    "cut_edge_rule",
    "cut_element_rule",
    "element_edge_rules",
    "gauss_legendre",
    "polygon_rule",
    "reference_triangle_rule",
    "segment_rule",
    "triangle_rule",
]
