"""
Triangular meshes with an explicit edge table.

Velocity unknowns of the CR-P0 pair live on edges, so besides the usual
vertex/triangle arrays the mesh carries a global edge enumeration with
incident triangles, an oriented unit normal per edge and boundary flags.

Conventions
-----------
* triangles are counterclockwise;
* local edge ``k`` of a triangle is the edge opposite local vertex ``k``;
* an interior edge normal points from the lower-indexed incident triangle
  towards the higher-indexed one, a boundary edge normal points out of the
  domain.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, TextIO

import numpy as np

from .exceptions import DegenerateTriangle


class TriangleFrame(NamedTuple):
    vertices: np.ndarray  # (3, 2), A1, A2, A3
    edge_lengths: np.ndarray  # (3,), edge k opposite vertex k
    area: float
    diameter: float


def signed_area(vertices) -> float:
    """Signed area of a triangle given as a (3, 2) array."""
    v = np.asarray(vertices, dtype=float)
    d1 = v[1] - v[0]
    d2 = v[2] - v[0]
    return 0.5 * float(d1[0] * d2[1] - d1[1] * d2[0])


def check_triangle(vertices, rtol: float = 1e-12) -> float:
    """Return the area of a counterclockwise triangle or raise DegenerateTriangle."""
    v = np.asarray(vertices, dtype=float)
    if v.shape != (3, 2):
        raise DegenerateTriangle(f"expected (3, 2) vertex array, got {v.shape}")
    area = signed_area(v)
    h = max(np.linalg.norm(v[1] - v[0]), np.linalg.norm(v[2] - v[1]), np.linalg.norm(v[0] - v[2]))
    if not np.isfinite(area) or h == 0.0 or area <= rtol * h * h:
        raise DegenerateTriangle(f"degenerate or clockwise triangle, area={area:g}")
    return area


def local_edge_vertices(k: int) -> tuple[int, int]:
    """Local vertex indices of edge ``k`` (the edge opposite vertex ``k``)."""
    return (k + 1) % 3, (k + 2) % 3


@dataclass(frozen=True, eq=False)
class Mesh:
    """A conforming triangulation of a rectangle.

    Attributes
    ----------
    domain : ((x_lo, x_hi), (y_lo, y_hi))
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    edges : (ne, 2) int array, vertex indices with ``edges[:, 0] < edges[:, 1]``
    edge_tris : (ne, 2) int array, incident triangles (lower index first),
        ``-1`` in the second slot for boundary edges
    edge_normals : (ne, 2) oriented unit normals
    edge_boundary : (ne,) bool
    tri_edges : (nt, 3) int array, local edge k opposite local vertex k
    """

    domain: tuple
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_tris: np.ndarray
    edge_normals: np.ndarray
    edge_boundary: np.ndarray
    tri_edges: np.ndarray

    @classmethod
    def from_triangles(cls, vertices, triangles, domain=None) -> "Mesh":
        """Build the edge table for an arbitrary conforming triangulation."""
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
            raise ValueError("triangles must be a non-empty (m, 3) array")

        p = vertices[triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise DegenerateTriangle(f"triangle {bad} is degenerate or clockwise")

        nt = len(triangles)
        # local edge k = (v[k+1], v[k+2])
        loc = np.array([[1, 2], [2, 0], [0, 1]])
        pairs = np.sort(triangles[:, loc], axis=2).reshape(-1, 2)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        tri_edges = inverse.reshape(nt, 3)

        ne = len(edges)
        owner = np.repeat(np.arange(nt), 3)
        order = np.lexsort((owner, inverse))
        counts = np.bincount(inverse, minlength=ne)
        if np.any(counts > 2):
            raise ValueError("non-manifold triangulation: edge shared by more than two triangles")
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        edge_tris[:, 0] = owner[order][starts]
        two = counts == 2
        edge_tris[two, 1] = owner[order][starts[two] + 1]
        boundary = ~two

        a = vertices[edges[:, 0]]
        b = vertices[edges[:, 1]]
        tangent = b - a
        length = np.hypot(tangent[:, 0], tangent[:, 1])
        normals = np.column_stack((tangent[:, 1], -tangent[:, 0])) / length[:, None]
        centroids = p.mean(axis=1)
        mid = 0.5 * (a + b)
        c1 = centroids[edge_tris[:, 0]]
        # interior: towards T2; boundary: away from the only incident triangle
        direction = np.where(boundary[:, None], mid - c1, centroids[np.maximum(edge_tris[:, 1], 0)] - c1)
        flip = np.einsum("ij,ij->i", normals, direction) < 0.0
        normals[flip] *= -1.0

        if domain is None:
            lo = vertices.min(axis=0)
            hi = vertices.max(axis=0)
            domain = ((float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])))

        for arr in (vertices, triangles, edges, edge_tris, normals, boundary, tri_edges):
            arr.setflags(write=False)
        return cls(domain, vertices, triangles, edges, edge_tris, normals, boundary, tri_edges)

    # sizes -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    # vectorized geometry -------------------------------------------------
    @property
    def tri_coords(self) -> np.ndarray:
        """(nt, 3, 2) vertex coordinates per triangle."""
        return self.vertices[self.triangles]

    @property
    def areas(self) -> np.ndarray:
        p = self.tri_coords
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @property
    def diameters(self) -> np.ndarray:
        return self.edge_lengths[self.tri_edges].max(axis=1)

    @property
    def h(self) -> float:
        """Mesh size, the largest triangle diameter."""
        return float(self.diameters.max())

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_boundary)

    # debugging output ----------------------------------------------------
    def dump(self, fh: TextIO, extra_sections: dict | None = None) -> None:
        """Write the plain-text debug format (vertices, triangles, edges)."""
        fh.write(f"# vertices {self.n_vertices}\n")
        for i, (x, y) in enumerate(self.vertices):
            fh.write(f"{i} {x:.17g} {y:.17g}\n")
        fh.write(f"# triangles {self.n_triangles}\n")
        for i, (a, b, c) in enumerate(self.triangles):
            fh.write(f"{i} {a} {b} {c}\n")
        fh.write(f"# edges {self.n_edges}\n")
        for i in range(self.n_edges):
            v0, v1 = self.edges[i]
            t1, t2 = self.edge_tris[i]
            fh.write(f"{i} {v0} {v1} {t1} {t2} {int(self.edge_boundary[i])}\n")
        for name, lines in (extra_sections or {}).items():
            lines = list(lines)
            fh.write(f"# {name} {len(lines)}\n")
            for line in lines:
                fh.write(f"{line}\n")


def build_uniform_mesh(n: int, domain=((-1.0, 1.0), (-1.0, 1.0))) -> Mesh:
    """Uniform n x n rectangle grid, each cell split along its lower-left to upper-right diagonal."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    (x0, x1), (y0, y1) = domain
    if not (np.isfinite([x0, x1, y0, y1]).all() and x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate domain {domain!r}")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack((X.ravel(), Y.ravel()))

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i = i.ravel()
    j = j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack((v00, v10, v11))
    upper = np.column_stack((v00, v11, v01))
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh.from_triangles(vertices, triangles, domain=((float(x0), float(x1)), (float(y0), float(y1))))


def _check_index(i, size, what):
    if not (0 <= int(i) < size) or int(i) != i:
        raise IndexError(f"{what} index {i} out of range [0, {size})")
    return int(i)


def edge_geometry(mesh: Mesh, edge: int):
    """Return (midpoint, length, oriented unit normal) of a mesh edge."""
    e = _check_index(edge, mesh.n_edges, "edge")
    a = mesh.vertices[mesh.edges[e, 0]]
    b = mesh.vertices[mesh.edges[e, 1]]
    return 0.5 * (a + b), float(np.hypot(*(b - a))), mesh.edge_normals[e].copy()


def triangle_local_frame(mesh: Mesh, tri: int) -> TriangleFrame:
    t = _check_index(tri, mesh.n_triangles, "triangle")
    return frame_of(mesh.vertices[mesh.triangles[t]])


def frame_of(vertices) -> TriangleFrame:
    """Local frame of a free-standing triangle."""
    v = np.array(vertices, dtype=float)
    area = check_triangle(v)
    lengths = np.array([np.linalg.norm(v[b] - v[a]) for a, b in map(local_edge_vertices, range(3))])
    return TriangleFrame(v, lengths, area, float(lengths.max()))
