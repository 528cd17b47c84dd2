"""
Level-set interfaces and cut-element geometry.

The interface is the zero set of a level-set function with phi < 0 on the
inner phase and phi > 0 on the outer one.  Vertex signs are *snapped*: a
vertex with ``phi >= -eps`` counts as outside, so grid points lying exactly on
the interface (as happens for a circle of radius 0.5 on even grids) are
assigned to the closed outer phase.  All classification uses snapped signs.

On each interface element the two boundary crossings D, E define a straight
chord that splits the triangle into a plus and a minus polygon; these,
together with the chord normal pointing into the plus part, are what the
immersed basis construction consumes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import AssumptionViolated, DegenerateCut, NoRoot
from .mesh import Mesh, check_triangle, local_edge_vertices

PLUS, MINUS = 0, 1  # side indices used throughout the package
SNAP_RTOL = 1e-12
MIN_FRACTION = 1e-10
ENDPOINT_TOL = 1e-10
BISECTION_ATOL = 1e-14


def rotate_cw(v):
    """Rotate a 2-vector by -90 degrees."""
    return np.array([v[1], -v[0]])


def rotate_ccw(v):
    """Rotate a 2-vector by +90 degrees."""
    return np.array([-v[1], v[0]])


def polygon_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


# ---------------------------------------------------------------------------
# level sets
# ---------------------------------------------------------------------------


class LevelSet:
    """Base class; subclasses provide ``__call__`` and ``gradient`` on (n, 2) arrays."""

    def __call__(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    @property
    def descriptor(self) -> dict:
        return {"type": type(self).__name__}

    def root_parameter(self, p0, p1) -> float:
        """Parameter t in [0, 1] of a zero of phi on p0 + t (p1 - p0), by bisection."""
        p0 = np.asarray(p0, float)
        d = np.asarray(p1, float) - p0
        f0 = float(self(p0[None])[0])
        f1 = float(self((p0 + d)[None])[0])
        if f0 == 0.0:
            return 0.0
        if f1 == 0.0:
            return 1.0
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = float(self((p0 + mid * d)[None])[0])
            if abs(fm) <= BISECTION_ATOL or hi - lo <= 1e-17:
                return mid
            if (fm < 0.0) == (f0 < 0.0):
                lo, f0 = mid, fm
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def dips_inside(self, p0, p1, eps: float, samples: int = 16) -> bool:
        """True if phi changes sign in the interior of a segment whose ends share a sign."""
        t = np.linspace(0.0, 1.0, samples + 2)[1:-1]
        p0 = np.asarray(p0, float)
        x = p0 + t[:, None] * (np.asarray(p1, float) - p0)
        vals = self(x)
        s0 = float(self(p0[None])[0]) >= -eps
        return bool(np.any((vals >= -eps) != s0))


@dataclass(frozen=True)
class CircleLevelSet(LevelSet):
    """phi(x) = |x - c|^2 - r^2 (negative inside)."""

    radius: float
    center: tuple = (0.0, 0.0)

    def __call__(self, x):
        x = np.asarray(x, float)
        d = x - np.asarray(self.center)
        return d[..., 0] ** 2 + d[..., 1] ** 2 - self.radius**2

    def gradient(self, x):
        return 2.0 * (np.asarray(x, float) - np.asarray(self.center))

    @property
    def descriptor(self):
        return {"type": "circle", "center": list(self.center), "radius": self.radius}

    def root_parameter(self, p0, p1):
        p0 = np.asarray(p0, float)
        d = np.asarray(p1, float) - p0
        r = p0 - np.asarray(self.center)
        a = float(d @ d)
        b = 2.0 * float(d @ r)
        c = float(r @ r) - self.radius**2
        disc = max(b * b - 4.0 * a * c, 0.0)
        sq = np.sqrt(disc)
        # numerically stable pair of roots
        q = -0.5 * (b + np.copysign(sq, b))
        roots = [q / a]
        if q != 0.0:
            roots.append(c / q)
        else:
            roots.append(-b / (2.0 * a))
        # the root closest to [0, 1]
        return float(min(roots, key=lambda t: max(-t, t - 1.0, 0.0)))

    def dips_inside(self, p0, p1, eps, samples=16):
        p0 = np.asarray(p0, float)
        d = np.asarray(p1, float) - p0
        f0 = float(self(p0[None])[0])
        if f0 < -eps:
            return False  # phi is convex along lines: negative at both ends stays negative
        r = p0 - np.asarray(self.center)
        t = -float(d @ r) / float(d @ d)
        if t <= 0.0 or t >= 1.0:
            return False
        return float(self((p0 + t * d)[None])[0]) < -eps


@dataclass(frozen=True)
class LinearLevelSet(LevelSet):
    """phi(x) = normal . x + offset; a straight interface."""

    normal: tuple
    offset: float

    @classmethod
    def through(cls, point, normal):
        """Line through ``point`` with phi increasing along ``normal``."""
        n = np.asarray(normal, float)
        return cls(tuple(map(float, n)), float(-n @ np.asarray(point, float)))

    def __call__(self, x):
        x = np.asarray(x, float)
        return x[..., 0] * self.normal[0] + x[..., 1] * self.normal[1] + self.offset

    def gradient(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.asarray(self.normal, float), x.shape).copy()

    @property
    def descriptor(self):
        return {"type": "line", "normal": list(self.normal), "offset": self.offset}

    def root_parameter(self, p0, p1):
        f0 = float(self(np.asarray(p0, float)[None])[0])
        f1 = float(self(np.asarray(p1, float)[None])[0])
        return f0 / (f0 - f1)

    def dips_inside(self, p0, p1, eps, samples=16):
        return False


class FunctionLevelSet(LevelSet):
    """Wrap arbitrary vectorized callables; roots are found by bisection."""

    def __init__(self, phi, grad=None, name="function"):
        self._phi = phi
        self._grad = grad
        self.name = name

    def __call__(self, x):
        return np.asarray(self._phi(np.asarray(x, float)), float)

    def gradient(self, x):
        if self._grad is not None:
            return np.asarray(self._grad(np.asarray(x, float)), float)
        x = np.asarray(x, float)
        h = 1e-6
        ex = np.array([h, 0.0])
        ey = np.array([0.0, h])
        return np.stack([(self(x + ex) - self(x - ex)) / (2 * h), (self(x + ey) - self(x - ey)) / (2 * h)], axis=-1)

    @property
    def descriptor(self):
        return {"type": self.name}


# ---------------------------------------------------------------------------
# signs and intersections
# ---------------------------------------------------------------------------


def snap_signs(ls: LevelSet, mesh_or_points, h: float | None = None) -> np.ndarray:
    """Per-vertex sign in {-1, +1}; values within ``1e-12 * h`` below zero count as +1."""
    if isinstance(mesh_or_points, Mesh):
        points = mesh_or_points.vertices
        if h is None:
            h = mesh_or_points.h
    else:
        points = np.asarray(mesh_or_points, float)
        if h is None:
            ext = points.max(axis=0) - points.min(axis=0)
            h = float(np.hypot(*ext)) if len(points) > 1 else 1.0
    eps = SNAP_RTOL * h
    return np.where(ls(points) >= -eps, 1, -1).astype(np.int8)


def intersect_edge(ls: LevelSet, p0, p1, eps: float | None = None):
    """Point where the interface crosses segment [p0, p1].

    ``eps`` is the snapping band (default ``1e-12 * |p1 - p0|``).  Raises
    NoRoot when the snapped end signs agree.
    """
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    if eps is None:
        eps = SNAP_RTOL * float(np.linalg.norm(p1 - p0))
    f = ls(np.array([p0, p1]))
    if (f[0] >= -eps) == (f[1] >= -eps):
        raise NoRoot(f"no sign change on segment {p0} -> {p1} (phi = {f[0]:g}, {f[1]:g})")
    if f[0] == 0.0:
        return p0.copy()
    if f[1] == 0.0:
        return p1.copy()
    t = float(min(max(ls.root_parameter(p0, p1), 0.0), 1.0))
    return _point_at(p0, p1, t)


def _point_at(p0, p1, t):
    if t <= 0.0:
        return p0.copy()
    if t >= 1.0:
        return p1.copy()
    return p0 + t * (p1 - p0)


# ---------------------------------------------------------------------------
# cut elements
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CutElement:
    """Geometry of one interface element split by its chord DE.

    ``poly_plus`` / ``poly_minus`` are counterclockwise vertex arrays.  D lies
    on the lower-numbered cut local edge.  ``n_h`` points into the plus part,
    ``t_h`` is ``n_h`` rotated by -90 degrees.
    """

    tri: int
    vertices: np.ndarray
    D: np.ndarray
    E: np.ndarray
    cut_edges: tuple
    crossing_vertices: tuple  # local vertex index hit by D / E, or -1
    n_h: np.ndarray
    t_h: np.ndarray
    poly_plus: np.ndarray
    poly_minus: np.ndarray
    area: float
    frac_plus: float
    apex: int
    apex_sign: int
    diameter: float

    @property
    def x_T(self) -> np.ndarray:
        """Point on both the chord and the interface used by the oracle."""
        return self.D

    @property
    def area_plus(self) -> float:
        return self.frac_plus * self.area

    @property
    def area_minus(self) -> float:
        return (1.0 - self.frac_plus) * self.area

    def polygon(self, side: int) -> np.ndarray:
        return self.poly_plus if side == PLUS else self.poly_minus

    def chord_distance(self, x) -> np.ndarray:
        """Signed distance n_h . (x - D) to the chord line (positive on the plus side)."""
        return (np.asarray(x, float) - self.D) @ self.n_h

    def side_of(self, x) -> np.ndarray:
        """PLUS / MINUS side index of points with respect to the chord."""
        return np.where(self.chord_distance(x) > 0.0, PLUS, MINUS)

    def edge_pieces(self, k: int):
        """Split local edge k at its crossing point.

        Returns a list of ``(p0, p1, side)`` pieces of positive length.
        """
        a, b = (self.vertices[i] for i in local_edge_vertices(k))
        if k in self.cut_edges:
            x = self.D if k == self.cut_edges[0] else self.E
            pieces = []
            for p, q in ((a, x), (x, b)):
                if np.linalg.norm(q - p) > ENDPOINT_TOL * self.diameter:
                    pieces.append((p, q, int(self.side_of((0.5 * (p + q))[None])[0])))
            return pieces
        mid = 0.5 * (a + b)
        return [(a, b, int(self.side_of(mid[None])[0]))]


def cut_triangle(vertices, signs, crossings: dict, tri: int = -1) -> CutElement:
    """Assemble a CutElement from vertex signs and per-local-edge crossing points.

    ``crossings`` maps each of the two sign-changing local edges to its
    crossing point.  Raises DegenerateCut if a part has relative area below
    1e-10.
    """
    v = np.asarray(vertices, float)
    area = check_triangle(v)
    s = [int(x) for x in signs]
    if s[0] == s[1] == s[2]:
        raise DegenerateCut("vertex signs agree; not an interface element")
    k = 2 if s[0] == s[1] else (1 if s[0] == s[2] else 0)
    k1, k2 = (k + 1) % 3, (k + 2) % 3
    ea, eb = k2, k1  # ea = A_k A_{k+1}, eb = A_{k+2} A_k
    P = np.asarray(crossings[ea], float)
    Q = np.asarray(crossings[eb], float)
    h = max(np.linalg.norm(v[i] - v[j]) for i, j in ((0, 1), (1, 2), (2, 0)))
    tol = ENDPOINT_TOL * h

    apex_poly = [v[k], P, Q]
    other = [P, v[k1], v[k2], Q]
    other = [p for i, p in enumerate(other) if np.linalg.norm(p - other[i - 1]) > tol]
    apex_area = polygon_area(apex_poly)
    apex_sign = s[k]
    frac_apex = apex_area / area if len(other) >= 3 else 1.0
    if min(frac_apex, 1.0 - frac_apex) < MIN_FRACTION:
        majority = apex_sign if frac_apex > 0.5 else -apex_sign
        raise DegenerateCut(f"area fraction {frac_apex:.3e} below {MIN_FRACTION:g}", majority)

    apex_poly = np.array(apex_poly)
    other = np.array(other)
    if apex_sign > 0:
        plus, minus, frac_plus = apex_poly, other, frac_apex
    else:
        plus, minus, frac_plus = other, apex_poly, 1.0 - frac_apex
    # exact complement keeps |T+| + |T-| = |T| to rounding

    cut_edges = tuple(sorted((ea, eb)))
    pts = {ea: P, eb: Q}
    D, E = pts[cut_edges[0]], pts[cut_edges[1]]
    chord = E - D
    m = rotate_ccw(chord) / np.linalg.norm(chord)
    if apex_sign * float(m @ (v[k] - D)) < 0.0:
        m = -m
    crossing_vertices = tuple(_vertex_hit(v, x, tol) for x in (D, E))
    return CutElement(
        tri=tri,
        vertices=v,
        D=D,
        E=E,
        cut_edges=cut_edges,
        crossing_vertices=crossing_vertices,
        n_h=m,
        t_h=rotate_cw(m),
        poly_plus=plus,
        poly_minus=minus,
        area=area,
        frac_plus=float(frac_plus),
        apex=k,
        apex_sign=apex_sign,
        diameter=h,
    )


def _vertex_hit(v, x, tol):
    for i in range(3):
        if np.linalg.norm(v[i] - x) <= tol:
            return i
    return -1


def cut_triangle_by_levelset(vertices, ls: LevelSet, tri: int = -1) -> CutElement:
    """Cut a free-standing triangle by a level set (signs snapped with its own diameter)."""
    v = np.asarray(vertices, float)
    h = max(np.linalg.norm(v[i] - v[j]) for i, j in ((0, 1), (1, 2), (2, 0)))
    signs = snap_signs(ls, v, h=h)
    eps = SNAP_RTOL * h
    crossings = {}
    for k in range(3):
        i, j = local_edge_vertices(k)
        if signs[i] != signs[j]:
            crossings[k] = _snapped_crossing(ls, v[i], v[j], eps)
    return cut_triangle(v, signs, crossings, tri)


def _snapped_crossing(ls, a, b, eps):
    """Crossing point on [a, b], snapped to an endpoint if within ENDPOINT_TOL."""
    f = ls(np.array([a, b]))
    if (f[0] >= -eps) == (f[1] >= -eps):
        raise NoRoot("no sign change")
    if abs(f[0]) <= eps:
        return a.copy()
    if abs(f[1]) <= eps:
        return b.copy()
    t = float(min(max(ls.root_parameter(a, b), 0.0), 1.0))
    if t <= ENDPOINT_TOL:
        return a.copy()
    if t >= 1.0 - ENDPOINT_TOL:
        return b.copy()
    return a + t * (b - a)


# ---------------------------------------------------------------------------
# whole-mesh classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Classification:
    signs: np.ndarray  # snapped vertex signs
    interface_elements: np.ndarray  # triangles with mixed snapped signs
    interface_edges: np.ndarray  # edges crossed strictly inside
    labels: np.ndarray  # +1 / -1 for non-interface triangles, 0 otherwise
    crossings: dict  # edge -> crossing point, for every sign-changing edge


@dataclass(frozen=True, eq=False)
class CutMesh:
    """A mesh together with its interface data after degenerate cuts are demoted."""

    mesh: Mesh
    levelset: LevelSet
    signs: np.ndarray
    labels: np.ndarray  # +1 / -1, or 0 for interface elements
    cuts: dict  # tri -> CutElement
    interface_edges: np.ndarray
    crossings: dict = field(repr=False)
    demoted: tuple = ()

    @property
    def interface_elements(self) -> np.ndarray:
        return np.array(sorted(self.cuts), dtype=np.int64)

    @property
    def is_interface(self) -> np.ndarray:
        mask = np.zeros(self.mesh.n_triangles, dtype=bool)
        mask[list(self.cuts)] = True
        return mask

    def crossing_point(self, edge: int) -> np.ndarray:
        return self.crossings[int(edge)]

    def dump_lines(self):
        """Lines for the ``cuts`` section of the mesh debug dump."""
        for t in sorted(self.cuts):
            c = self.cuts[t]
            yield f"{t} {c.D[0]:.17g} {c.D[1]:.17g} {c.E[0]:.17g} {c.E[1]:.17g} {c.frac_plus:.17g}"


def classify(mesh: Mesh, ls: LevelSet) -> Classification:
    """Classify elements and edges against the snapped interface.

    Raises AssumptionViolated if the interface meets an edge closure more
    than once (refine the mesh).
    """
    h = mesh.h
    eps = SNAP_RTOL * h
    signs = snap_signs(ls, mesh, h=h)
    tri_signs = signs[mesh.triangles]
    mixed = ~np.all(tri_signs == tri_signs[:, :1], axis=1)
    labels = np.where(mixed, 0, tri_signs[:, 0]).astype(np.int8)

    es = signs[mesh.edges]
    changing = np.flatnonzero(es[:, 0] != es[:, 1])
    crossings = {}
    interface_edges = []
    for e in changing:
        a = mesh.vertices[mesh.edges[e, 0]]
        b = mesh.vertices[mesh.edges[e, 1]]
        x = _snapped_crossing(ls, a, b, eps)
        crossings[int(e)] = x
        if not (np.array_equal(x, a) or np.array_equal(x, b)):
            interface_edges.append(int(e))

    same = np.flatnonzero(es[:, 0] == es[:, 1])
    for e in same:
        a = mesh.vertices[mesh.edges[e, 0]]
        b = mesh.vertices[mesh.edges[e, 1]]
        if ls.dips_inside(a, b, eps):
            raise AssumptionViolated(f"interface crosses edge {e} more than once; refine the mesh")

    return Classification(
        signs=signs,
        interface_elements=np.flatnonzero(mixed),
        interface_edges=np.array(interface_edges, dtype=np.int64),
        labels=labels,
        crossings=crossings,
    )


def build_cut(mesh: Mesh, ls: LevelSet, tri: int, classification: Classification | None = None) -> CutElement:
    """Cut data of one interface element, using mesh-wide crossing points so neighbours agree."""
    if classification is None:
        classification = classify(mesh, ls)
    t = int(tri)
    signs = classification.signs[mesh.triangles[t]]
    crossings = {}
    for k in range(3):
        i, j = local_edge_vertices(k)
        if signs[i] != signs[j]:
            crossings[k] = classification.crossings[int(mesh.tri_edges[t, k])]
    return cut_triangle(mesh.vertices[mesh.triangles[t]], signs, crossings, tri=t)


def cut_mesh(mesh: Mesh, ls: LevelSet) -> CutMesh:
    """Classify, build all cuts, and demote degenerate ones to their majority side."""
    cls_ = classify(mesh, ls)
    labels = cls_.labels.copy()
    cuts = {}
    demoted = []
    for t in cls_.interface_elements:
        try:
            cuts[int(t)] = build_cut(mesh, ls, t, cls_)
        except DegenerateCut as exc:
            demoted.append(int(t))
            labels[t] = exc.majority
    return CutMesh(
        mesh=mesh,
        levelset=ls,
        signs=cls_.signs,
        labels=labels,
        cuts=cuts,
        interface_edges=cls_.interface_edges,
        crossings=cls_.crossings,
        demoted=tuple(demoted),
    )
