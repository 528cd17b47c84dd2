"""
Self-checks behind ``--mode verify``.

Three suites, none of which needs a PDE solve: cut geometry of the circular
test interface on uniform meshes, invariants of the explicit basis on random
cut triangles, and agreement of the explicit basis with the dense 14 x 14
construction.  The random generators are shared with the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import StokesIFEError
from .geometry import MINUS, PLUS, CircleLevelSet, CutElement, cut_mesh, cut_triangle, polygon_area, polygon_centroid
from .ife import N_LOCAL, basis_dof_matrix, build_ife_basis, eval_basis, jump_residuals, oracle_solve_14x14
from .mesh import build_uniform_mesh, signed_area

MIN_ANGLE = np.deg2rad(15.0)


@dataclass
class CheckResult:
    name: str
    passed: int = 0
    failed: int = 0
    worst: float = 0.0  # largest normalized residual seen (<= 1 means within tolerance)
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.passed > 0

    def record(self, ratio: float, what: str) -> None:
        self.worst = max(self.worst, float(ratio))
        if ratio <= 1.0:
            self.passed += 1
        else:
            self.failed += 1
            if len(self.messages) < 5:
                self.messages.append(what)

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name}: {self.passed} passed, {self.failed} failed, worst {self.worst:.2e}"


# ---------------------------------------------------------------------------
# random cases
# ---------------------------------------------------------------------------


def _min_angle(v) -> float:
    out = np.pi
    for k in range(3):
        a = v[(k + 1) % 3] - v[k]
        b = v[(k + 2) % 3] - v[k]
        c = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
        out = min(out, float(np.arccos(np.clip(c, -1.0, 1.0))))
    return out


def random_triangle(rng: np.random.Generator, min_angle: float = MIN_ANGLE, log_scale=(0.0, 0.0)) -> np.ndarray:
    """A counterclockwise triangle with all angles above ``min_angle``.

    Vertices are drawn in [-1, 1]^2 and the triangle is then scaled by
    ``10 ** u`` with ``u`` uniform in ``log_scale``.
    """
    while True:
        v = rng.uniform(-1.0, 1.0, (3, 2))
        if signed_area(v) < 0.0:
            v = v[[0, 2, 1]]
        if _min_angle(v) >= min_angle:
            return v * 10.0 ** rng.uniform(*log_scale)


def random_cut(rng: np.random.Generator, frac_plus: float | None = None, vertices=None) -> CutElement:
    """A triangle cut by a random chord.

    The chord joins a point on each of the two edges at a random apex vertex.
    ``frac_plus`` fixes the plus-side area fraction; otherwise it is drawn from
    [0.01, 0.99].  About one case in ten puts a chord end on a vertex.
    """
    v = random_triangle(rng) if vertices is None else np.asarray(vertices, float)
    k = int(rng.integers(3))
    apex_sign = 1 if rng.random() < 0.5 else -1
    if frac_plus is None:
        frac_plus = rng.uniform(0.01, 0.99)
    f = frac_plus if apex_sign > 0 else 1.0 - frac_plus
    # apex triangle fraction is s * t with s, t in [f, 1]
    s = 1.0 if rng.random() < 0.1 else float(np.exp(rng.uniform(0.0, 1.0) * np.log(f)))
    t = f / s
    k1, k2 = (k + 1) % 3, (k + 2) % 3
    P = v[k] + s * (v[k1] - v[k])
    Q = v[k] + t * (v[k2] - v[k])
    signs = [-apex_sign] * 3
    signs[k] = apex_sign
    return cut_triangle(v, signs, {k2: P, k1: Q})


def random_viscosities(rng: np.random.Generator, lo: float = 1e-3, hi: float = 1e3):
    """(1, ratio) with the ratio mu_minus / mu_plus log-uniform in [lo, hi].

    The basis depends on the viscosities only through their ratio and an
    overall pressure scale, so mu_plus is fixed to 1.
    """
    return 1.0, float(10.0 ** rng.uniform(np.log10(lo), np.log10(hi)))


def points_in(poly, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform random points in a convex polygon (area-weighted fan triangles)."""
    poly = np.asarray(poly, float)
    tris = [poly[[0, i, i + 1]] for i in range(1, len(poly) - 1)]
    w = np.array([abs(signed_area(t)) for t in tris])
    pick = rng.choice(len(tris), size=n, p=w / w.sum())
    r = rng.random((n, 2))
    flip = r.sum(axis=1) > 1.0
    r[flip] = 1.0 - r[flip]
    out = np.empty((n, 2))
    for i, j in enumerate(pick):
        a, b, c = tris[j]
        out[i] = a + r[i, 0] * (b - a) + r[i, 1] * (c - a)
    return out


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def check_geometry(ns=(8, 16, 32), r0: float = 0.5) -> CheckResult:
    """Area partition, chord endpoints on the circle, frame and orientation of every cut."""
    res = CheckResult("geometry invariants")
    ls = CircleLevelSet(r0)
    for n in ns:
        mesh = build_uniform_mesh(n)
        cm = cut_mesh(mesh, ls)
        uses = {}
        for t, c in cm.cuts.items():
            h = c.diameter
            area_err = abs(polygon_area(c.poly_plus) + polygon_area(c.poly_minus) - c.area) / c.area
            res.record(area_err / 1e-13, f"n={n} tri {t}: area partition {area_err:.2e}")
            on_curve = float(np.abs(ls(np.array([c.D, c.E]))).max())
            res.record(on_curve / (1e-10 * h), f"n={n} tri {t}: |phi| at chord ends {on_curve:.2e}")
            frame = max(abs(c.n_h @ c.t_h), abs(np.linalg.norm(c.n_h) - 1.0), abs(np.linalg.norm(c.t_h) - 1.0))
            res.record(frame / 1e-14, f"n={n} tri {t}: frame error {frame:.2e}")
            sides = ls(np.array([polygon_centroid(c.poly_plus), polygon_centroid(c.poly_minus)]))
            res.record(0.0 if sides[0] > 0.0 and sides[1] < 0.0 else 2.0, f"n={n} tri {t}: sub-polygon sides {sides}")
            g = ls.gradient(0.5 * (c.D + c.E))
            res.record(0.0 if g @ c.n_h > 0.0 else 2.0, f"n={n} tri {t}: n_h against grad phi")
            for x in (c.D, c.E):
                key = tuple(np.round(x, 12))
                uses[key] = uses.get(key, 0) + 1
        # closed polyline: every chord end is shared by exactly two chords
        bad = [k for k, m in uses.items() if m != 2]
        res.record(0.0 if not bad else 2.0, f"n={n}: {len(bad)} chord ends not shared by two cuts")
    return res


def check_basis(cases: int = 1000, seed: int = 0) -> CheckResult:
    """Kronecker property, discrete jump conditions, theta identity and denominator bound."""
    rng = np.random.default_rng(seed)
    res = CheckResult("basis invariants")
    for i in range(cases):
        cut = random_cut(rng)
        mp, mm = random_viscosities(rng)
        b = build_ife_basis(cut, mp, mm)
        h = cut.diameter
        kron = float(np.abs(basis_dof_matrix(b) - np.eye(N_LOCAL)).max())
        res.record(kron / 1e-11, f"case {i}: Kronecker residual {kron:.2e}")
        jr = jump_residuals(b)
        res.record(jr["stress"] / (1e-10 * (mp + mm) / h), f"case {i}: stress jump {jr['stress']:.2e}")
        res.record(jr["value"] / 1e-11, f"case {i}: value jump {jr['value']:.2e}")
        res.record(jr["tangential"] / (1e-11 / h), f"case {i}: tangential jump {jr['tangential']:.2e}")
        res.record(jr["divergence"] / (1e-11 / h), f"case {i}: divergence jump {jr['divergence']:.2e}")
        res.record(abs(b.theta - cut.frac_plus) / 1e-12, f"case {i}: theta - frac {b.theta - cut.frac_plus:.2e}")
        bound = min(1.0, mm / mp) - 1e-12
        res.record(0.0 if b.denom >= bound else 2.0, f"case {i}: denominator {b.denom:.3e} < {bound:.3e}")
    return res


def oracle_mismatch(cut: CutElement, mu_plus: float, mu_minus: float, rng: np.random.Generator, n_points: int = 20) -> float:
    """Largest relative difference between explicit and dense-oracle basis pairs."""
    basis = build_ife_basis(cut, mu_plus, mu_minus)
    worst = 0.0
    for i in range(N_LOCAL):
        pair = oracle_solve_14x14(cut, mu_plus, mu_minus, np.eye(N_LOCAL)[i])
        for side in (PLUS, MINUS):
            x = points_in(cut.polygon(side), rng, n_points)
            v, _, q = eval_basis(basis, i, x, side)
            vo = pair.velocity(x, side)
            qo = pair.pressure(side)
            scale = max(np.abs(v).max(), abs(q), 1e-300)
            diff = max(np.abs(v - vo).max(), abs(q - qo))
            worst = max(worst, diff / scale)
    return worst


def check_oracle(cases: int = 200, seed: int = 1) -> CheckResult:
    """Explicit basis against the dense 14 x 14 solve, including near-empty sides."""
    rng = np.random.default_rng(seed)
    res = CheckResult("oracle equivalence")
    extremes = (1e-6, 1.0 - 1e-6)
    for i in range(cases):
        frac = extremes[i % 2] if i < 20 else None
        cut = random_cut(rng, frac)
        mp, mm = random_viscosities(rng)
        try:
            rel = oracle_mismatch(cut, mp, mm, rng)
        except StokesIFEError as exc:
            res.record(np.inf, f"case {i}: {exc}")
            continue
        res.record(rel / 1e-9, f"case {i}: relative mismatch {rel:.2e}")
    return res


def run_all(cases: int = 200, seed: int = 0) -> list:
    """Run every suite; ``cases`` sizes the random suites."""
    return [
        check_geometry(),
        check_basis(max(cases, 1), seed),
        check_oracle(max(cases, 1), seed + 1),
    ]


__all__ = [
    "CheckResult",
    "check_basis",
    "check_geometry",
    "check_oracle",
    "oracle_mismatch",
    "points_in",
    "random_cut",
    "random_triangle",
    "random_viscosities",
    "run_all",
]
