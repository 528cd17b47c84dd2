import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stokes_ife.geometry import MINUS, PLUS, polygon_area
from stokes_ife.mesh import signed_area
from stokes_ife.verify import (
    MIN_ANGLE,
    CheckResult,
    check_basis,
    check_geometry,
    check_oracle,
    oracle_mismatch,
    points_in,
    random_cut,
    random_triangle,
    random_viscosities,
    run_all,
)


def test_check_result_bookkeeping():
    r = CheckResult("demo")
    assert not r.ok  # nothing checked yet
    r.record(0.5, "fine")
    assert r.ok and r.passed == 1 and r.worst == 0.5
    r.record(3.0, "too big")
    assert not r.ok and r.failed == 1 and r.messages == ["too big"]
    assert r.line().startswith("FAIL demo: 1 passed, 1 failed")
    for i in range(10):
        r.record(2.0, f"m{i}")
    assert len(r.messages) == 5


def test_random_generators():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = random_triangle(rng)
        assert signed_area(v) > 0.0
        ang = []
        for k in range(3):
            a, b = v[(k + 1) % 3] - v[k], v[(k + 2) % 3] - v[k]
            ang.append(np.arccos(a @ b / np.linalg.norm(a) / np.linalg.norm(b)))
        assert min(ang) >= MIN_ANGLE - 1e-12
        mp, mm = random_viscosities(rng)
        assert mp == 1.0 and 1e-3 <= mm <= 1e3


@pytest.mark.parametrize("frac", [1e-6, 0.3, 1.0 - 1e-6])
def test_random_cut_area_fraction(frac):
    cut = random_cut(np.random.default_rng(5), frac)
    assert cut.frac_plus == pytest.approx(frac, rel=1e-6)
    assert polygon_area(cut.poly_plus) + polygon_area(cut.poly_minus) == pytest.approx(cut.area, rel=1e-13)


@given(st.integers(0, 2**31 - 1))
def test_property_points_in_polygon(seed):
    rng = np.random.default_rng(seed)
    cut = random_cut(rng)
    for side in (PLUS, MINUS):
        poly = cut.polygon(side)
        x = points_in(poly, rng, 10)
        # inside a convex CCW polygon every edge cross product is non-negative
        for k in range(len(poly)):
            a, b = poly[k], poly[(k + 1) % len(poly)]
            cr = (b - a)[0] * (x[:, 1] - a[1]) - (b - a)[1] * (x[:, 0] - a[0])
            assert np.all(cr >= -1e-12 * np.abs(poly).max() ** 2)


def test_check_geometry_passes():
    r = check_geometry((8, 16))
    assert r.ok, r.messages
    assert r.passed > 0


def test_check_basis_passes():
    r = check_basis(100, seed=4)
    assert r.ok, r.messages
    assert r.passed == 100 * 7


def test_check_oracle_passes_including_extreme_fractions():
    r = check_oracle(25, seed=2)
    assert r.ok, r.messages
    assert r.worst <= 1.0


def test_oracle_mismatch_small():
    rng = np.random.default_rng(9)
    cut = random_cut(rng, 0.4)
    assert oracle_mismatch(cut, 1.0, 250.0, rng) <= 1e-9


def test_run_all_structure():
    res = run_all(10, seed=0)
    assert [r.name for r in res] == ["geometry invariants", "basis invariants", "oracle equivalence"]
    assert all(r.ok for r in res)
