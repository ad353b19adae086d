from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kiteot import domains
from kiteot.geometry import (ConvexPolygon, GeometryError, HalfPlane, apply_map, clip_halfplane, contains,
                             contains_many, polygon_area, polygon_centroid, sample_uniform)

UNIT = ConvexPolygon.hull([(F(0), F(0)), (F(1), F(0)), (F(1), F(1)), (F(0), F(1))])
rationals = st.fractions(min_value=-1, max_value=1, max_denominator=60)


def test_unit_square_area():
    assert polygon_area(UNIT) == 1


def test_kite_area_exact():
    assert polygon_area(domains.OMEGA_UNSHIFTED) == F(1, 3)
    assert polygon_area(domains.OMEGA) == F(1, 3)


def test_unscaled_target_area_is_sixteen_kites():
    total = sum(polygon_area(q) for q in domains.THETA_UNSHIFTED)
    assert total == F(16, 3)
    assert total == 16 * polygon_area(domains.OMEGA_UNSHIFTED)


def test_shifted_target_matches_source_area():
    assert sum(polygon_area(q) for q in domains.THETA) == F(1, 3)


def test_clip_unit_square():
    half = clip_halfplane(UNIT, HalfPlane((F(1), F(0)), F(1, 2)))
    assert polygon_area(half) == F(1, 2)
    assert set(half.vertices) == {(0, 0), (F(1, 2), 0), (F(1, 2), 1), (0, 1)}
    assert clip_halfplane(UNIT, HalfPlane((F(1), F(0)), F(-1))) is None


def test_clip_kite_below_diagonal():
    lower = clip_halfplane(domains.OMEGA, HalfPlane((F(-1), F(1)), F(0)))
    assert polygon_area(lower) == F(1, 6)


def test_contains_examples():
    assert contains(domains.OMEGA, polygon_centroid(domains.OMEGA))
    assert not contains(domains.OMEGA, (F(10), F(10)))
    assert contains(domains.OMEGA, (F(-1, 2), F(-1, 2)))


def test_apply_map_examples():
    assert apply_map(domains.R, (0.1, 0.3)) == pytest.approx((0.3, 0.1))
    t = F(1, 5)
    assert apply_map(domains.A, (t, t)) == (-t, -t)
    p = (F(-3, 10), F(-1, 10))
    assert apply_map(domains.A, apply_map(domains.A, p)) == p


def test_polygon_validation():
    with pytest.raises(GeometryError):
        ConvexPolygon(((0, 0), (1, 0), (2, 0)))
    with pytest.raises(GeometryError):
        ConvexPolygon(((0, 0), (1, 0), (0, 1), (1, 1)))
    # clockwise input is reoriented
    cw = ConvexPolygon(((F(0), F(0)), (F(0), F(1)), (F(1), F(0))))
    assert polygon_area(cw) == F(1, 2)


@settings(max_examples=60, deadline=None)
@given(rationals, rationals, rationals)
def test_clip_area_additivity_exact(a, b, c):
    if a == 0 and b == 0:
        return
    h = HalfPlane((a, b), c)
    parts = [clip_halfplane(domains.OMEGA, h), clip_halfplane(domains.OMEGA, h.flipped())]
    assert sum(polygon_area(p) for p in parts if p is not None) == F(1, 3)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-0.5, 0.5))
def test_clip_area_additivity_float(a, b, c):
    if abs(a) + abs(b) < 1e-3:
        return
    poly = domains.OMEGA.to_float()
    h = HalfPlane((a, b), c)
    parts = [clip_halfplane(poly, h), clip_halfplane(poly, h.flipped())]
    assert sum(float(polygon_area(p)) for p in parts if p is not None) == pytest.approx(1 / 3, abs=1e-12)


def _exact_samples(n, seed=0):
    rng = np.random.default_rng(seed)
    verts = domains.OMEGA.vertices
    out = []
    for _ in range(n):
        w = rng.integers(0, 40, size=len(verts))
        if w.sum() == 0:
            w[0] = 1
        lam = [F(int(x), int(w.sum())) for x in w]
        out.append((sum(l * v[0] for l, v in zip(lam, verts)), sum(l * v[1] for l, v in zip(lam, verts))))
    return out


def test_symmetries_preserve_kite_exactly():
    for p in _exact_samples(1000):
        for m in (domains.R, domains.A):
            q = apply_map(m, p)
            assert contains(domains.OMEGA, q)
            assert apply_map(m, q) == p


def test_quadrant_pieces_are_exchanged():
    rng = np.random.default_rng(1)
    pts = sample_uniform(domains.OMEGA.to_float(), 4000, rng)
    lab = domains.omega_quadrant(pts)
    a_img = domains.omega_quadrant(domains.A.apply_many(pts))
    r_img = domains.omega_quadrant(pts[:, ::-1])
    flip2 = {"++": "+-", "+-": "++", "-+": "--", "--": "-+"}
    flip1 = {"++": "-+", "-+": "++", "+-": "--", "--": "+-"}
    ok = lab != ""
    assert all(a_img[ok] == [flip2[s] for s in lab[ok]])
    assert all(r_img[ok] == [flip1[s] for s in lab[ok]])


def test_quadrant_pieces_partition_kite():
    assert sum(polygon_area(p) for p in domains.OMEGA_PIECES.values()) == F(1, 3)
    assert sum(polygon_area(p) for p in domains.THETA_PIECES.values()) == F(1, 3)


def test_branches_agree_on_the_diagonal():
    for t in [F(-1, 2), F(-1, 7), F(0), F(1, 3), F(1, 2)]:
        up, lo = domains.A.branches
        assert up((t, t)) == lo((t, t))


def test_contains_many_matches_exact():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-0.7, 0.7, size=(500, 2))
    fast = contains_many(domains.OMEGA, pts, tol=0.0)
    slow = [contains(domains.OMEGA, (F(x), F(y))) for x, y in pts]
    assert list(fast) == slow


def test_domain_constants_round_trip():
    import json
    d = json.loads(domains.domain_constants_json())
    omega = [tuple(domains.parse_rational(c) for c in v) for v in d["shifted"]["omega"]]
    assert tuple(omega) == domains.OMEGA.vertices
    assert d["unshifted"]["singular_image"] == ["2/1", "2/1"]
    A = d["maps"]["A"]
    assert A[0]["matrix"] == [["2/1", "-3/1"], ["1/1", "-2/1"]]
