"""Planar domains of the kite transport problem and their symmetry maps.

Two coordinate systems are used:

* *unshifted*: the kite ``Omega`` with the singular point at (1/2, 1/2) and the
  full-size target (sixteen times the kite's area);
* *shifted* (the default everywhere else in the package): both regions moved by
  (-1/2, -1/2) and the target scaled by 1/4 so that the singular point sits at
  the origin and both regions have area 1/3.

All constants are exact :class:`~fractions.Fraction` values.
"""

from __future__ import annotations

import json
from fractions import Fraction as F

import numpy as np

from .geometry import Branch, ConvexPolygon, HalfPlane, PiecewiseLinearMap, contains, contains_many

HALF = F(1, 2)
SHIFT = (-HALF, -HALF)
TARGET_SCALE = F(1, 4)


def _pt(x, y):
    return (F(x), F(y))


# -- unshifted ---------------------------------------------------------------
OMEGA_UNSHIFTED = ConvexPolygon((_pt(0, 0), _pt(F(1, 3), 0), _pt(1, 1), _pt(0, F(1, 3))))
THETA_UNSHIFTED = (
    ConvexPolygon.hull([_pt(F(4, 3), F(4, 3)), _pt(4, 0), _pt(F(16, 3), 0), _pt(2, 2)]),
    ConvexPolygon.hull([_pt(F(4, 3), F(4, 3)), _pt(0, 4), _pt(0, F(16, 3)), _pt(2, 2)]),
)
SINGULAR_POINT_UNSHIFTED = _pt(HALF, HALF)
SINGULAR_IMAGE_UNSHIFTED = _pt(2, 2)

# -- shifted -----------------------------------------------------------------
ORIGIN = _pt(0, 0)
OMEGA = ConvexPolygon((_pt(-HALF, -HALF), _pt(F(-1, 6), -HALF), _pt(HALF, HALF), _pt(-HALF, F(-1, 6))))

# Theta^- (below the diagonal) first, then Theta^+
THETA = (
    ConvexPolygon.hull([_pt(F(-1, 6), F(-1, 6)), _pt(HALF, -HALF), _pt(F(5, 6), -HALF), ORIGIN]),
    ConvexPolygon.hull([_pt(F(-1, 6), F(-1, 6)), _pt(-HALF, HALF), _pt(-HALF, F(5, 6)), ORIGIN]),
)

# quadrant pieces, keyed by sign pair as written in the literature: (first, second)
OMEGA_PIECES = {
    "++": ConvexPolygon.hull([ORIGIN, _pt(HALF, HALF), _pt(-HALF, F(-1, 6))]),
    "+-": ConvexPolygon.hull([ORIGIN, _pt(-HALF, F(-1, 6)), _pt(-HALF, -HALF)]),
    "-+": ConvexPolygon.hull([ORIGIN, _pt(F(-1, 6), -HALF), _pt(HALF, HALF)]),
    "--": ConvexPolygon.hull([ORIGIN, _pt(-HALF, -HALF), _pt(F(-1, 6), -HALF)]),
}
THETA_PIECES = {
    "++": ConvexPolygon.hull([ORIGIN, _pt(-HALF, HALF), _pt(-HALF, F(5, 6))]),
    "+-": ConvexPolygon.hull([ORIGIN, _pt(F(-1, 6), F(-1, 6)), _pt(-HALF, HALF)]),
    "-+": ConvexPolygon.hull([ORIGIN, _pt(HALF, -HALF), _pt(F(5, 6), -HALF)]),
    "--": ConvexPolygon.hull([ORIGIN, _pt(F(-1, 6), F(-1, 6)), _pt(HALF, -HALF)]),
}
QUADRANTS = ("++", "+-", "-+", "--")

# y >= x  <=>  x - y <= 0
_UPPER = (HalfPlane((F(1), F(-1)), F(0)),)
_LOWER = (HalfPlane((F(-1), F(1)), F(0)),)
_PLANE = ()

R = PiecewiseLinearMap((Branch(_PLANE, ((F(0), F(1)), (F(1), F(0)))),), "R")
A = PiecewiseLinearMap(
    (
        Branch(_UPPER, ((F(2), F(-3)), (F(1), F(-2)))),
        Branch(_LOWER, ((F(-2), F(1)), (F(-3), F(2)))),
    ),
    "A",
)
A_T = A.transpose("A^T")
# image-plane reflections for the (u, v) isothermal coordinates
G = PiecewiseLinearMap((Branch(_PLANE, ((F(-1), F(0)), (F(0), F(1)))),), "G")
H = PiecewiseLinearMap((Branch(_PLANE, ((F(1), F(0)), (F(0), F(-1)))),), "H")


def to_unshifted_source(p):
    return (p[0] - SHIFT[0], p[1] - SHIFT[1])


def to_unshifted_target(p):
    """Shifted, quarter-scale target point -> full-size unshifted target point."""
    return ((p[0] - SHIFT[0]) / TARGET_SCALE, (p[1] - SHIFT[1]) / TARGET_SCALE)


def from_unshifted_source(p):
    return (p[0] + SHIFT[0], p[1] + SHIFT[1])


def omega_area():
    return F(1, 3)


def in_theta(p) -> bool:
    return any(contains(q, p) for q in THETA)


def in_theta_many(pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    return contains_many(THETA[0], pts, tol) | contains_many(THETA[1], pts, tol)


def omega_quadrant(pts: np.ndarray) -> np.ndarray:
    """Label each source point with its quadrant piece ('' on a dividing line)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    out = np.full(len(pts), "", dtype=object)
    up = y > x
    lo = y < x
    out[up & (3 * y > x)] = "++"
    out[up & (3 * y < x)] = "+-"
    out[lo & (3 * x > y)] = "-+"
    out[lo & (3 * x < y)] = "--"
    return out


def theta_quadrant(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    out = np.full(len(pts), "", dtype=object)
    up = y > x
    lo = y < x
    out[up & (y > -x)] = "++"
    out[up & (y < -x)] = "+-"
    out[lo & (y > -x)] = "-+"
    out[lo & (y < -x)] = "--"
    return out


def distance_to_slit(pts: np.ndarray) -> np.ndarray:
    """Euclidean distance to the ray {y = x >= 0}."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    t = np.maximum((pts[:, 0] + pts[:, 1]) / 2, 0.0)
    return np.hypot(pts[:, 0] - t, pts[:, 1] - t)


# -------------------------------------------------------------------- export


def _q(x) -> str:
    x = F(x)
    return f"{x.numerator}/{x.denominator}"


def _poly_json(p: ConvexPolygon):
    return [[_q(x), _q(y)] for x, y in p.vertices]


def _map_json(m: PiecewiseLinearMap):
    out = []
    for br in m.branches:
        out.append(
            {
                "region": [{"normal": [_q(c) for c in h.normal], "offset": _q(h.offset)} for h in br.region],
                "matrix": [[_q(c) for c in row] for row in br.matrix],
                "offset": [_q(c) for c in br.offset],
            }
        )
    return out


def domain_constants() -> dict:
    """Machine-readable description of every domain and map (rationals as 'p/q')."""
    return {
        "halfplane_convention": "<normal, p> <= offset",
        "shifted": {
            "omega": _poly_json(OMEGA),
            "theta": [_poly_json(q) for q in THETA],
            "omega_pieces": {k: _poly_json(v) for k, v in OMEGA_PIECES.items()},
            "theta_pieces": {k: _poly_json(v) for k, v in THETA_PIECES.items()},
            "singular_point": [_q(c) for c in ORIGIN],
        },
        "unshifted": {
            "omega": _poly_json(OMEGA_UNSHIFTED),
            "theta": [_poly_json(q) for q in THETA_UNSHIFTED],
            "singular_point": [_q(c) for c in SINGULAR_POINT_UNSHIFTED],
            "singular_image": [_q(c) for c in SINGULAR_IMAGE_UNSHIFTED],
        },
        "shift": [_q(c) for c in SHIFT],
        "target_scale": _q(TARGET_SCALE),
        "maps": {m.name: _map_json(m) for m in (R, A, A_T, G, H)},
    }


def domain_constants_json(indent: int = 2) -> str:
    return json.dumps(domain_constants(), indent=indent, sort_keys=True)


def parse_rational(s: str) -> F:
    return F(s)
