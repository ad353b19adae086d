"""Convex polygon kernel.

Every routine here is written against plain Python scalars so the same code
runs on :class:`fractions.Fraction` (exact mode) and on ``float``.  Exact mode
never uses a tolerance; float mode uses ``TAU_GEOM`` for containment and
``MIN_AREA`` to discard sliver clips.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

TAU_GEOM = 1e-12
MIN_AREA = 1e-18

Point2 = tuple  # (x, y), Fraction or float entries

BOUNDARY = -1  # edge label for edges of the clipping domain


class GeometryError(ValueError):
    pass


def _is_exact(*values) -> bool:
    return all(isinstance(v, (Fraction, int)) for v in values)


def as_fraction_point(p) -> tuple[Fraction, Fraction]:
    return (Fraction(p[0]), Fraction(p[1]))


def cross(o, a, b):
    """z-component of (a - o) x (b - o)."""
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def shoelace(vertices: Sequence[Point2]):
    """Signed area of a closed vertex loop (positive when counterclockwise)."""
    n = len(vertices)
    s = 0
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return s / 2


@dataclass(frozen=True)
class HalfPlane:
    """The closed half-plane ``{p : <normal, p> <= offset}``."""

    normal: tuple
    offset: object

    def __post_init__(self):
        if self.normal[0] == 0 and self.normal[1] == 0:
            raise GeometryError("half-plane normal must be nonzero")

    def value(self, p):
        return self.normal[0] * p[0] + self.normal[1] * p[1] - self.offset

    def contains(self, p, tol=None) -> bool:
        s = self.value(p)
        if tol is None:
            tol = 0 if _is_exact(s) else TAU_GEOM
        return s <= tol

    def flipped(self) -> "HalfPlane":
        """Closure of the complement."""
        return HalfPlane((-self.normal[0], -self.normal[1]), -self.offset)

    @classmethod
    def left_of(cls, a, b) -> "HalfPlane":
        """Points on or to the left of the directed line a -> b."""
        nx, ny = b[1] - a[1], a[0] - b[0]
        return cls((nx, ny), nx * a[0] + ny * a[1])


def _dedup_loop(vertices, labels, exact):
    """Drop a vertex that coincides with its successor; the zero-length edge
    it started disappears and the successor keeps its own label."""
    out_v, out_l = [], []
    n = len(vertices)
    for i in range(n):
        p, q = vertices[i], vertices[(i + 1) % n]
        if exact:
            same = p[0] == q[0] and p[1] == q[1]
        else:
            same = abs(p[0] - q[0]) <= TAU_GEOM and abs(p[1] - q[1]) <= TAU_GEOM
        if same and n > 1:
            continue
        out_v.append(p)
        out_l.append(labels[i])
    return out_v, out_l


def _drop_collinear(vertices, labels, exact):
    changed = True
    while changed and len(vertices) > 3:
        changed = False
        n = len(vertices)
        for i in range(n):
            a, b, c = vertices[i - 1], vertices[i], vertices[(i + 1) % n]
            cr = cross(a, b, c)
            if (cr == 0) if exact else abs(cr) <= TAU_GEOM * TAU_GEOM:
                # b lies on segment a-c; edge a->b keeps its label
                del vertices[i]
                del labels[i]
                changed = True
                break
    return vertices, labels


@dataclass(frozen=True)
class ConvexPolygon:
    """Counterclockwise strictly convex polygon.

    ``labels[i]`` tags the edge from ``vertices[i]`` to ``vertices[i+1]``; clipping
    keeps track of which half-plane produced each edge.
    """

    vertices: tuple
    labels: tuple = field(default=None)

    def __post_init__(self):
        verts = [tuple(v) for v in self.vertices]
        labels = list(self.labels) if self.labels is not None else [BOUNDARY] * len(verts)
        if len(labels) != len(verts):
            raise GeometryError("one label per edge required")
        exact = all(_is_exact(*v) for v in verts)
        if len(verts) >= 3 and shoelace(verts) < 0:
            verts = verts[::-1]
            # reversed loop: edge i now runs between old i+1 and old i
            labels = labels[::-1]
            labels = labels[1:] + labels[:1]
        verts, labels = _dedup_loop(verts, labels, exact)
        verts, labels = _drop_collinear(verts, labels, exact)
        if len(verts) < 3:
            raise GeometryError("a polygon needs at least 3 distinct vertices")
        n = len(verts)
        for i in range(n):
            cr = cross(verts[i - 1], verts[i], verts[(i + 1) % n])
            if (cr <= 0) if exact else cr < -TAU_GEOM:
                raise GeometryError("vertices are not in strictly convex position")
        object.__setattr__(self, "vertices", tuple(verts))
        object.__setattr__(self, "labels", tuple(labels))

    @classmethod
    def hull(cls, points: Iterable[Point2]) -> "ConvexPolygon":
        """Convex hull (monotone chain), exact when the input is rational."""
        pts = sorted(set(tuple(p) for p in points))
        if len(pts) < 3:
            raise GeometryError("hull needs at least 3 points")
        lower, upper = [], []
        for p in pts:
            while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
                lower.pop()
            lower.append(p)
        for p in reversed(pts):
            while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
                upper.pop()
            upper.append(p)
        return cls(tuple(lower[:-1] + upper[:-1]))

    @property
    def exact(self) -> bool:
        return all(_is_exact(*v) for v in self.vertices)

    def __len__(self):
        return len(self.vertices)

    def to_float(self) -> "ConvexPolygon":
        return ConvexPolygon(tuple((float(x), float(y)) for x, y in self.vertices), self.labels)

    def as_array(self) -> np.ndarray:
        return np.array([[float(x), float(y)] for x, y in self.vertices])

    def halfplanes(self) -> list[HalfPlane]:
        """Inward description: the polygon is the intersection of these."""
        n = len(self.vertices)
        out = []
        for i in range(n):
            a, b = self.vertices[i], self.vertices[(i + 1) % n]
            # left of a->b is inside for a ccw polygon: -(left normal) . p <= ...
            nx, ny = b[1] - a[1], a[0] - b[0]
            out.append(HalfPlane((nx, ny), nx * a[0] + ny * a[1]))
        return out

    def map(self, fn) -> "ConvexPolygon":
        return ConvexPolygon(tuple(fn(v) for v in self.vertices))


def polygon_area(poly: ConvexPolygon):
    return shoelace(poly.vertices)


def polygon_centroid(poly: ConvexPolygon):
    v = poly.vertices
    n = len(v)
    a = 0
    cx = cy = 0
    for i in range(n):
        x0, y0 = v[i]
        x1, y1 = v[(i + 1) % n]
        c = x0 * y1 - x1 * y0
        a += c
        cx += (x0 + x1) * c
        cy += (y0 + y1) * c
    a = a / 2
    return (cx / (6 * a), cy / (6 * a))


def polygon_second_moment(poly: ConvexPolygon, about=(0, 0)):
    """Integral of |x - about|^2 over the polygon."""
    ox, oy = about
    v = [(x - ox, y - oy) for x, y in poly.vertices]
    n = len(v)
    ixx = iyy = 0
    for i in range(n):
        x0, y0 = v[i]
        x1, y1 = v[(i + 1) % n]
        c = x0 * y1 - x1 * y0
        ixx += (x0 * x0 + x0 * x1 + x1 * x1) * c
        iyy += (y0 * y0 + y0 * y1 + y1 * y1) * c
    return (ixx + iyy) / 12


def clip_halfplane(poly: ConvexPolygon, h: HalfPlane, label=BOUNDARY):
    """Intersect a convex polygon with a half-plane.

    Returns ``None`` when the intersection has no area (below ``MIN_AREA`` in
    float mode).  New edges lying on the clip line get ``label``.
    """
    verts, labels = clip_loop(poly.vertices, poly.labels, h.normal, h.offset, label)
    if verts is None:
        return None
    return ConvexPolygon(tuple(verts), tuple(labels))


def clip_loop(verts, labels, normal, offset, label):
    """Sutherland-Hodgman step on a raw vertex loop; see :func:`clip_halfplane`."""
    nx, ny = normal
    exact = _is_exact(nx, ny, offset) and _is_exact(*verts[0])
    s = [nx * p[0] + ny * p[1] - offset for p in verts]
    if exact:
        if all(si <= 0 for si in s):
            return list(verts), list(labels)
        if all(si >= 0 for si in s):
            return None, None
    else:
        if max(s) <= 0:
            return list(verts), list(labels)
        if min(s) >= 0:
            return None, None
    out_v, out_l = [], []
    n = len(verts)
    for i in range(n):
        p, q = verts[i], verts[(i + 1) % n]
        sp, sq = s[i], s[(i + 1) % n]
        if sp <= 0:
            out_v.append(p)
            out_l.append(labels[i])
            if sq > 0:
                t = sp / (sp - sq)
                out_v.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
                out_l.append(label)
        elif sq <= 0:
            t = sp / (sp - sq)
            out_v.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
            out_l.append(labels[i])
    out_v, out_l = _dedup_loop(out_v, out_l, exact)
    if len(out_v) < 3:
        return None, None
    area = shoelace(out_v)
    if (area <= 0) if exact else area < MIN_AREA:
        return None, None
    if not exact:
        out_v, out_l = _drop_collinear(out_v, out_l, exact)
    return out_v, out_l


def contains(poly: ConvexPolygon, p, tol=None) -> bool:
    """Boundary-inclusive membership; exact predicate for rational input."""
    v = poly.vertices
    exact = tol is None and _is_exact(*p) and poly.exact
    if tol is None:
        tol = 0 if exact else TAU_GEOM
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        # scale-free enough for unit-size domains
        if cross(a, b, p) < -tol:
            return False
    return True


def contains_many(poly: ConvexPolygon, pts: np.ndarray, tol: float = TAU_GEOM) -> np.ndarray:
    """Vectorised float version of :func:`contains`."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    v = poly.as_array()
    inside = np.ones(len(pts), dtype=bool)
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        cr = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        inside &= cr >= -tol
    return inside


def distance_to_boundary(poly: ConvexPolygon, pts: np.ndarray) -> np.ndarray:
    """Signed distance to the boundary, positive inside."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    v = poly.as_array()
    d = np.full(len(pts), np.inf)
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        e = b - a
        nrm = np.array([-e[1], e[0]]) / np.hypot(*e)
        d = np.minimum(d, (pts - a) @ nrm)
    return d


def sample_uniform(poly: ConvexPolygon, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random points via fan triangulation."""
    v = poly.as_array()
    tris = [(v[0], v[i], v[i + 1]) for i in range(1, len(v) - 1)]
    areas = np.array([abs((b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0]) / 2 for a, b, c in tris])
    idx = rng.choice(len(tris), size=n, p=areas / areas.sum())
    r1, r2 = rng.random(n), rng.random(n)
    flip = r1 + r2 > 1
    r1[flip], r2[flip] = 1 - r1[flip], 1 - r2[flip]
    a = np.array([tris[i][0] for i in idx])
    b = np.array([tris[i][1] for i in idx])
    c = np.array([tris[i][2] for i in idx])
    return a + r1[:, None] * (b - a) + r2[:, None] * (c - a)


def grid_points(poly: ConvexPolygon, n: int) -> np.ndarray:
    """Points of an n x n grid over the bounding box that fall inside."""
    v = poly.as_array()
    lo, hi = v.min(axis=0), v.max(axis=0)
    xs = lo[0] + (np.arange(n) + 0.5) * (hi[0] - lo[0]) / n
    ys = lo[1] + (np.arange(n) + 0.5) * (hi[1] - lo[1]) / n
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return pts[contains_many(poly, pts, tol=0.0)]


# ---------------------------------------------------------------- piecewise maps


@dataclass(frozen=True)
class Branch:
    region: tuple  # of HalfPlane
    matrix: tuple  # ((a, b), (c, d))
    offset: tuple = (0, 0)

    def applies(self, p, tol=None) -> bool:
        return all(h.contains(p, tol) for h in self.region)

    def __call__(self, p):
        (a, b), (c, d) = self.matrix
        return (a * p[0] + b * p[1] + self.offset[0], c * p[0] + d * p[1] + self.offset[1])


@dataclass(frozen=True)
class PiecewiseLinearMap:
    """A finite list of affine branches, each valid on an intersection of half-planes."""

    branches: tuple
    name: str = ""

    def __post_init__(self):
        for br in self.branches:
            (a, b), (c, d) = br.matrix
            if a * d - b * c == 0:
                raise GeometryError("branch matrix is singular")

    def branch_for(self, p) -> Branch:
        for br in self.branches:
            if br.applies(p):
                return br
        raise GeometryError(f"point {p} outside every branch region of map {self.name!r}")

    def __call__(self, p):
        return self.branch_for(p)(p)

    def apply_many(self, pts: np.ndarray) -> np.ndarray:
        """Float evaluation; the first applicable branch wins on shared boundaries."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        out = np.full_like(pts, np.nan)
        todo = np.ones(len(pts), dtype=bool)
        for br in self.branches:
            mask = todo.copy()
            for h in br.region:
                n0, n1 = float(h.normal[0]), float(h.normal[1])
                mask &= n0 * pts[:, 0] + n1 * pts[:, 1] - float(h.offset) <= TAU_GEOM
            M = np.array(br.matrix, dtype=float)
            out[mask] = pts[mask] @ M.T + np.array(br.offset, dtype=float)
            todo &= ~mask
        if todo.any():
            raise GeometryError(f"{todo.sum()} points outside every branch region of map {self.name!r}")
        return out

    def matrix_at(self, p) -> np.ndarray:
        return np.array(self.branch_for(p).matrix, dtype=float)

    def transpose(self, name: str = "") -> "PiecewiseLinearMap":
        """Branchwise transpose (same regions, zero offsets required)."""
        out = []
        for br in self.branches:
            if any(o != 0 for o in br.offset):
                raise GeometryError("transpose only defined for linear branches")
            (a, b), (c, d) = br.matrix
            out.append(Branch(br.region, ((a, c), (b, d))))
        return PiecewiseLinearMap(tuple(out), name or self.name + "^T")


def apply_map(m: PiecewiseLinearMap, p):
    """Evaluate ``m`` at ``p``.  On a shared boundary all applicable branches
    must agree (exactly for rationals, within ``TAU_GEOM`` for floats)."""
    hits = [br for br in m.branches if br.applies(p)]
    if not hits:
        raise GeometryError(f"point {p} outside every branch region of map {m.name!r}")
    first = hits[0](p)
    for br in hits[1:]:
        other = br(p)
        if _is_exact(*first, *other):
            ok = first == other
        else:
            ok = abs(first[0] - other[0]) <= TAU_GEOM and abs(first[1] - other[1]) <= TAU_GEOM
        if not ok:
            raise GeometryError(f"branches of {m.name!r} disagree at {p}")
    return first
