"""Semi-discrete optimal transport from the uniform measure on the kite to a
finite set of target sites, by damped Newton on the Laguerre-cell weights.

Conventions
-----------
Cell ``j`` is ``{x in Omega : |x - y_j|^2 - w_j <= |x - y_k|^2 - w_k  for all k}``.
The Brenier potential is ``phi(x) = max_j <x, y_j> - (|y_j|^2 - w_j) / 2`` and the
transport cost reported is ``sum_j int_{cell_j} |x - y_j|^2 / 2``.

The concave Kantorovich functional is

    F(w) = sum_j int_{cell_j} (|x - y_j|^2 - w_j) dx + sum_j w_j mass_j

whose gradient is ``mass - area`` and whose Hessian is minus the graph
Laplacian with edge weights ``len_jk / (2 |y_j - y_k|)``.
:func:`dual_gradient_hessian` reports the mismatch ``area - mass`` together
with that negative semidefinite Hessian.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.stats import qmc

from . import domains
from . import _kernels
from .geometry import MIN_AREA, TAU_GEOM, ConvexPolygon, contains_many

log = logging.getLogger(__name__)

OMEGA_F = domains.OMEGA.to_float()
THETA_F = tuple(q.to_float() for q in domains.THETA)
_BRUTE_FORCE_MAX = 24


class ConvergenceError(RuntimeError):
    def __init__(self, msg, plan=None):
        super().__init__(msg)
        self.plan = plan


class EmptyCellError(RuntimeError):
    pass


# ------------------------------------------------------------------ targets


@dataclass(frozen=True)
class TargetDiscretization:
    sites: np.ndarray
    masses: np.ndarray
    symmetric: bool = False
    seed: int | None = None

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=float).reshape(-1, 2)
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if len(sites) != len(masses):
            raise ValueError("one mass per site required")
        if np.any(masses <= 0):
            raise ValueError("masses must be positive")
        sites.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "masses", masses)

    def __len__(self):
        return len(self.sites)

    @property
    def spacing(self) -> float:
        """Mean site spacing sqrt(area / n)."""
        return math.sqrt(float(self.masses.sum()) / len(self))


def _sample_triangle(tri: np.ndarray, n: int, rng) -> np.ndarray:
    """Scrambled-Sobol points folded into a triangle (stratified, not iid)."""
    m = max(int(np.ceil(np.log2(max(n, 1)))), 0)
    u = qmc.Sobol(d=2, scramble=True, seed=rng).random_base2(m)[:n]
    flip = u.sum(axis=1) > 1
    u[flip] = 1 - u[flip]
    a, b, c = tri
    return a + u[:, :1] * (b - a) + u[:, 1:] * (c - a)


def _sample_polygon(poly: ConvexPolygon, n: int, rng) -> np.ndarray:
    v = poly.as_array()
    tris = [np.array([v[0], v[i], v[i + 1]]) for i in range(1, len(v) - 1)]
    areas = np.array([abs((t[1] - t[0])[0] * (t[2] - t[0])[1] - (t[1] - t[0])[1] * (t[2] - t[0])[0]) / 2 for t in tris])
    counts = np.floor(n * areas / areas.sum()).astype(int)
    counts[: n - counts.sum()] += 1
    return np.vstack([_sample_triangle(t, k, rng) for t, k in zip(tris, counts) if k > 0])


def lloyd(points: np.ndarray, region: ConvexPolygon, iters: int) -> np.ndarray:
    """Lloyd relaxation of ``points`` inside ``region`` (Voronoi cells clipped to it)."""
    pts = np.array(points, dtype=float)
    for _ in range(iters):
        diagram = power_diagram(pts, np.zeros(len(pts)), region)
        ok = diagram.areas > 0
        pts[ok] = diagram.centroids[ok]
    return pts


def orbit(points: np.ndarray) -> np.ndarray:
    """Images of points of Theta^{++} under Id, R, A^T, R A^T (in that block order)."""
    pts = np.asarray(points, dtype=float)
    r = pts[:, ::-1]
    a = domains.A_T.apply_many(pts)
    ra = a[:, ::-1]
    return np.vstack([pts, r, a, ra])


def discretize_target(n_sites: int, seed: int = 0, lloyd_iters: int = 100,
                      symmetrize: bool = True) -> TargetDiscretization:
    """Equal-mass sites covering the quarter-scale shifted target.

    With ``symmetrize`` the sites are generated in Theta^{++} and carried to the
    other three pieces by R and A^T, so ``n_sites`` must be a multiple of 4.
    Otherwise each of the two quads of Theta gets half the sites.
    """
    if n_sites < 4:
        raise ValueError("n_sites must be at least 4")
    rng = np.random.default_rng(seed)
    if symmetrize:
        if n_sites % 4:
            raise ValueError("a symmetrized target needs n_sites divisible by 4")
        piece = domains.THETA_PIECES["++"].to_float()
        base = _sample_polygon(piece, n_sites // 4, rng)
        base = lloyd(base, piece, lloyd_iters)
        sites = orbit(base)
    else:
        halves = [n_sites // 2, n_sites - n_sites // 2]
        sites = np.vstack([lloyd(_sample_polygon(q, k, rng), q, lloyd_iters) for q, k in zip(THETA_F, halves)])
    masses = np.full(n_sites, float(domains.omega_area()) / n_sites)
    return TargetDiscretization(sites, masses, symmetric=symmetrize, seed=seed)


# ----------------------------------------------------------- power diagrams


def _power_neighbors(sites: np.ndarray, weights: np.ndarray):
    """CSR adjacency of the regular triangulation plus a visibility mask.

    Hidden sites (not on the lower hull of the lifted points) have empty power
    cells.  Small or degenerate inputs fall back to all pairs.
    """
    n = len(sites)
    everything = (np.arange(0, n * n + 1, n), np.tile(np.arange(n), n), np.ones(n, dtype=bool))
    if n <= _BRUTE_FORCE_MAX:
        return everything
    lifted = np.column_stack([sites, (sites ** 2).sum(axis=1) - weights])
    try:
        hull = ConvexHull(lifted)
    except QhullError:
        return everything
    lower = hull.simplices[hull.equations[:, 2] < 0]
    visible = np.zeros(n, dtype=bool)
    visible[lower.ravel()] = True
    e = np.vstack([lower[:, [0, 1]], lower[:, [1, 2]], lower[:, [0, 2]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    adj = sp.coo_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n)).tocsr()
    return adj.indptr.astype(np.int64), adj.indices.astype(np.int64), visible


@dataclass
class PowerDiagram:
    """Power cells of weighted sites restricted to a convex domain."""

    sites: np.ndarray
    weights: np.ndarray
    vertices: np.ndarray  # (n, MAXV, 2), padded
    labels: np.ndarray  # (n, MAXV): neighbor index per edge, -1 on the domain boundary
    counts: np.ndarray  # vertices per cell, 0 for empty cells
    areas: np.ndarray
    centroids: np.ndarray
    second_moments: np.ndarray  # int |x|^2 over each cell
    edges: np.ndarray  # (m, 3): j, k, shared length, with j < k

    def cell_vertices(self, j) -> np.ndarray | None:
        c = self.counts[j]
        return None if c == 0 else self.vertices[j, :c]

    def cell_polygon(self, j) -> ConvexPolygon | None:
        c = self.counts[j]
        if c == 0:
            return None
        return ConvexPolygon(tuple(map(tuple, self.vertices[j, :c])), tuple(int(x) for x in self.labels[j, :c]))


def power_diagram(sites, weights, domain: ConvexPolygon = OMEGA_F) -> PowerDiagram:
    """Power cells ``{x : |x - y_j|^2 - w_j minimal}`` intersected with ``domain``."""
    sites = np.ascontiguousarray(sites, dtype=float).reshape(-1, 2)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    indptr, indices, visible = _power_neighbors(sites, weights)
    lift = (sites ** 2).sum(axis=1) - weights
    verts, labels, counts, areas, cents, m2 = _kernels.power_cells(
        sites, lift, indptr, indices, visible, domain.as_array(), MIN_AREA, TAU_GEOM)
    # shared edges, each counted once from the lower-index cell
    n, maxv = labels.shape
    idx = np.arange(maxv)
    nxt = (idx[None, :] + 1) % np.maximum(counts[:, None], 1)
    valid = idx[None, :] < counts[:, None]
    owner = np.broadcast_to(np.arange(n)[:, None], labels.shape)
    mask = valid & (labels > owner)
    p = verts[mask]
    q = verts[np.nonzero(mask)[0], nxt[mask]]
    lengths = np.hypot(*(q - p).T)
    edges = np.column_stack([owner[mask], labels[mask], lengths]).astype(float).reshape(-1, 3)
    return PowerDiagram(sites, weights, verts, labels, counts, areas, cents, m2, edges)


def laguerre_cells(target: TargetDiscretization, weights, domain: ConvexPolygon = OMEGA_F) -> list:
    """Laguerre cells of the target sites intersected with ``domain``.

    Entry ``j`` is a :class:`ConvexPolygon` or ``None`` when the cell is empty.
    """
    d = power_diagram(target.sites, weights, domain)
    return [d.cell_polygon(j) for j in range(len(target))]


def _laplacian(sites, edges, n):
    if len(edges) == 0:
        return sp.csr_matrix((n, n))
    j = edges[:, 0].astype(int)
    k = edges[:, 1].astype(int)
    dist = np.linalg.norm(sites[j] - sites[k], axis=1)
    c = edges[:, 2] / (2 * dist)
    off = sp.coo_matrix((np.concatenate([-c, -c]), (np.concatenate([j, k]), np.concatenate([k, j]))), shape=(n, n))
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def dual_gradient_hessian(target: TargetDiscretization, weights, domain: ConvexPolygon = OMEGA_F):
    """Mass mismatch ``area - mass`` and the Hessian of the dual objective.

    The Hessian is minus the weighted graph Laplacian with edge weights
    ``shared length / (2 |y_j - y_k|)``: negative semidefinite, rows summing
    to zero, kernel spanned by constants when the cell graph is connected.
    """
    d = power_diagram(target.sites, weights, domain)
    return d.areas - target.masses, -_laplacian(target.sites, d.edges, len(target))


def dual_objective(target: TargetDiscretization, weights, domain: ConvexPolygon = OMEGA_F) -> float:
    weights = np.asarray(weights, dtype=float)
    return _dual_value(target, weights, power_diagram(target.sites, weights, domain))[0]


def _dual_value(target, weights, d):
    y = target.sites
    ok = d.areas > 0
    # int_C |x - y|^2 = M2(C) - 2 <y, A c> + A |y|^2
    cell_cost = np.zeros(len(target))
    cell_cost[ok] = d.second_moments[ok] - 2 * d.areas[ok] * (d.centroids[ok] * y[ok]).sum(axis=1) + d.areas[ok] * (y[ok] ** 2).sum(axis=1)
    return float(cell_cost.sum() - (weights * d.areas).sum() + (weights * target.masses).sum()), cell_cost


# -------------------------------------------------------------------- solve


@dataclass
class SemiDiscretePlan:
    target: TargetDiscretization
    weights: np.ndarray
    diagram: PowerDiagram
    converged: bool
    iterations: int
    trace: list = field(default_factory=list)
    cell_costs: np.ndarray | None = None
    tol_mass: float = 1e-7
    wall_time: float = 0.0

    @property
    def sites(self) -> np.ndarray:
        return self.target.sites

    @property
    def areas(self) -> np.ndarray:
        return self.diagram.areas

    @property
    def centroids(self) -> np.ndarray:
        return self.diagram.centroids

    @property
    def cells(self) -> list:
        return [self.diagram.cell_polygon(j) for j in range(len(self.target))]

    @property
    def spacing(self) -> float:
        return self.target.spacing

    def mass_error(self) -> float:
        return float(np.max(np.abs(self.areas - self.target.masses) / self.target.masses))

    def transport_cost(self) -> float:
        """sum_j int_{cell_j} |x - y_j|^2 / 2."""
        return float(self.cell_costs.sum() / 2)

    def to_dict(self) -> dict:
        return {
            "n_sites": len(self.target),
            "seed": self.target.seed,
            "symmetric": self.target.symmetric,
            "sites": self.target.sites.tolist(),
            "masses": self.target.masses.tolist(),
            "weights": self.weights.tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "tol_mass": self.tol_mass,
            "max_relative_mass_error": self.mass_error(),
            "transport_cost": self.transport_cost(),
            "trace": self.trace,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SemiDiscretePlan":
        target = TargetDiscretization(np.array(data["sites"]), np.array(data["masses"]),
                                      symmetric=data.get("symmetric", False), seed=data.get("seed"))
        w = np.array(data["weights"], dtype=float)
        d = power_diagram(target.sites, w)
        _, cost = _dual_value(target, w, d)
        return cls(target, w, d, data["converged"], data["iterations"], data.get("trace", []), cost,
                   data.get("tol_mass", 1e-7))


def save_plan(plan: SemiDiscretePlan, path, precision: int = 17) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_fixed(plan.to_dict(), precision))


def load_plan(path) -> SemiDiscretePlan:
    with open(path) as fh:
        return SemiDiscretePlan.from_dict(json.load(fh))


def dumps_fixed(obj, precision: int = 17) -> str:
    """JSON with floats written by ``repr``-stable fixed formatting."""
    def conv(o):
        if isinstance(o, float):
            # strict JSON has no inf/nan
            return float(f"{o:.{precision}g}") if math.isfinite(o) else repr(o)
        if isinstance(o, dict):
            return {k: conv(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [conv(v) for v in o]
        if isinstance(o, np.generic):
            return conv(o.item())
        return o
    return json.dumps(conv(obj), indent=1, sort_keys=True)


def feasible_initial_weights(sites: np.ndarray, domain: ConvexPolygon = OMEGA_F, shrink: float = 0.9) -> np.ndarray:
    """Weights whose power diagram is the Voronoi diagram of a shrunken copy
    of the sites placed inside the domain, so every cell starts nonempty.

    With z_j = a y_j + b, the choice w_j = |y_j|^2 - |z_j|^2 / a makes power
    cells of (y, w) coincide with Voronoi cells of z.
    """
    sites = np.asarray(sites, dtype=float)
    if len(sites) == 1:
        return np.zeros(1)
    dom = domain.as_array()
    center = dom.mean(axis=0)
    mid = (sites.min(axis=0) + sites.max(axis=0)) / 2
    lo, hi = 0.0, 1.0
    for _ in range(60):
        a = (lo + hi) / 2
        if contains_many(domain, a * (sites - mid) + center, tol=-1e-12).all():
            lo = a
        else:
            hi = a
    a = shrink * lo
    z = a * (sites - mid) + center
    return (sites ** 2).sum(axis=1) - (z ** 2).sum(axis=1) / a


def solve(target: TargetDiscretization, init_weights=None, tol_mass: float = 1e-7, max_iters: int = 100,
          domain: ConvexPolygon = OMEGA_F, raise_on_failure: bool = True) -> SemiDiscretePlan:
    """Damped Newton on the weights.

    ``init_weights=None`` uses :func:`feasible_initial_weights`.  With explicit
    initial weights an empty initial cell raises :class:`EmptyCellError`.
    Weight 0 is pinned; the returned weights are normalised so that w_0 = 0.
    """
    t0 = time.perf_counter()
    n = len(target)
    w = feasible_initial_weights(target.sites, domain) if init_weights is None else np.array(init_weights, dtype=float)
    if np.ndim(w) == 0:
        w = np.full(n, float(w))
    d = power_diagram(target.sites, w, domain)
    if np.any(d.areas <= 0):
        raise EmptyCellError(f"{int(np.sum(d.areas <= 0))} empty cells at the initial weights")
    eps0 = 0.5 * min(target.masses.min(), d.areas.min())
    value, costs = _dual_value(target, w, d)
    trace = []
    it = 0
    alpha = 0.0
    converged = False
    while True:
        g = d.areas - target.masses
        rel = float(np.max(np.abs(g) / target.masses))
        trace.append({"iteration": it, "max_relative_mass_error": rel, "dual": value,
                      "min_area": float(d.areas.min()), "step": alpha})
        log.debug("newton %d: rel err %.3e dual %.12g", it, rel, value)
        if rel <= tol_mass:
            converged = True
            break
        if it >= max_iters:
            break
        L = _laplacian(target.sites, d.edges, n)
        if n == 1:
            break
        delta = np.zeros(n)
        delta[1:] = spla.spsolve(L[1:, 1:].tocsc(), -g[1:])
        gnorm = np.linalg.norm(g)
        alpha = 1.0
        while True:
            w_new = w + alpha * delta
            d_new = power_diagram(target.sites, w_new, domain)
            g_new = d_new.areas - target.masses
            if d_new.areas.min() >= eps0 and np.linalg.norm(g_new) <= (1 - alpha / 2) * gnorm:
                break
            alpha /= 2
            if alpha < 1e-12:
                raise ConvergenceError("damped Newton step collapsed")
        value_new, costs = _dual_value(target, w_new, d_new)
        w, d, value = w_new, d_new, value_new
        it += 1
    w = w - w[0]
    # rebuild on the normalised weights so a reloaded plan reproduces the stored one bit for bit
    d = power_diagram(target.sites, w, domain)
    _, costs = _dual_value(target, w, d)
    plan = SemiDiscretePlan(target, w, d, converged, it, trace, costs, tol_mass, time.perf_counter() - t0)
    if not converged and raise_on_failure:
        raise ConvergenceError(f"no convergence in {max_iters} iterations (rel err {rel:.2e})", plan)
    return plan


# ----------------------------------------------------------- map evaluation


class PowerLocator:
    """Nearest-in-power-distance queries via a 3-D lifting and a k-d tree.

    |x - y_j|^2 - w_j = |(x, 0) - (y_j, sqrt(c - w_j))|^2 - c  with c = max w.
    """

    def __init__(self, sites, weights):
        self.sites = np.asarray(sites, dtype=float)
        w = np.asarray(weights, dtype=float)
        c = w.max()
        self._tree = cKDTree(np.column_stack([self.sites, np.sqrt(c - w)]))

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        _, idx = self._tree.query(np.column_stack([pts, np.zeros(len(pts))]))
        return idx


def transport_map(plan: SemiDiscretePlan, pts) -> np.ndarray:
    """T(x) = site of the cell containing x."""
    return plan.sites[PowerLocator(plan.sites, plan.weights)(pts)]


def cells_svg(plan: SemiDiscretePlan, path, size: int = 480, show_sites: bool = True) -> None:
    """Laguerre cells over the source kite, sites overlaid (all in shifted coordinates)."""
    d = plan.diagram
    pts = [OMEGA_F.as_array(), plan.sites]
    lo = np.min([p.min(axis=0) for p in pts], axis=0) - 0.02
    hi = np.max([p.max(axis=0) for p in pts], axis=0) + 0.02
    scale = size / (hi - lo).max()

    def xy(p):
        return (p[0] - lo[0]) * scale, (hi[1] - p[1]) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    for j in range(len(plan.sites)):
        v = d.cell_vertices(j)
        if v is None:
            continue
        poly = " ".join("%.2f,%.2f" % xy(p) for p in v)
        parts.append(f'<polygon points="{poly}" fill="none" stroke="#3060a0" stroke-width="0.4"/>')
    if show_sites:
        for p in plan.sites:
            x, y = xy(p)
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="0.8" fill="#c03020"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
