"""Brenier potential of a solved plan, its derivatives, and structural checks.

The potential is the max-affine function

    phi(x) = max_j <x, y_j> - c_j,    c_j = (|y_j|^2 - w_j) / 2,

so ``grad phi`` is the (piecewise constant) transport map.  Second derivatives
are estimated by local linear regression of cell centroid -> site.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import domains
from .geometry import TAU_GEOM, contains_many, distance_to_boundary, grid_points, sample_uniform
from .ot_semidiscrete import OMEGA_F, PowerLocator, SemiDiscretePlan

# stencil radius in units of the cell spacing; with the tapered kernel this
# keeps about 25 effective cells per fit
DEFAULT_R_MULT = 6.0
MIN_STENCIL = 6
MAX_COND = 1e6
DEFAULT_KERNEL = "epanechnikov"
_CHUNK = 2048
_KERNELS = {
    "uniform": lambda t2: np.ones_like(t2),
    "epanechnikov": lambda t2: np.maximum(1.0 - t2, 0.0),
}


class DomainError(ValueError):
    """A point lies outside the source domain."""


class InsufficientStencilError(RuntimeError):
    """Too few cells (or an ill-conditioned fit) for a regression stencil."""


@dataclass(frozen=True)
class RegressionStencil:
    center: np.ndarray
    radius: float
    indices: np.ndarray
    weights: np.ndarray
    cond: float

    @property
    def n_cells(self) -> int:
        return len(self.indices)

    @property
    def usable(self) -> bool:
        return self.n_cells >= MIN_STENCIL and self.cond <= MAX_COND


@dataclass
class HessianSamples:
    """Regression Hessians at a batch of points.

    ``evaluated_at`` differs from ``points`` where a point close to the slit was
    replaced by its mirror image under A (continuous quantities only).
    """

    points: np.ndarray
    evaluated_at: np.ndarray
    mirrored: np.ndarray
    hessians: np.ndarray
    counts: np.ndarray
    cond: np.ndarray
    rho_se: np.ndarray
    valid: np.ndarray
    gradients: np.ndarray  # fitted (smoothed) grad phi at ``points``

    @property
    def rho(self) -> np.ndarray:
        h = self.hessians
        return h[:, 0, 0] + 2 * h[:, 0, 1] + h[:, 1, 1]

    @property
    def det(self) -> np.ndarray:
        h = self.hessians
        return h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] ** 2

    def subset(self, mask) -> "HessianSamples":
        return HessianSamples(*(getattr(self, f)[mask] for f in
                                ("points", "evaluated_at", "mirrored", "hessians", "counts", "cond", "rho_se", "valid",
                                 "gradients")))


class PotentialField:
    """Evaluators for phi, grad phi and D^2 phi of a solved plan.

    Parameters
    ----------
    plan : SemiDiscretePlan
    r_mult : float
        Regression radius in units of the mean site spacing.
    kernel : {"uniform", "epanechnikov"}
        Weight profile of the regression over the stencil disc.
    """

    def __init__(self, plan: SemiDiscretePlan, r_mult: float = DEFAULT_R_MULT, kernel: str = DEFAULT_KERNEL):
        if kernel not in _KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}")
        self.kernel = kernel
        self.plan = plan
        self.sites = plan.sites
        self.weights = np.asarray(plan.weights, dtype=float)
        self.offsets = ((self.sites ** 2).sum(axis=1) - self.weights) / 2
        self.r_mult = float(r_mult)
        self._locator = PowerLocator(self.sites, self.weights)
        ok = plan.areas > 0
        self._cells = np.nonzero(ok)[0]
        self._tree = cKDTree(plan.centroids[ok])

    @property
    def spacing(self) -> float:
        return self.plan.spacing

    @property
    def r_loc(self) -> float:
        return self.r_mult * self.spacing

    # -- evaluation --------------------------------------------------------

    def _points(self, x, check=True):
        pts = np.asarray(x, dtype=float).reshape(-1, 2)
        if check and not contains_many(OMEGA_F, pts, TAU_GEOM).all():
            raise DomainError("point outside the source domain")
        return pts

    def site_index(self, x, check=True) -> np.ndarray:
        return self._locator(self._points(x, check))

    def eval_potential(self, x, check=True):
        """phi(x); scalar for a single point, array for a batch."""
        pts = self._points(x, check)
        j = self._locator(pts)
        val = (pts * self.sites[j]).sum(axis=1) - self.offsets[j]
        return float(val[0]) if np.ndim(x) == 1 else val

    def eval_potential_brute(self, x, check=True) -> np.ndarray:
        """phi by an explicit maximum over every site (reference route)."""
        pts = self._points(x, check)
        out = np.empty(len(pts))
        for s in range(0, len(pts), _CHUNK):
            out[s:s + _CHUNK] = (pts[s:s + _CHUNK] @ self.sites.T - self.offsets).max(axis=1)
        return out

    def eval_gradient(self, x, check=True) -> np.ndarray:
        pts = self._points(x, check)
        g = self.sites[self._locator(pts)]
        return g[0] if np.ndim(x) == 1 else g

    def v(self, x, check=True) -> np.ndarray:
        """v = phi_x + phi_y."""
        return self.eval_gradient(np.asarray(x, dtype=float).reshape(-1, 2), check).sum(axis=1)

    def conjugate(self, y) -> np.ndarray:
        """phi*(y) = max over Omega of <x, y> - phi(x).

        The objective is concave and piecewise linear, so the maximum sits at a
        vertex of the power diagram (domain corners included).
        """
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        d = self.plan.diagram
        mask = np.arange(d.vertices.shape[1])[None, :] < d.counts[:, None]
        verts = np.unique(np.round(d.vertices[mask], 14), axis=0)
        phi_v = self.eval_potential_brute(verts, check=False)
        return (y @ verts.T - phi_v).max(axis=1)

    def legendre_residual(self, x) -> np.ndarray:
        """phi(x) + phi*(grad phi(x)) - <x, grad phi(x)>, zero off cell boundaries."""
        pts = self._points(x)
        t = self.eval_gradient(pts)
        return self.eval_potential_brute(pts) + self.conjugate(t) - (pts * t).sum(axis=1)

    # -- second derivatives -----------------------------------------------

    def stencil_ok(self, x, r_loc: float | None = None) -> np.ndarray:
        """Precondition of the regression: clear of the slit and of the boundary."""
        r = self.r_loc if r_loc is None else r_loc
        pts = np.asarray(x, dtype=float).reshape(-1, 2)
        return (distance_to_boundary(OMEGA_F, pts) > r) & (domains.distance_to_slit(pts) > r)

    def stencil(self, x, r_loc: float | None = None) -> RegressionStencil:
        r = self.r_loc if r_loc is None else r_loc
        x = np.asarray(x, dtype=float).reshape(2)
        local = np.array(self._tree.query_ball_point(x, r), dtype=int)
        idx = self._cells[local] if len(local) else local
        w = np.zeros(0)
        if len(idx):
            X = (self.plan.centroids[idx] - x) / r
            w = self.plan.areas[idx] / self.plan.areas[idx].mean() * _KERNELS[self.kernel]((X ** 2).sum(axis=1))
        if len(idx) >= 3:
            D = np.column_stack([np.ones(len(idx)), X])
            cond = float(np.linalg.cond(D.T @ (w[:, None] * D)))
        else:
            cond = math.inf
        return RegressionStencil(x, r, idx, w, cond)

    def hessian_estimate(self, x, r_loc: float | None = None) -> np.ndarray:
        """Symmetrized Jacobian of the centroid -> site regression around ``x``."""
        r = self.r_loc if r_loc is None else r_loc
        x = self._points(x)[0]
        if not self.stencil_ok(x, r)[0]:
            raise DomainError("stencil centre within r_loc of the slit or the boundary")
        st = self.stencil(x, r)
        if not st.usable:
            raise InsufficientStencilError(f"{st.n_cells} cells, condition {st.cond:.3g}")
        D = np.column_stack([np.ones(st.n_cells), self.plan.centroids[st.indices] - x])
        sw = np.sqrt(st.weights)[:, None]
        coef, *_ = np.linalg.lstsq(D * sw, self.sites[st.indices] * sw, rcond=None)
        J = coef[1:].T
        return (J + J.T) / 2

    def hessian_field(self, pts, r_loc: float | None = None, mirror_slit: bool = False) -> HessianSamples:
        """Batched regression Hessians.

        Points failing the stencil precondition are marked invalid.  With
        ``mirror_slit`` a point within ``2 r_loc`` of the slit is evaluated at its
        image under A and the Hessian carried back by D^2phi(x) = A^T D^2phi(Ax) A.
        """
        r = self.r_loc if r_loc is None else r_loc
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        q = pts.copy()
        mirrored = np.zeros(len(pts), dtype=bool)
        if mirror_slit:
            mirrored = domains.distance_to_slit(pts) <= 2 * r
            q[mirrored] = domains.A.apply_many(pts[mirrored])
        ok = self.stencil_ok(q, r)
        H, T, counts, cond, rho_se = _batched_regression(self, q, r, ok)
        valid = ok & (counts >= MIN_STENCIL) & (cond <= MAX_COND)
        if mirrored.any():
            # phi = phi o A gives grad phi(x) = M^T grad phi(Ax), D^2 phi(x) = M^T D^2 phi(Ax) M
            for k in np.nonzero(mirrored & valid)[0]:
                M = domains.A.matrix_at(pts[k])
                H[k] = M.T @ H[k] @ M
                T[k] = M.T @ T[k]
        H[~valid] = np.nan
        T[~valid] = np.nan
        return HessianSamples(pts, q, mirrored, H, counts, cond, rho_se, valid, T)

    # -- export ------------------------------------------------------------

    def export_csv(self, path, pts, samples: HessianSamples | None = None) -> None:
        """Write x, y, phi, phi_x, phi_y and the Hessian entries (blank if invalid)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        phi = self.eval_potential(pts)
        g = self.eval_gradient(pts)
        if samples is None:
            samples = self.hessian_field(pts)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "y", "phi", "phi_x", "phi_y", "phi_xx", "phi_xy", "phi_yy"])
            for k in range(len(pts)):
                h = samples.hessians[k]
                hs = [f"{h[0, 0]:.10g}", f"{h[0, 1]:.10g}", f"{h[1, 1]:.10g}"] if samples.valid[k] else ["", "", ""]
                wr.writerow([f"{pts[k, 0]:.10g}", f"{pts[k, 1]:.10g}", f"{phi[k]:.12g}",
                             f"{g[k, 0]:.10g}", f"{g[k, 1]:.10g}", *hs])


def _batched_regression(field: PotentialField, q, r, ok):
    """Least squares site ~ a + J (centroid - q) for every stencil at once."""
    n = len(q)
    H = np.full((n, 2, 2), np.nan)
    T = np.full((n, 2), np.nan)
    counts = np.zeros(n, dtype=int)
    cond = np.full(n, np.inf)
    rho_se = np.full(n, np.nan)
    if not ok.any():
        return H, T, counts, cond, rho_se
    sel = np.nonzero(ok)[0]
    lists = field._tree.query_ball_point(q[sel], r)
    counts[sel] = [len(ix) for ix in lists]
    usable = sel[counts[sel] >= 3]
    if len(usable) == 0:
        return H, T, counts, cond, rho_se
    lists = [lists[i] for i in np.nonzero(counts[sel] >= 3)[0]]
    lens = np.array([len(ix) for ix in lists])
    owner = np.repeat(np.arange(len(usable)), lens)
    cells = field._cells[np.concatenate(lists).astype(int)]
    areas = field.plan.areas[cells]
    X = (field.plan.centroids[cells] - q[usable][owner]) / r
    wt = areas / areas.mean() * _KERNELS[field.kernel]((X ** 2).sum(axis=1))
    D = np.column_stack([np.ones(len(cells)), X])
    Y = field.sites[cells]
    N = np.zeros((len(usable), 3, 3))
    B = np.zeros((len(usable), 3, 2))
    np.add.at(N, owner, wt[:, None, None] * D[:, :, None] * D[:, None, :])
    np.add.at(B, owner, wt[:, None, None] * D[:, :, None] * Y[:, None, :])
    cond[usable] = np.linalg.cond(N)
    good = np.isfinite(cond[usable]) & (cond[usable] <= MAX_COND)
    coef = np.full((len(usable), 3, 2), np.nan)
    coef[good] = np.linalg.solve(N[good], B[good])
    J = coef[:, 1:, :].transpose(0, 2, 1) / r
    H[usable] = (J + J.transpose(0, 2, 1)) / 2
    T[usable] = coef[:, 0, :]
    # standard error of rho, the (1,1)-directional derivative of v = T_1 + T_2
    resid = (Y.sum(axis=1) - (D[:, :, None] * coef[owner]).sum(axis=1).sum(axis=1))
    rss = np.bincount(owner, wt * resid ** 2, minlength=len(usable))
    dof = np.maximum(lens - 3, 1)
    e = np.array([0.0, 1.0, 1.0])
    Ninv_e = np.full((len(usable), 3), np.nan)
    Ninv_e[good] = np.linalg.solve(N[good], np.broadcast_to(e, (int(good.sum()), 3))[..., None])[..., 0]
    rho_se[usable] = np.sqrt(rss / dof * (Ninv_e @ e)) / r
    return H, T, counts, cond, rho_se


# ---------------------------------------------------------------------- checks


def interior_points(r_loc: float, grid_n: int = 120, slit_factor: float = 2.0) -> np.ndarray:
    """Grid points of Omega clear of the boundary by r_loc and of the slit by slit_factor * r_loc."""
    pts = grid_points(OMEGA_F, grid_n)
    keep = (distance_to_boundary(OMEGA_F, pts) > r_loc) & (domains.distance_to_slit(pts) > slit_factor * r_loc)
    return pts[keep]


@dataclass
class MAReport:
    n_sites: int
    n_samples: int
    n_valid: int
    median_abs_residual: float
    p90_abs_residual: float
    rho_positive_fraction: float
    threshold: float = 0.1

    @property
    def passed(self) -> bool:
        return self.n_valid > 0 and self.median_abs_residual <= self.threshold


def ma_residual(field: PotentialField, pts=None, grid_n: int = 120, threshold: float = 0.1) -> MAReport:
    """Monge-Ampere residual |det D^2 phi - 1| on interior stencils."""
    if pts is None:
        pts = interior_points(field.r_loc, grid_n)
    s = field.hessian_field(pts)
    res = np.abs(s.det[s.valid] - 1)
    rho = s.rho[s.valid]
    return MAReport(len(field.sites), len(pts), int(s.valid.sum()),
                    float(np.median(res)) if len(res) else math.nan,
                    float(np.percentile(res, 90)) if len(res) else math.nan,
                    float(np.mean(rho > 0)) if len(rho) else math.nan, threshold)


def _divider_distance(pts) -> np.ndarray:
    """Distance to the lines separating the quadrant pieces of Omega."""
    x, y = pts[:, 0], pts[:, 1]
    return np.minimum.reduce([np.abs(x - y) / math.sqrt(2), np.abs(x - 3 * y) / math.sqrt(10),
                              np.abs(3 * x - y) / math.sqrt(10)])


def _theta_divider_distance(pts) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    return np.minimum(np.abs(x - y), np.abs(x + y)) / math.sqrt(2)


@dataclass
class SymmetryReport:
    spacing: float
    sup_R: float
    sup_A: float
    bound: float
    orbit_matched: bool
    weight_gap_R: float
    weight_gap_A: float
    weight_tol: float
    v_sign_fraction: float
    quadrant_fraction: float
    quadrant_exceptions_near_boundary: bool
    v_origin: float
    v_origin_tol: float
    rho_positive_fraction: float
    n_rho_samples: int
    min_fraction: float = 0.99
    details: dict = field(default_factory=dict)

    def checks(self) -> dict:
        return {
            "phi_R": self.sup_R <= self.bound,
            "phi_A": self.sup_A <= self.bound,
            "weight_equivariance": self.orbit_matched and max(self.weight_gap_R, self.weight_gap_A) <= self.weight_tol,
            "v_sign": self.v_sign_fraction >= self.min_fraction,
            "quadrants": self.quadrant_fraction >= self.min_fraction,
            "v_origin": abs(self.v_origin) <= self.v_origin_tol,
            "rho_positive": self.n_rho_samples > 0 and self.rho_positive_fraction == 1.0,
        }

    @property
    def passed(self) -> bool:
        return all(self.checks().values())


def _orbit_gaps(field: PotentialField, mapping) -> tuple[bool, float]:
    """Match each site's image to a site; return (all matched, max offset gap).

    The offsets c_j rather than the power weights are compared: A^T is not
    orthogonal, so phi = phi o A forces c(A^T y) = c(y) while w(A^T y) differs
    from w(y) by |A^T y|^2 - |y|^2.  Under R the two comparisons coincide.
    """
    y = field.sites
    img = mapping(y)
    dist, j = cKDTree(y).query(img)
    matched = bool(np.all(dist <= 1e-9))
    gap = float(np.max(np.abs(field.offsets[j] - field.offsets))) if matched else math.inf
    return matched, gap


def _v_at_origin(field: PotentialField) -> float:
    """Linear extrapolation of v along the diagonal y = x to the origin."""
    h = field.spacing
    t = np.concatenate([-np.linspace(2, 8, 13), np.linspace(2, 8, 13)]) * h
    pts = np.column_stack([t, t])
    pts = pts[contains_many(OMEGA_F, pts, 0.0)]
    v = field.v(pts)
    return float(np.polyfit(pts[:, 0], v, 1)[1])


def check_symmetries(field: PotentialField, n_samples: int = 2000, grid_n: int = 60, seed: int = 0) -> SymmetryReport:
    """Symmetry suite: phi under R and A, weight equivariance, sign of v,
    quadrant mapping, extension of v to the origin and positivity of rho."""
    h = field.spacing
    grid = grid_points(OMEGA_F, grid_n)
    phi = field.eval_potential(grid)
    phi_r = field.eval_potential(grid[:, ::-1], check=False)
    phi_a = field.eval_potential(domains.A.apply_many(grid), check=False)
    sup_r = float(np.max(np.abs((phi - phi.mean()) - (phi_r - phi_r.mean()))))
    sup_a = float(np.max(np.abs((phi - phi.mean()) - (phi_a - phi_a.mean()))))

    m_r, gap_r = _orbit_gaps(field, lambda y: y[:, ::-1])
    m_a, gap_a = _orbit_gaps(field, domains.A_T.apply_many)

    rng = np.random.default_rng(seed)
    pts = sample_uniform(OMEGA_F, n_samples, rng)
    quad = domains.omega_quadrant(pts)
    t = field.eval_gradient(pts)
    v = t.sum(axis=1)
    labelled = quad != ""
    expect_pos = np.isin(quad, ["++", "-+"])
    sign_ok = np.where(expect_pos, v > 0, v < 0)
    tq = domains.theta_quadrant(t)
    quad_ok = tq == quad
    bad = labelled & ~quad_ok
    near = bool(np.all((_divider_distance(pts[bad]) <= 2 * h) | (_theta_divider_distance(t[bad]) <= 2 * h)))

    s = field.hessian_field(grid, mirror_slit=True)
    rho = s.rho[s.valid]
    return SymmetryReport(
        spacing=h, sup_R=sup_r, sup_A=sup_a, bound=10 * h * h,
        orbit_matched=m_r and m_a, weight_gap_R=gap_r, weight_gap_A=gap_a,
        weight_tol=10 * field.plan.tol_mass,
        v_sign_fraction=float(np.mean(sign_ok[labelled])),
        quadrant_fraction=float(np.mean(quad_ok[labelled])),
        quadrant_exceptions_near_boundary=near,
        v_origin=_v_at_origin(field), v_origin_tol=3 * h,
        rho_positive_fraction=float(np.mean(rho > 0)) if len(rho) else math.nan,
        n_rho_samples=int(len(rho)),
        details={"n_samples": int(labelled.sum()), "n_quadrant_exceptions": int(bad.sum())},
    )


@dataclass
class MonotoneReport:
    offsets: np.ndarray
    fractions: np.ndarray
    origin_line_fraction: float
    delta: float
    min_fraction: float = 0.99

    @property
    def passed(self) -> bool:
        return bool(np.all(self.fractions >= self.min_fraction)) and self.origin_line_fraction >= self.min_fraction


def _line_segment(c: float):
    """Parameter range s with (c/2 + s, -c/2 + s) in Omega, i.e. the line x - y = c."""
    v = OMEGA_F.as_array()
    lo, hi = -np.inf, np.inf
    p0 = np.array([c / 2, -c / 2])
    d = np.array([1.0, 1.0])
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        e = b - a
        nrm = np.array([e[1], -e[0]])  # outward for counterclockwise order
        num = nrm @ (a - p0)
        den = nrm @ d
        if abs(den) < 1e-15:
            if num < 0:
                return None
            continue
        if den > 0:
            hi = min(hi, num / den)
        else:
            lo = max(lo, num / den)
    return (lo, hi) if hi > lo else None


def _fraction_nondecreasing(field, c, n_points, exclude=0.0):
    seg = _line_segment(c)
    if seg is None:
        return math.nan
    s = np.linspace(seg[0], seg[1], n_points + 2)[1:-1]
    pts = np.column_stack([c / 2 + s, -c / 2 + s])
    if exclude > 0:
        pts = pts[np.hypot(*pts.T) > exclude]
    v = field.v(pts, check=False)
    return float(np.mean(np.diff(v) >= 0))


def check_monotone_along_lines(field: PotentialField, n_lines: int = 50, n_points: int = 200,
                               delta: float | None = None) -> MonotoneReport:
    """Fraction of consecutive samples with v nondecreasing along lines x - y = c."""
    cs = np.linspace(-1 / 3, 1 / 3, n_lines + 2)[1:-1]
    fr = np.array([_fraction_nondecreasing(field, c, n_points) for c in cs])
    delta = 2 * field.r_loc if delta is None else delta
    return MonotoneReport(cs, fr, _fraction_nondecreasing(field, 0.0, n_points, delta), delta)
