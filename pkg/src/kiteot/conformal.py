"""Isothermal coordinates z = u + iv with u = x - y, v = phi_x + phi_y, and
numerical checks on the conformal factor rho^{-1}, rho = phi_xx + 2 phi_xy + phi_yy.

Scalar fields on the (u, v)-plane are plain callables ``f(points) -> values``.
A :class:`ConformalCloud` provides one by inverse-distance interpolation of
the sampled rho^{-1}; synthetic fixtures provide analytic ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import spearmanr

from . import domains
from .geometry import contains_many, distance_to_boundary, grid_points
from .ot_semidiscrete import OMEGA_F
from .potential_analysis import DomainError, HessianSamples, PotentialField

IDW_NEIGHBORS = 8
IDW_POWER = 2
CIRCLE_POINTS = 128
MIN_CIRCLE_SAMPLES = 32
TOL_BLOW = 0.05


class InsufficientSamplesError(RuntimeError):
    """A circle has fewer than the required number of usable samples."""


class InsufficientRadiiError(ValueError):
    """Fewer than four usable radii for the logarithmic fit."""


@dataclass(frozen=True)
class ConformalSample:
    x: np.ndarray
    u: float
    v: float
    rho: float
    hessian: np.ndarray
    valid: bool


# ------------------------------------------------------------------ embedding


def embed(field_: PotentialField, x) -> np.ndarray:
    """f(x) = (x_1 - x_2, T_1(x) + T_2(x)); the origin maps to the origin.

    Returns shape (2,) for a single point and (k, 2) for a batch.
    """
    pts = np.asarray(x, dtype=float).reshape(-1, 2)
    if not contains_many(OMEGA_F, pts).all():
        raise DomainError("point outside the source domain")
    uv = np.column_stack([pts[:, 0] - pts[:, 1], field_.v(pts, check=False)])
    uv[(pts[:, 0] == 0) & (pts[:, 1] == 0)] = 0.0
    return uv[0] if np.ndim(x) == 1 else uv


def _boundary_points(per_edge: int = 2000) -> np.ndarray:
    v = OMEGA_F.as_array()
    t = np.linspace(0, 1, per_edge, endpoint=False)[:, None]
    pts = np.vstack([v[i] + t * (v[(i + 1) % len(v)] - v[i]) for i in range(len(v))])
    return pts + 1e-9 * (v.mean(axis=0) - pts)


def image_inradius(field_: PotentialField, per_edge: int = 2000) -> float:
    """Distance from the origin to the image of the boundary of Omega."""
    return float(np.hypot(*embed(field_, _boundary_points(per_edge)).T).min())


@dataclass
class InjectivityReport:
    n_samples: int
    min_image_distance: float  # over pairs whose sources are more than 4 spacings apart
    n_collisions: int
    quadrants: dict  # sample counts per open quadrant of the image plane

    @property
    def passed(self) -> bool:
        return self.n_collisions == 0 and all(c > 0 for c in self.quadrants.values())

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "min_image_distance": self.min_image_distance,
                "n_collisions": self.n_collisions, "quadrants": self.quadrants, "passed": self.passed}


def injectivity_check(field_: PotentialField, grid_n: int = 100, collision_tol: float = 1e-12,
                      chunk: int = 512) -> InjectivityReport:
    """Embed a grid of Omega and look for distinct sources with one image.

    Only pairs whose sources are more than four site spacings apart count, since
    the piecewise-constant v gives nearby points of a cell nearly equal images.
    """
    pts = grid_points(OMEGA_F, grid_n)
    uv = embed(field_, pts)
    far2 = (4 * field_.spacing) ** 2
    best = math.inf
    hits = 0
    for s in range(0, len(pts), chunk):
        dx2 = ((pts[s:s + chunk, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        du = np.sqrt(((uv[s:s + chunk, None, :] - uv[None, :, :]) ** 2).sum(axis=2))
        du = np.where(dx2 > far2, du, math.inf)
        best = min(best, float(du.min()))
        hits += int((du <= collision_tol).sum())
    u, v = uv[:, 0], uv[:, 1]
    quads = {"u>0,v>0": int(np.sum((u > 0) & (v > 0))), "u<0,v>0": int(np.sum((u < 0) & (v > 0))),
             "u<0,v<0": int(np.sum((u < 0) & (v < 0))), "u>0,v<0": int(np.sum((u > 0) & (v < 0)))}
    return InjectivityReport(len(pts), best, hits // 2, quads)


# ---------------------------------------------------------------------- cloud


@dataclass
class ConformalCloud:
    """Conformal samples on a grid of Omega, with an IDW interpolant on (u, v).

    Near the slit the Hessian is taken from the mirror point under A (rho and the
    trace are continuous there); invalid stencils are kept but flagged.
    """

    x: np.ndarray
    uv: np.ndarray
    hessians: np.ndarray
    valid: np.ndarray
    rho_se: np.ndarray
    spacing: float
    spacing_uv: float
    inradius: float
    field: PotentialField | None = None
    _tree: cKDTree | None = None
    _values: np.ndarray | None = None

    @property
    def rho(self) -> np.ndarray:
        h = self.hessians
        return h[:, 0, 0] + 2 * h[:, 0, 1] + h[:, 1, 1]

    @property
    def rho_inv(self) -> np.ndarray:
        return 1.0 / self.rho

    @property
    def trace(self) -> np.ndarray:
        return self.hessians[:, 0, 0] + self.hessians[:, 1, 1]

    def __len__(self):
        return len(self.x)

    def sample(self, k: int) -> ConformalSample:
        return ConformalSample(self.x[k], float(self.uv[k, 0]), float(self.uv[k, 1]), float(self.rho[k]),
                               self.hessians[k], bool(self.valid[k]))

    def interpolant(self, values=None, reach: float | None = None) -> "IDWField":
        """IDW field of ``values`` (default rho^{-1}) over the valid samples."""
        vals = self.rho_inv if values is None else np.asarray(values, dtype=float)
        ok = self.valid & np.isfinite(vals)
        reach = 3 * self.spacing_uv if reach is None else reach
        return IDWField(self.uv[ok], vals[ok], reach)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["u", "v", "rho_inv"])
            for k in np.nonzero(self.valid)[0]:
                wr.writerow([f"{self.uv[k, 0]:.10g}", f"{self.uv[k, 1]:.10g}", f"{1 / self.rho[k]:.10g}"])


def build_cloud(field_: PotentialField, grid_n: int | None = None, smooth: bool = True) -> ConformalCloud:
    """Embed a grid of Omega (default resolution: half the site spacing).

    With ``smooth`` the v coordinate is the regression fit of phi_x + phi_y at
    the sample instead of the cell site.  The piecewise-constant v sends every
    point of a cell to one horizontal segment, which misplaces samples in the
    image plane by up to a cell's v-jump where f is strongly compressing.
    """
    h = field_.spacing
    if grid_n is None:
        grid_n = int(math.ceil(2.0 / h))
    pts = grid_points(OMEGA_F, grid_n)
    pts = pts[np.hypot(*pts.T) > 0]
    uv = embed(field_, pts)
    s: HessianSamples = field_.hessian_field(pts, mirror_slit=True)
    if smooth:
        uv[s.valid, 1] = s.gradients[s.valid].sum(axis=1)
    valid = s.valid & (s.rho > 0)
    mean_rho = float(np.mean(s.rho[valid])) if valid.any() else 1.0
    spacing_uv = h * math.sqrt(mean_rho)
    return ConformalCloud(pts, uv, s.hessians, valid, s.rho_se, h, spacing_uv, image_inradius(field_), field_)


class IDWField:
    """Inverse-distance weighting over the nearest samples (power 2).

    A query is *covered* when all its neighbours lie within ``reach``; uncovered
    queries return NaN.
    """

    def __init__(self, points, values, reach: float = math.inf, k: int = IDW_NEIGHBORS, power: float = IDW_POWER):
        self.points = np.asarray(points, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.k = min(k, len(self.points))
        self.power = power
        self.reach = reach
        self._tree = cKDTree(self.points)

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(-1, 2)
        d, i = self._tree.query(q, self.k)
        d = d.reshape(len(q), -1)
        i = i.reshape(len(q), -1)
        exact = d[:, 0] == 0
        w = 1.0 / np.where(d == 0, 1.0, d) ** self.power
        out = (w * self.values[i]).sum(axis=1) / w.sum(axis=1)
        out[exact] = self.values[i[exact, 0]]
        out[d[:, -1] > self.reach] = np.nan
        return out


def log_fixture(C: float = 3.0, h0: float = 0.0) -> Callable:
    """Analytic field -C log|z| + h0 on the (u, v)-plane."""
    def f(q):
        q = np.asarray(q, dtype=float).reshape(-1, 2)
        return -C * np.log(np.hypot(q[:, 0], q[:, 1])) + h0
    return f


def constant_fixture(c: float = 1.0) -> Callable:
    def f(q):
        return np.full(len(np.asarray(q).reshape(-1, 2)), float(c))
    return f


# -------------------------------------------------------------- circle means


def circle_average(f: Callable, center, radius: float, n_points: int = CIRCLE_POINTS,
                   min_samples: int = MIN_CIRCLE_SAMPLES) -> tuple[float, int]:
    """Mean of ``f`` over equispaced points of a circle, ignoring NaN values."""
    th = 2 * np.pi * np.arange(n_points) / n_points
    pts = np.asarray(center, dtype=float) + radius * np.column_stack([np.cos(th), np.sin(th)])
    vals = f(pts)
    ok = np.isfinite(vals)
    if ok.sum() < min_samples:
        raise InsufficientSamplesError(f"{int(ok.sum())} usable samples on circle r={radius:.4g}")
    return float(vals[ok].mean()), int(ok.sum())


@dataclass
class HarmonicityReport:
    centers: np.ndarray
    radii: np.ndarray
    center_values: np.ndarray
    deviations: np.ndarray  # (n_centers, n_radii), relative
    threshold: float = 0.02

    @property
    def max_deviation(self) -> float:
        return float(np.nanmax(self.deviations))

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.threshold


def mean_value_harmonicity(f: Callable, centers, radii, threshold: float = 0.02) -> HarmonicityReport:
    """Relative gap between circle averages of ``f`` and its value at the centre."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    radii = np.asarray(radii, dtype=float).reshape(-1)
    c_val = f(centers)
    dev = np.empty((len(centers), len(radii)))
    for a, c in enumerate(centers):
        if not np.isfinite(c_val[a]):
            raise InsufficientSamplesError(f"no value at centre {c}")
        for b, r in enumerate(radii):
            m, _ = circle_average(f, c, r)
            dev[a, b] = abs(m - c_val[a]) / abs(c_val[a])
    return HarmonicityReport(centers, radii, c_val, dev, threshold)


def ring_centers(radius: float = 0.1, count: int = 16) -> np.ndarray:
    th = 2 * np.pi * np.arange(count) / count
    return radius * np.column_stack([np.cos(th), np.sin(th)])


# ------------------------------------------------------------------- log fit


@dataclass
class RadialProfile:
    radii: np.ndarray  # strictly decreasing
    averages: np.ndarray
    counts: np.ndarray

    def to_dict(self) -> dict:
        return {"radii": self.radii.tolist(), "rho_inv_average": self.averages.tolist(),
                "sample_counts": self.counts.tolist()}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["radius", "rho_inv_average", "samples"])
            for r, a, c in zip(self.radii, self.averages, self.counts):
                wr.writerow([f"{r:.10g}", f"{a:.12g}", int(c)])


@dataclass
class LogFit:
    """Least-squares fit  average(rho^{-1}) ~ -C log r + h0."""

    C: float
    h0: float
    r_squared: float
    C_se: float
    h0_se: float
    r_min: float
    r_max: float
    profile: RadialProfile

    @property
    def decades(self) -> float:
        return math.log10(self.r_max / self.r_min)

    def to_dict(self) -> dict:
        return {"C": self.C, "h0": self.h0, "r_squared": self.r_squared, "C_standard_error": self.C_se,
                "h0_standard_error": self.h0_se, "r_min": self.r_min, "r_max": self.r_max,
                "decades": self.decades, "profile": self.profile.to_dict()}


def radial_profile(f: Callable, r_min: float, r_max: float, n_radii: int = 12) -> RadialProfile:
    if not r_min < r_max:
        raise InsufficientRadiiError(f"empty radius range [{r_min}, {r_max}]")
    radii = np.geomspace(r_max, r_min, n_radii)
    avg, cnt = [], []
    for r in radii:
        try:
            a, c = circle_average(f, (0.0, 0.0), r)
        except InsufficientSamplesError:
            a, c = math.nan, 0
        avg.append(a)
        cnt.append(c)
    return RadialProfile(radii, np.array(avg), np.array(cnt))


def fit_log_asymptotics(f: Callable, r_min: float, r_max: float, n_radii: int = 12) -> LogFit:
    """Circle averages of ``f`` about the origin at geometric radii, fitted
    against -log r.  Circle means of a harmonic remainder equal its value at
    the origin, so the intercept estimates h(0)."""
    prof = radial_profile(f, r_min, r_max, n_radii)
    ok = np.isfinite(prof.averages)
    if ok.sum() < 4:
        raise InsufficientRadiiError(f"only {int(ok.sum())} usable radii")
    x = -np.log(prof.radii[ok])
    y = prof.averages[ok]
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float((resid ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(len(y) - 2, 1)
    cov = ss_res / dof * np.linalg.inv(X.T @ X)
    return LogFit(float(coef[0]), float(coef[1]), r2, float(math.sqrt(cov[0, 0])), float(math.sqrt(cov[1, 1])),
                  float(prof.radii[ok].min()), float(prof.radii[ok].max()), prof)


def default_radius_range(cloud: ConformalCloud, min_decades: float = 1.0, r_max_cap: float = 0.95) -> tuple[float, float]:
    """r_min = 5 spacing_uv; r_max = 0.25 inradius, widened towards
    ``r_max_cap * inradius`` until the range spans ``min_decades``."""
    r_min = 5 * cloud.spacing_uv
    r_max = 0.25 * cloud.inradius
    if r_max < r_min * 10 ** min_decades:
        r_max = min(r_min * 10 ** min_decades, r_max_cap * cloud.inradius)
    return r_min, r_max


@dataclass
class NormalizedCoordinate:
    scale: float
    bound: float
    bounds_by_range: list  # (upper radius, bound over [r_min, upper])

    def to_dict(self) -> dict:
        return {"lambda": self.scale, "bound": self.bound,
                "bounds_by_range": [[r, b] for r, b in self.bounds_by_range]}


def normalize_coordinate(fit: LogFit, f: Callable | None = None, n_points: int = CIRCLE_POINTS) -> NormalizedCoordinate:
    """Scale w = lambda z with lambda = sqrt(C).

    With ``f`` given, reports max |f/C + log|w|| over the circles of the fitted
    profile, for the full range and for ranges shrinking towards r_min.
    """
    if not fit.C > 0:
        raise ValueError("normalisation needs C > 0")
    lam = math.sqrt(fit.C)
    if f is None:
        return NormalizedCoordinate(lam, math.nan, [])
    th = 2 * np.pi * np.arange(n_points) / n_points
    radii = np.sort(fit.profile.radii[np.isfinite(fit.profile.averages)])
    per_r = []
    for r in radii:
        vals = f(r * np.column_stack([np.cos(th), np.sin(th)]))
        vals = vals[np.isfinite(vals)]
        per_r.append(float(np.max(np.abs(vals / fit.C + math.log(lam * r)))) if len(vals) else math.nan)
    per_r = np.array(per_r)
    by_range = [(float(radii[k]), float(np.nanmax(per_r[: k + 1]))) for k in range(len(radii) - 1, -1, -1)]
    return NormalizedCoordinate(lam, by_range[0][1], by_range)


# ---------------------------------------------------- metric identity checks


def _flux_gradient(field_: PotentialField, x, radius: float, n_points: int = 256) -> np.ndarray:
    """Disc averages of (v_x, v_y) from boundary values of v (Green's theorem).

    Independent of the regression: only the piecewise-constant map is sampled.
    """
    th = 2 * np.pi * np.arange(n_points) / n_points
    nrm = np.column_stack([np.cos(th), np.sin(th)])
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    out = np.empty((len(x), 2))
    for k, c in enumerate(x):
        v = field_.v(c + radius * nrm, check=False)
        out[k] = 2.0 / radius * (v[:, None] * nrm).mean(axis=0)
    return out


@dataclass
class MetricIdentityReport:
    n_valid: int
    median_relative: dict
    rank_correlation_ii_v: float
    threshold: float = 0.1

    @property
    def passed(self) -> bool:
        return (self.n_valid > 0 and self.median_relative["det_Df"] <= self.threshold
                and self.median_relative["ii"] <= self.threshold)


def metric_identity_residuals(field_: PotentialField, pts=None, grid_n: int = 40, threshold: float = 0.1) -> MetricIdentityReport:
    """Residuals of the isothermal identities at valid stencils.

    The rows (v_x, v_y) of Df come from the flux route, the Hessian H from the
    regression, so (i) det Df = rho and (ii)-(iv) compare two estimators.  (v)
    is det H - 1.  With a single estimator (ii)-(iv) collapse onto +-(v).
    """
    from .potential_analysis import interior_points

    if pts is None:
        pts = interior_points(2 * field_.r_loc, grid_n, slit_factor=1.0)
    s = field_.hessian_field(pts)
    r = field_.r_loc
    ok = s.valid & (distance_to_boundary(OMEGA_F, pts) > r) & (domains.distance_to_slit(pts) > r)
    H = s.hessians[ok]
    rho = s.rho[ok]
    g = _flux_gradient(field_, pts[ok], r)
    vx, vy = g[:, 0], g[:, 1]
    h11, h12, h22 = H[:, 0, 0], H[:, 0, 1], H[:, 1, 1]
    res = {
        "det_Df": np.abs(vx + vy - rho) / np.abs(rho),
        "ii": np.abs(1 + vx ** 2 - h11 * rho) / np.abs(h11 * rho),
        "iii": np.abs(1 + vy ** 2 - h22 * rho) / np.abs(h22 * rho),
        "iv": np.abs(-1 + vx * vy - h12 * rho) / np.sqrt((1 + vx ** 2) * (1 + vy ** 2)),
        "v": np.abs(h11 * h22 - h12 ** 2 - 1),
    }
    # single-estimator forms, equal to +-(det H - 1) up to rounding
    ii_alg = (1 + (h11 + h12) ** 2) - h11 * rho
    corr = float(spearmanr(np.abs(ii_alg), res["v"]).statistic) if len(rho) > 2 else math.nan
    med = {k: float(np.median(v)) if len(v) else math.nan for k, v in res.items()}
    return MetricIdentityReport(int(ok.sum()), med, corr, threshold)


def algebraic_identities(H) -> dict:
    """Residuals (ii)-(v) for an exact Hessian; all vanish when det H = 1."""
    H = np.asarray(H, dtype=float)
    h11, h12, h22 = H[0, 0], H[0, 1], H[1, 1]
    rho = h11 + 2 * h12 + h22
    return {
        "ii": (1 + (h11 + h12) ** 2) - h11 * rho,
        "iii": (1 + (h12 + h22) ** 2) - h22 * rho,
        "iv": (-1 + (h11 + h12) * (h12 + h22)) - h12 * rho,
        "v": h11 * h22 - h12 ** 2 - 1,
        "det_Df": np.linalg.det(np.array([[1, -1], [h11 + h12, h12 + h22]])) - rho,
    }


# ------------------------------------------------------------------- blow-up


@dataclass
class BlowupReport:
    trace_fraction: float
    identity_median: float
    radii: np.ndarray
    trace_averages: np.ndarray
    tol_blow: float = TOL_BLOW

    @property
    def trace_increasing(self) -> bool:
        # radii are decreasing, so averages must strictly increase
        return bool(np.all(np.diff(self.trace_averages) > 0))

    @property
    def passed(self) -> bool:
        return self.trace_fraction >= 0.99 and self.identity_median <= 0.15 and self.trace_increasing


def blowup_identity(H) -> np.ndarray:
    """1 - (-(H11 - H22)^2 / 4 + rho (H11 + H22) / 2 - rho^2 / 4), i.e. 1 - det H."""
    H = np.asarray(H, dtype=float).reshape(-1, 2, 2)
    a, b, c = H[:, 0, 0], H[:, 0, 1], H[:, 1, 1]
    rho = a + 2 * b + c
    return 1 - (-0.25 * (a - c) ** 2 + 0.5 * rho * (a + c) - 0.25 * rho ** 2)


def blowup_check(cloud: ConformalCloud, radii, tol_blow: float = TOL_BLOW) -> BlowupReport:
    ok = cloud.valid
    H = cloud.hessians[ok]
    tr = cloud.trace[ok]
    rho = cloud.rho[ok]
    frac = float(np.mean(tr >= 2 / rho - tol_blow))
    ident = float(np.median(np.abs(blowup_identity(H))))
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    f = cloud.interpolant(cloud.trace)
    avg = np.array([circle_average(f, (0.0, 0.0), r)[0] for r in radii])
    return BlowupReport(frac, ident, radii, avg, tol_blow)


# ------------------------------------------------------------- symmetries


@dataclass
class ConformalSymmetryReport:
    rho_R: float
    rho_A: float
    v_A: float
    rho_H: float
    n_pairs: int
    limit: float = 3.0

    @property
    def passed(self) -> bool:
        vals = [self.rho_R, self.rho_A, self.v_A] + ([] if math.isnan(self.rho_H) else [self.rho_H])
        return max(vals) <= self.limit


def symmetry_residuals(field_: PotentialField, cloud: ConformalCloud | None = None,
                       grid_n: int = 40) -> ConformalSymmetryReport:
    """Median scaled gaps for rho = rho o R, rho = rho o A, v = -v o A and,
    given a cloud, rho o H = rho in the image plane.

    rho gaps are divided by the combined regression standard error of the pair;
    the v gap by the site spacing, since v is piecewise constant.
    """
    r = field_.r_loc
    pts = grid_points(OMEGA_F, grid_n)
    far = (domains.distance_to_slit(pts) > 2 * r) & (distance_to_boundary(OMEGA_F, pts) > r)
    pts = pts[far]
    aa = domains.A.apply_many(pts)
    s0 = field_.hessian_field(pts)
    sr = field_.hessian_field(pts[:, ::-1])
    sa = field_.hessian_field(aa)

    def score(s1):
        ok = s0.valid & s1.valid
        se = np.hypot(s0.rho_se[ok], s1.rho_se[ok])
        return float(np.median(np.abs(s0.rho[ok] - s1.rho[ok]) / se)), int(ok.sum())

    rho_r, n_r = score(sr)
    rho_a, n_a = score(sa)
    v_a = float(np.median(np.abs(field_.v(aa, check=False) + field_.v(pts)))) / field_.spacing
    rho_h = math.nan
    if cloud is not None:
        f = cloud.interpolant(cloud.rho)
        ok = cloud.valid & np.isfinite(cloud.rho_se)
        z = cloud.uv[ok]
        zc = z * np.array([1.0, -1.0])
        a, b = f(z), f(zc)
        se = math.sqrt(2) * cloud.rho_se[ok]
        good = np.isfinite(a) & np.isfinite(b)
        rho_h = float(np.median(np.abs(a[good] - b[good]) / se[good]))
    return ConformalSymmetryReport(rho_r, rho_a, v_a, rho_h, min(n_r, n_a))


@dataclass
class CrossDerivativeReport:
    median_ratio_1: float
    median_ratio_2: float
    n_points: int
    limit: float = 3.0

    @property
    def passed(self) -> bool:
        return max(self.median_ratio_1, self.median_ratio_2) <= self.limit


def cross_derivative_symmetry(field_: PotentialField, grid_n: int = 24, base_n: int = 120) -> CrossDerivativeReport:
    """Check d_y H11 = d_x H12 and d_y H12 = d_x H22 on the regression field.

    The Hessian field is sampled on a fine grid and each entry regressed
    linearly over a disc of radius r_loc; residuals are scaled by the standard
    error of the slope difference.
    """
    r = field_.r_loc
    base = grid_points(OMEGA_F, base_n)
    s = field_.hessian_field(base)
    P = base[s.valid]
    Hs = s.hessians[s.valid]
    tree = cKDTree(P)
    centres = grid_points(OMEGA_F, grid_n)
    keep = (distance_to_boundary(OMEGA_F, centres) > 2.5 * r) & (domains.distance_to_slit(centres) > 3.5 * r)
    r1, r2 = [], []
    for c in centres[keep]:
        idx = tree.query_ball_point(c, r)
        if len(idx) < 8:
            continue
        X = np.column_stack([np.ones(len(idx)), P[idx] - c])
        Y = np.column_stack([Hs[idx, 0, 0], Hs[idx, 0, 1], Hs[idx, 1, 1]])
        coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
        res = Y - X @ coef
        s2 = (res ** 2).sum(axis=0) / max(len(idx) - 3, 1)
        XtXi = np.linalg.inv(X.T @ X)
        # d_y H11 - d_x H12 and d_y H12 - d_x H22
        d1 = coef[2, 0] - coef[1, 1]
        d2 = coef[2, 1] - coef[1, 2]
        se1 = math.sqrt(s2[0] * XtXi[2, 2] + s2[1] * XtXi[1, 1])
        se2 = math.sqrt(s2[1] * XtXi[2, 2] + s2[2] * XtXi[1, 1])
        r1.append(abs(d1) / se1)
        r2.append(abs(d2) / se2)
    return CrossDerivativeReport(float(np.median(r1)), float(np.median(r2)), len(r1))


# ---------------------------------------------------------------- exports


def write_json(obj, path) -> None:
    from .ot_semidiscrete import dumps_fixed
    with open(path, "w") as fh:
        fh.write(dumps_fixed(obj, 12))


def scatter_svg(cloud: ConformalCloud, path, size: int = 480, max_points: int = 6000) -> None:
    """Colour-coded scatter of rho^{-1} over the (u, v)-plane."""
    ok = np.nonzero(cloud.valid)[0]
    if len(ok) > max_points:
        ok = ok[np.linspace(0, len(ok) - 1, max_points).astype(int)]
    uv = cloud.uv[ok]
    val = cloud.rho_inv[ok]
    lo, hi = np.percentile(val, [2, 98])
    t = np.clip((val - lo) / max(hi - lo, 1e-12), 0, 1)
    span = np.abs(uv).max() * 1.05
    px = (uv[:, 0] / span + 1) * size / 2
    py = (1 - uv[:, 1] / span) * size / 2
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    for x, y, c in zip(px, py, t):
        r_, b_ = int(255 * c), int(255 * (1 - c))
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="1.2" fill="rgb({r_},40,{b_})"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
