"""Desk-scale discrete transport oracles for validating the semi-discrete solver.

Costs are ``|x - y|^2 / 2`` throughout, matching
:meth:`SemiDiscretePlan.transport_cost`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.special import logsumexp

from . import ot_semidiscrete as sd
from .geometry import ConvexPolygon, polygon_second_moment, sample_uniform

MAX_SIZE = 256
MARGINAL_TOL = 1e-10


class InfeasibleError(ValueError):
    """Source and target masses differ."""


class UnderflowError(FloatingPointError):
    """Sinkhorn produced non-finite potentials."""


@dataclass
class DiscretePlan:
    x: np.ndarray
    mu: np.ndarray
    y: np.ndarray
    nu: np.ndarray
    coupling: np.ndarray
    iterations: int = 0

    @property
    def cost_matrix(self) -> np.ndarray:
        return cost_matrix(self.x, self.y)

    @property
    def cost(self) -> float:
        return float((self.coupling * self.cost_matrix).sum())

    def marginal_error(self) -> float:
        return float(max(np.abs(self.coupling.sum(axis=1) - self.mu).max(),
                         np.abs(self.coupling.sum(axis=0) - self.nu).max()))

    def support(self, rel_tol: float = 1e-12) -> np.ndarray:
        """(i, j) pairs carrying mass."""
        return np.argwhere(self.coupling > rel_tol * self.mu.sum())

    @property
    def support_size(self) -> int:
        return len(self.support())


def cost_matrix(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    return 0.5 * ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)


def _measure(m):
    pts, w = m
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    w = np.asarray(w, dtype=float).reshape(-1)
    if len(pts) != len(w):
        raise ValueError("one mass per point")
    if (w < 0).any():
        raise ValueError("masses must be nonnegative")
    return pts, w


def _check_pair(mu, nu):
    x, a = _measure(mu)
    y, b = _measure(nu)
    if max(len(x), len(y)) > MAX_SIZE:
        raise ValueError(f"oracles are limited to {MAX_SIZE} points per side")
    if abs(a.sum() - b.sum()) > 1e-12 * max(a.sum(), b.sum(), 1.0):
        raise InfeasibleError(f"total masses differ: {a.sum()!r} vs {b.sum()!r}")
    return x, a, y, b


def solve_exact_lp(mu, nu) -> DiscretePlan:
    """Exact optimal coupling of two discrete measures ``(points, masses)``.

    Dual simplex returns a basic solution, so the support has at most
    ``rows + cols - 1`` entries.
    """
    x, a, y, b = _check_pair(mu, nu)
    n, m = len(x), len(y)
    C = cost_matrix(x, y)
    rows = sp.kron(sp.eye(n), np.ones((1, m)))
    cols = sp.kron(np.ones((1, n)), sp.eye(m))
    A_eq = sp.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([a, b * a.sum() / b.sum()])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise InfeasibleError(f"linear program failed: {res.message}")
    P = np.maximum(res.x.reshape(n, m), 0.0)
    return DiscretePlan(x, a, y, b, P, int(getattr(res, "nit", 0)))


def _round_to_marginals(P, a, b):
    """Project an approximate coupling onto the exact transport polytope.

    Scale down over-full rows and columns, then distribute the remaining
    deficit as a rank-one correction; the result is feasible and stays close
    to ``P`` when the marginal errors are small.
    """
    P = P * np.minimum(a / np.maximum(P.sum(axis=1), 1e-300), 1.0)[:, None]
    P = P * np.minimum(b / np.maximum(P.sum(axis=0), 1e-300), 1.0)[None, :]
    ea = a - P.sum(axis=1)
    eb = b - P.sum(axis=0)
    s = ea.sum()
    if s > 0:
        P = P + np.outer(ea, eb) / s
    return P


def solve_sinkhorn(mu, nu, epsilon: float, tol: float = 1e-9, max_iters: int = 200_000,
                   anneal: bool = True, round_marginals: bool = True) -> DiscretePlan:
    """Entropic coupling by log-domain Sinkhorn iterations.

    Solves ``min <P, C> + epsilon * KL(P | a b^T)``.  With ``anneal`` the
    regularization starts at the cost scale and is divided by 2 between warm
    started solves down to ``epsilon``.  ``round_marginals`` applies the
    feasibility rounding so that ``cost`` is the cost of an exact coupling.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x, a, y, b = _check_pair(mu, nu)
    b = b * a.sum() / b.sum()
    C = cost_matrix(x, y)
    la, lb = np.log(a), np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    eps_seq = [epsilon]
    if anneal:
        e = max(float(C.max()), epsilon)
        eps_seq = []
        while e > epsilon:
            eps_seq.append(e)
            e /= 2
        eps_seq.append(epsilon)
    it = 0
    for eps in eps_seq:
        last = eps == epsilon
        for _ in range(max_iters):
            it += 1
            f = -eps * logsumexp((g[None, :] - C) / eps + lb[None, :], axis=1)
            g = -eps * logsumexp((f[:, None] - C) / eps + la[:, None], axis=0)
            if not (np.isfinite(f).all() and np.isfinite(g).all()):
                raise UnderflowError("non-finite Sinkhorn potentials; epsilon too small")
            if it % 10 == 0 or last:
                logP = (f[:, None] + g[None, :] - C) / eps + la[:, None] + lb[None, :]
                err = np.abs(np.exp(logP).sum(axis=1) - a).max()
                if err <= (tol if last else max(tol, 1e-3 * a.max())):
                    break
        else:
            if last:
                raise UnderflowError(f"Sinkhorn did not reach tol={tol} in {max_iters} iterations")
    P = np.exp((f[:, None] + g[None, :] - C) / epsilon + la[:, None] + lb[None, :])
    if round_marginals:
        P = _round_to_marginals(P, a, b)
    return DiscretePlan(x, a, y, b, P, it)


def cyclical_monotonicity(plan: DiscretePlan, n_pairs: int = 1000, seed: int = 0) -> float:
    """Smallest <x - x', y - y'> over sampled pairs of support points."""
    sup = plan.support()
    rng = np.random.default_rng(seed)
    i = rng.integers(len(sup), size=n_pairs)
    j = rng.integers(len(sup), size=n_pairs)
    p, q = sup[i], sup[j]
    dx = plan.x[p[:, 0]] - plan.x[q[:, 0]]
    dy = plan.y[p[:, 1]] - plan.y[q[:, 1]]
    return float((dx * dy).sum(axis=1).min())


# ------------------------------------------------------------ cross-checks


@dataclass
class SourceQuadrature:
    """Points of the source domain with cell-area masses and within-cell variances."""

    points: np.ndarray
    masses: np.ndarray
    variances: np.ndarray  # int |x - c|^2 over each cell

    @property
    def quadrature_defect(self) -> float:
        """Half the within-cell second moment, lost when cells collapse to points."""
        return float(self.variances.sum() / 2)


def source_quadrature(m: int, seed: int = 0, lloyd_iters: int = 30,
                      domain: ConvexPolygon = sd.OMEGA_F) -> SourceQuadrature:
    """``m`` Lloyd-regularized points of ``domain`` with Voronoi-cell masses."""
    rng = np.random.default_rng(seed)
    pts = sample_uniform(domain, m, rng) if m > 1 else np.array([domain.as_array().mean(axis=0)])
    if m > 1:
        pts = sd.lloyd(pts, domain, lloyd_iters)
    d = sd.power_diagram(pts, np.zeros(m), domain)
    # cells have centroids == points only at a Lloyd fixed point, so use centroids
    var = d.second_moments - d.areas * (d.centroids ** 2).sum(axis=1)
    return SourceQuadrature(d.centroids.copy(), d.areas.copy(), var)


@dataclass
class CrossValidation:
    n_sites: int
    m_samples: int
    semidiscrete_cost: float
    lp_cost: float
    quadrature_defect: float

    @property
    def relative_gap(self) -> float:
        return abs(self.lp_cost - self.semidiscrete_cost) / self.semidiscrete_cost

    @property
    def corrected_gap(self) -> float:
        """Gap after adding the within-cell variance back to the LP cost."""
        return abs(self.lp_cost + self.quadrature_defect - self.semidiscrete_cost) / self.semidiscrete_cost

    def to_dict(self) -> dict:
        return {"n_sites": self.n_sites, "m_samples": self.m_samples,
                "semidiscrete_cost": self.semidiscrete_cost, "lp_cost": self.lp_cost,
                "quadrature_defect": self.quadrature_defect, "relative_gap": self.relative_gap,
                "corrected_gap": self.corrected_gap}


def cross_validate(plan: sd.SemiDiscretePlan, m_source_samples: int, seed: int = 0) -> CrossValidation:
    """Compare the semi-discrete cost with the exact LP on a quadrature of the source."""
    q = source_quadrature(m_source_samples, seed)
    nu = (plan.sites, plan.target.masses)
    lp = solve_exact_lp((q.points, q.masses), nu)
    return CrossValidation(len(plan.sites), m_source_samples, plan.transport_cost(), lp.cost,
                           q.quadrature_defect)


def single_site_cost(site, domain: ConvexPolygon = sd.OMEGA_F) -> float:
    """int_domain |x - site|^2 / 2, the transport cost onto one point."""
    return float(polygon_second_moment(domain, about=tuple(site))) / 2
