import itertools
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kiteot import domains
from kiteot import ot_oracle as oo

from conftest import plan_for


def uniform(pts):
    pts = np.asarray(pts, dtype=float)
    return pts, np.full(len(pts), 1.0 / len(pts))


def random_instance(n, m, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.1, 1, n)
    b = rng.uniform(0.1, 1, m)
    return (rng.normal(size=(n, 2)), a / a.sum()), (rng.normal(size=(m, 2)), b / b.sum())


def test_identical_sets_identity_coupling():
    mu = uniform(np.random.default_rng(0).normal(size=(10, 2)))
    plan = oo.solve_exact_lp(mu, mu)
    assert plan.cost == pytest.approx(0, abs=1e-14)
    assert np.allclose(plan.coupling, np.diag(mu[1]))


def test_two_by_two_by_hand():
    plan = oo.solve_exact_lp(uniform([(0, 0), (1, 0)]), uniform([(0, 1), (1, 1)]))
    assert plan.cost == pytest.approx(0.5, abs=1e-14)
    assert np.allclose(plan.coupling, np.diag([0.5, 0.5]))


def test_eight_by_eight_matches_permutation_enumeration():
    rng = np.random.default_rng(8)
    x, y = rng.uniform(size=(8, 2)), rng.uniform(size=(8, 2))
    C = 0.5 * ((x[:, None] - y[None]) ** 2).sum(axis=2)
    brute = min(C[np.arange(8), list(p)].sum() for p in itertools.permutations(range(8))) / 8
    assert oo.solve_exact_lp(uniform(x), uniform(y)).cost == pytest.approx(brute, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 20), st.integers(2, 20), st.integers(0, 10**6))
def test_lp_plan_invariants(n, m, seed):
    mu, nu = random_instance(n, m, seed)
    plan = oo.solve_exact_lp(mu, nu)
    assert np.all(plan.coupling >= 0)
    assert plan.marginal_error() <= oo.MARGINAL_TOL
    assert plan.support_size <= n + m - 1
    assert oo.cyclical_monotonicity(plan, 1000, seed) >= -1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10**6), st.sampled_from([1e-1, 1e-2, 1e-3]))
def test_lp_never_above_sinkhorn(n, seed, eps):
    mu, nu = random_instance(n, n + 1, seed)
    lp = oo.solve_exact_lp(mu, nu)
    sk = oo.solve_sinkhorn(mu, nu, eps)
    assert sk.marginal_error() <= 1e-12
    assert lp.cost <= sk.cost + 1e-12


def test_sinkhorn_eight_by_eight_close_to_lp():
    mu, nu = random_instance(8, 8, 3)
    lp = oo.solve_exact_lp(mu, nu)
    sk = oo.solve_sinkhorn(mu, nu, 1e-3)
    assert abs(sk.cost - lp.cost) <= 1e-3


def test_sinkhorn_marginals_without_rounding():
    mu, nu = random_instance(8, 8, 4)
    sk = oo.solve_sinkhorn(mu, nu, 1e-2, tol=1e-9, round_marginals=False)
    assert np.abs(sk.coupling.sum(axis=1) - mu[1]).max() <= 1e-9


def test_sinkhorn_identical_sets_cost_vanishes():
    mu = uniform([(x, y) for x in range(3) for y in range(2)])
    costs = [oo.solve_sinkhorn(mu, mu, e).cost for e in (1e-1, 1e-2, 1e-3)]
    assert costs[0] >= costs[1] - 1e-15 and costs[1] >= costs[2] - 1e-15
    assert costs[2] <= 1e-6
    assert np.argmax(oo.solve_sinkhorn(mu, mu, 1e-3).coupling, axis=1).tolist() == list(range(6))


def test_oracle_errors():
    mu, nu = random_instance(4, 4, 0)
    with pytest.raises(oo.InfeasibleError):
        oo.solve_exact_lp(mu, (nu[0], nu[1] * 2))
    with pytest.raises(ValueError):
        oo.solve_exact_lp(uniform(np.zeros((300, 2))), uniform(np.zeros((300, 2))))
    with pytest.raises(ValueError):
        oo.solve_sinkhorn(mu, nu, 0.0)
    with pytest.raises(oo.UnderflowError):
        oo.solve_sinkhorn(mu, nu, 1e-4, tol=1e-15, max_iters=1, anneal=False)


# -- cross-validation against the semi-discrete solver ------------------------


def _kite_second_moment(site):
    # exact for quadratics: edge-midpoint rule on each fan triangle
    v = [tuple(map(F, p)) for p in domains.OMEGA.vertices]
    s = tuple(map(F, site))
    total = F(0)
    for i in range(1, len(v) - 1):
        a, b, c = v[0], v[i], v[i + 1]
        area = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) / 2
        mids = [((p[0] + q[0]) / 2, (p[1] + q[1]) / 2) for p, q in ((a, b), (b, c), (c, a))]
        total += area * sum((m[0] - s[0]) ** 2 + (m[1] - s[1]) ** 2 for m in mids) / 3
    return total / 2


def test_single_site_cost_analytic():
    site = (F(1, 10), F(-1, 5))
    exact = float(_kite_second_moment(site))
    assert oo.single_site_cost(site) == pytest.approx(exact, abs=1e-15)


def test_n1_cross_validation_is_analytic():
    from kiteot import ot_semidiscrete as sd
    site = np.array([[0.1, -0.2]])
    plan = sd.solve(sd.TargetDiscretization(site, np.array([1 / 3])))
    exact = float(_kite_second_moment((F(1, 10), F(-1, 5))))
    assert plan.transport_cost() == pytest.approx(exact, abs=1e-14)
    cv = oo.cross_validate(plan, 16)
    assert cv.lp_cost + cv.quadrature_defect == pytest.approx(exact, abs=1e-14)
    assert cv.corrected_gap <= 1e-12


def test_cross_validate_64x64():
    cv = oo.cross_validate(plan_for(64), 64, seed=0)
    assert cv.relative_gap <= 0.02


def test_cross_validate_16x16_baseline():
    # recorded at first run; the quadrature error at m = 16 dominates
    cv = oo.cross_validate(plan_for(16), 16, seed=0)
    assert cv.relative_gap == pytest.approx(0.05562110708160006, rel=1e-6)


@pytest.mark.xfail(strict=True, reason="16-point source quadrature gives a 5.3-6.0% gap; 2% needs m >= 64")
def test_cross_validate_16x16_within_two_percent():
    assert oo.cross_validate(plan_for(16), 16, seed=0).relative_gap <= 0.02


def test_gap_shrinks_with_quadrature_size():
    gaps = [oo.cross_validate(plan_for(16), m, seed=0).relative_gap for m in (16, 64, 256)]
    assert gaps == pytest.approx([0.05562110708160006, 0.013744411946536934, 0.0022219066326855273], rel=1e-6)
    assert gaps[1] <= 1.1 * gaps[0] and gaps[2] <= 1.1 * gaps[1]


def test_source_quadrature_masses():
    q = oo.source_quadrature(32, seed=2)
    assert q.masses.sum() == pytest.approx(1 / 3, abs=1e-12)
    assert np.all(q.variances > 0)
