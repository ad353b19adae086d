import itertools
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kiteot import domains
from kiteot import simplex_charts as sc
from kiteot.geometry import ConvexPolygon, polygon_area

from conftest import field_for

V = sc.VERTICES
M = [tuple(F(x) for x in v) for v in [(1, 1, 1), (-3, 1, 1), (1, -3, 1), (1, 1, -3)]]
N = [tuple(F(x) for x in v) for v in [(-1, -1, -1), (1, 0, 0), (0, 1, 0), (0, 0, 1)]]
ALL_CHARTS = [sc.Chart(kind, i, j) for kind in "pq" for i in range(4) for j in range(4) if i != j]


def ip(a, b):
    return sum(x * y for x, y in zip(a, b))


def sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def mid(*pts):
    return tuple(sum(c) / len(pts) for c in zip(*pts))


def q_inv_direct(i, j, n):
    k, l = [t for t in range(4) if t not in (i, j)]
    return (ip(sub(M[k], M[j]), n) / 4, ip(sub(M[l], M[j]), n) / 4)


def random_star_points(chart, count, rng):
    verts = M if chart.kind == "p" else N
    out = []
    for _ in range(count):
        f = int(rng.choice(chart.domain_faces))
        w = rng.integers(0, 30, size=3)
        if w.sum() == 0:
            w[0] = 1
        lam = [F(int(t), int(w.sum())) for t in w]
        tri = [verts[t] for t in range(4) if t != f]
        out.append(tuple(sum(l * p[c] for l, p in zip(lam, tri)) for c in range(3)))
    return out


# -- vertex data -------------------------------------------------------------


def test_vertex_set_matches_definition():
    assert V.m == tuple(M) and V.n == tuple(N)
    assert V.m_(2, 3) == mid(M[2], M[3])
    assert V.n_(0, 1, 3) == mid(N[0], N[1], N[3])


def test_pairing_table():
    # <m_i, n_j> = -3 on the diagonal and 1 off it
    table = V.pairing_matrix()
    for i, j in itertools.product(range(4), repeat=2):
        assert table[i][j] == (-3 if i == j else 1)


def test_barycentric_round_trip():
    rng = np.random.default_rng(0)
    for p in random_star_points(sc.Chart("q", 0, 1), 30, rng):
        assert V.from_bary_B(V.bary_B(p)) == p
        assert V.on_B(p)
    for p in random_star_points(sc.Chart("p", 2, 3), 30, rng):
        assert V.from_bary_A(V.bary_A(p)) == p
        assert V.on_A(p)
    assert not V.on_B((F(0), F(0), F(0)))


# -- chart examples -----------------------------------------------------------


def test_q01_of_n01_is_half_half():
    n01 = mid(N[0], N[1])
    assert sc.Q01.inverse(n01) == (F(1, 2), F(1, 2))
    assert q_inv_direct(0, 1, n01) == (F(1, 2), F(1, 2))


def test_q01_maps_kite_vertices():
    got = [sc.chart_inverse(sc.Q01, p) for p in (N[0], mid(N[0], N[1], N[3]), N[1], mid(N[0], N[1], N[2]))]
    assert got == [(0, 0), (F(1, 3), 0), (1, 1), (0, F(1, 3))]
    assert ConvexPolygon.hull(got).vertices == domains.OMEGA_UNSHIFTED.vertices
    assert polygon_area(ConvexPolygon.hull(got)) == F(1, 3)


def test_q01_other_vertices():
    assert sc.Q01.inverse(N[2]) == (-1, 0)
    assert sc.Q01.inverse(N[3]) == (0, -1)


def test_p10_vertex_images():
    assert [sc.P10.inverse(M[t]) for t in (1, 2, 3, 0)] == [(0, 0), (4, 0), (0, 4), (-4, -4)]


@pytest.mark.parametrize("chart", ALL_CHARTS, ids=lambda c: c.name)
def test_round_trip_exact_on_100_points(chart):
    rng = np.random.default_rng(hash(chart.name) % 2**32)
    for p in random_star_points(chart, 100, rng):
        xy = sc.chart_inverse(chart, p)
        assert sc.chart_forward(chart, xy) == p
        assert chart.inverse(chart.forward(xy)) == xy


@pytest.mark.parametrize("chart", ALL_CHARTS, ids=lambda c: c.name)
def test_charts_preserve_volume(chart):
    # every face of the boundary has the same lattice volume; its image area is fixed per side
    areas = {chart.face_area(f) for f in chart.domain_faces}
    assert areas == ({F(8)} if chart.kind == "p" else {F(1, 2)})


def test_q_chart_agrees_with_direct_formula():
    rng = np.random.default_rng(3)
    for i, j in itertools.permutations(range(4), 2):
        c = sc.Chart("q", i, j)
        for p in random_star_points(c, 10, rng):
            assert c.inverse(p) == q_inv_direct(i, j, p)


def test_chart_domain_errors():
    with pytest.raises(sc.ChartDomainError):
        sc.Q01.inverse(mid(N[1], N[2], N[3]))  # face 0, not in Star(n_0)
    with pytest.raises(sc.ChartDomainError):
        sc.Q01.forward((F(5), F(5)))
    with pytest.raises(sc.ChartDomainError):
        sc.Q01.inverse((F(0), F(0), F(0)))  # interior of the dual simplex
    with pytest.raises(ValueError):
        sc.Chart("q", 1, 1)
    with pytest.raises(ValueError):
        sc.Chart("r", 0, 1)


def test_float_batch_matches_exact():
    rng = np.random.default_rng(4)
    pts = random_star_points(sc.Q02, 50, rng)
    exact = np.array([sc.Q02.inverse(p) for p in pts], dtype=float)
    fl = sc.Q02.inverse_many(np.array(pts, dtype=float))
    assert np.allclose(exact, fl, atol=1e-14)
    assert np.allclose(sc.Q02.forward_many(fl), np.array(pts, dtype=float), atol=1e-12)


# -- transitions ---------------------------------------------------------------


def test_transition_q01_to_q02_on_K():
    br = sc.transition_matrix(sc.Q01, sc.Q02, sc.K_REGION)
    assert br.matrix == ((F(-1), F(0)), (F(-1), F(1)))
    assert all(isinstance(x, F) for row in br.matrix for x in row)
    assert br.offset == (0, 0)


def test_transition_identity():
    br = sc.transition_matrix(sc.Q01, sc.Q01, sc.SOURCE_TRIANGLES["Q1uQ2"])
    assert br.matrix == ((1, 0), (0, 1)) and br.offset == (0, 0)


def test_K_lies_in_face_tau2():
    for v in sc.K_REGION.vertices:
        assert V.bary_B(sc.Q01.forward(v))[2] == 0


def test_functional_identity_on_K():
    samples = sc.k_functional_samples(50)
    assert len(samples) == 50
    m12 = sub(M[1], M[2])
    for x, lhs, rhs in samples:
        assert lhs == ip(m12, sc.Q01.forward(x))
        assert lhs == -4 * x[0] == rhs


def test_chain_matrix_is_transpose_of_transition():
    br = sc.transition_matrix(sc.Q01, sc.Q02, sc.K_REGION)
    assert sc.CHAIN_MATRIX == tuple(zip(*br.matrix))


@pytest.mark.parametrize("i,j,jj", [(i, j, jj) for i in range(4) for j in range(4) for jj in range(4)
                                    if len({i, j, jj}) == 3])
def test_transitions_are_unimodular(i, j, jj):
    a, b = sc.Chart("q", i, j), sc.Chart("q", i, jj)
    for f in a.domain_faces:
        br = sc.transition_matrix(a, b, a.face_image(f))
        (p, q), (r, s) = br.matrix
        assert abs(p * s - q * r) == 1


def test_transition_errors():
    # face 1 of Star(n_0) is not in Star(n_1)
    with pytest.raises(sc.ChartOverlapError):
        sc.transition_matrix(sc.Q01, sc.Chart("q", 1, 0), sc.Q01.face_image(1))
    with pytest.raises(sc.ChartOverlapError):
        sc.transition_matrix(sc.Q01, sc.P10, sc.K_REGION)
    # a region straddling two faces whose transition bends there
    with pytest.raises(sc.ChartOverlapError):
        sc.transition_matrix(sc.Q01, sc.Chart("q", 1, 0), [(F(1, 10), F(0)), (F(1, 2), F(1, 2)), (F(0), F(1, 10))])


# -- region pairing --------------------------------------------------------------


def test_region_pairing_matches_centroid_oracle():
    # the grid average of a bilinear pairing equals the pairing of grid barycentres = centroids
    oracle = [[ip(mid(*p), mid(*q)) for p in sc.P_PIECES] for q in sc.Q_PIECES]
    rep = sc.region_pairing()
    assert [[F(x) for x in row] for row in rep["matrix"]] == oracle
    assert all(oracle[t][t] == F(61, 81) for t in range(4))
    assert rep["passed"] and rep["unique_assignment"] and all(rep["rows_ok"])


def test_region_pairing_is_bijection():
    S = [[F(x) for x in row] for row in sc.region_pairing()["matrix"]]
    best = [max(range(4), key=lambda s: S[t][s]) for t in range(4)]
    assert sorted(best) == [0, 1, 2, 3]


def test_exact_image_triangles():
    got = sc.exact_image_triangles()
    for key, target in sc.TARGET_TRIANGLES.items():
        assert ConvexPolygon.hull(got[key]).vertices == target.vertices
    assert set(got["RK"]) == {(0, 4), (0, F(16, 3)), (2, 2)}
    assert set(got["K"]) == {(4, 0), (F(16, 3), 0), (2, 2)}


# -- discrete functions ----------------------------------------------------------


def test_sample_grid_points_on_boundary():
    g = sc.SampleGrid.uniform("B", 5)
    for idx in range(0, len(g), 7):
        p = g.exact_point(idx)
        assert V.on_B(p)
        assert np.allclose(np.array(p, dtype=float), g.points[idx])
    assert len(sc.SampleGrid.uniform("A", 36)) == 2594
    with pytest.raises(ValueError):
        sc.SampleGrid("A", np.array([[1, 1, 1, 1]]), 4)


def test_c_transform_of_zero_at_n1():
    f = sc.DiscreteFunctionOnA.on_grid(4, 0.0)
    fc = sc.c_transform(f)
    d = fc.as_dict()
    assert d[(0, 4, 0, 0)] == 1.0
    # oracle: max over A-samples of <m, n_1>, by direct enumeration of the vertices
    assert max(ip(m, N[1]) for m in M) == 1
    assert sorted(ip(m, N[1]) for m in M) == [-3, 1, 1, 1]


def test_c_subgradient_of_zero_at_n1_vertices():
    psi = sc.DiscreteFunctionOnB.on_grid(4, 0.0)
    sub = sc.c_subgradient(psi, N[1])
    vertex_rows = {tuple(r) for r in sub.bary if sorted(r) == [0, 0, 0, 4]}
    assert vertex_rows == {(4, 0, 0, 0), (0, 0, 4, 0), (0, 0, 0, 4)}


def _random_fn(side, k, seed):
    rng = np.random.default_rng(seed)
    cls = sc.DiscreteFunctionOnA if side == "A" else sc.DiscreteFunctionOnB
    g = sc.SampleGrid.uniform(side, k)
    return cls(g, rng.normal(size=len(g)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["A", "B"]))
def test_cc_is_below_and_idempotent(seed, side):
    f = _random_fn(side, 5, seed)
    fcc = sc.c_transform(sc.c_transform(f))
    assert np.all(fcc.values <= f.values + 1e-12)
    f4 = sc.c_transform(sc.c_transform(fcc))
    assert np.allclose(f4.values, fcc.values, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(-5, 5))
def test_constant_shift(seed, k):
    f = _random_fn("A", 4, seed)
    assert np.allclose(sc.c_transform(f + k).values, sc.c_transform(f).values - k, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_order_reversing(seed):
    f = _random_fn("B", 4, seed)
    rng = np.random.default_rng(seed + 1)
    g = type(f)(f.grid, f.values + rng.uniform(0, 1, size=len(f.values)))
    assert np.all(sc.c_transform(f).values >= sc.c_transform(g).values - 1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(sc.PERMUTATIONS))
def test_c_transform_commutes_with_permutations(seed, perm):
    f = _random_fn("A", 4, seed)
    lhs = sc.c_transform(f.pull_back(perm)).as_dict()
    rhs = sc.c_transform(f).pull_back(perm).as_dict()
    assert lhs.keys() == rhs.keys()
    assert all(abs(lhs[k] - rhs[k]) <= 1e-12 for k in lhs)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(sc.PERMUTATIONS), st.integers(0, 10**4))
def test_c_subgradient_commutes_with_permutations(seed, perm, which):
    psi = _random_fn("B", 4, seed)
    idx = which % len(psi.grid)
    b = psi.grid.bary[idx]
    n = psi.grid.exact_point(idx)
    pb = np.empty_like(b)
    pb[list(perm)] = b
    n_perm = V.from_bary_B([F(int(t), 4) for t in pb])
    lhs = {tuple(r) for r in sc.c_subgradient(psi.pull_back(perm), n_perm).bary}
    rhs = {tuple(r) for r in sc.c_subgradient(psi, n).permuted(perm).bary}
    assert lhs == rhs


def test_kite_permutation_targets_n01_kite():
    g = sc.SampleGrid.uniform("B", 12)
    b = g.weights
    perm = sc.kite_permutation(b)
    bp = np.empty_like(b)
    np.put_along_axis(bp, perm, b, axis=1)
    assert np.all(bp[:, 0] >= bp[:, 1]) and np.all(bp[:, 1] >= bp[:, 3]) and np.all(bp[:, 2] == 0)
    assert np.all(np.sort(perm, axis=1) == np.arange(4))


def test_grid_csv(tmp_path):
    g = sc.SampleGrid.uniform("A", 3)
    sc.grid_csv(g, tmp_path / "g.csv", np.arange(len(g)))
    data = np.loadtxt(tmp_path / "g.csv", delimiter=",", skiprows=1)
    assert data.shape == (len(g), 8)
    assert np.allclose(data[:, 4:7], g.points)


# -- reduction against a solved potential -------------------------------------------


def test_verify_reduction_requires_solution():
    with pytest.raises(sc.MissingSolutionError):
        sc.verify_reduction(None)


@pytest.fixture(scope="module")
def report_2000():
    return sc.verify_reduction(field_for(2000))


def test_verify_reduction_n2000(report_2000):
    assert report_2000.checks() == {k: True for k in report_2000.checks()}


def test_singular_point_image(report_2000):
    sp = report_2000.singular_point
    assert sp["max_distance"] <= 3 * 4 * field_for(2000).spacing


def test_c_subgradient_at_n01_near_m23(report_2000):
    c = report_2000.c_subgradient_n01
    assert c["min_distance_to_m23"] <= c["sample_spacing"]


def test_chain_rule_offset_discriminates(report_2000):
    ch = report_2000.chain_rule
    assert ch["median_error"] <= 1e-5
    assert ch["unit_offset_median_error"] > 1.0
    assert ch["functional_identity_exact"]


def test_lemma_index_convention(report_2000):
    li = report_2000.lemma_index
    assert li["in_domain_p10"] == 1.0
    assert li["in_domain_p01"] == 0.0


def test_report_is_json_ready(report_2000):
    import json
    d = json.loads(json.dumps(report_2000.to_dict()))
    assert d["passed"] is True
