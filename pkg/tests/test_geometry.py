import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from byzgrad.errors import DimMismatch, EmptyIntersection, Infeasible, TooFewNeighbors
from byzgrad.geometry import (
    HullSystem,
    PointSet,
    family_positions,
    feasibility_lp,
    hull_membership,
    interval_pick,
    intersect_intervals,
    pick_intersection_point,
    pigeonhole_excess,
    subset_families,
)
from byzgrad.simplex import phase_one

from oracles import lemma4_instance, scipy_feasible


def _system(values, d, beta, ids=None):
    ids = list(range(len(values))) if ids is None else ids
    a_sets, b_sets = subset_families(ids, d, beta)
    index = {a: k for k, a in enumerate(ids)}
    out = []
    for group in b_sets:
        pts = np.stack([np.asarray(values)[[index[m] for m in b]] for b in group]).reshape(len(group), -1, d)
        out.append(HullSystem(pts, np.array(group)))
    return out


# -- subset families --------------------------------------------------------


def test_subset_family_sizes():
    a, b = subset_families([3, 1, 7, 5], 1, 1)
    assert len(a) == 4 and all(len(x) == 3 for x in a)
    assert all(len(g) == 3 and all(len(s) == 2 for s in g) for g in b)
    assert a[0] == (1, 3, 5)  # sorted ids, lexicographic
    a, b = subset_families([0, 1, 2], 1, 1)
    assert len(a) == 1 and len(b[0]) == 3


def test_beta_zero_families_are_singletons():
    a, b = subset_families([4, 2, 9], 2, 0)
    assert a == [(2,), (4,), (9,)]
    assert b == [[(2,)], [(4,)], [(9,)]]


def test_too_few_neighbors():
    with pytest.raises(TooFewNeighbors):
        subset_families([0, 1], 1, 1)
    with pytest.raises(TooFewNeighbors):
        subset_families(list(range(6)), 2, 2)


def test_pigeonhole_identity():
    for d in range(11):
        for beta in range(11):
            assert pigeonhole_excess(d, beta) == 1


def test_family_positions_counts():
    import math

    for size, d, beta in [(5, 1, 1), (7, 2, 1), (9, 1, 2)]:
        a, b = family_positions(size, d, beta)
        assert len(a) == math.comb(size, (d + 1) * beta + 1)
        assert b.shape == (len(a), math.comb((d + 1) * beta + 1, d * beta + 1), d * beta + 1)


# -- membership -------------------------------------------------------------


def test_membership_examples():
    ps = PointSet(np.array([[0.0], [2.0]]), (0, 1))
    m = hull_membership([1.0], ps)
    assert m.inside and np.allclose(m.weights, [0.5, 0.5])
    tri = PointSet(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), (0, 1, 2))
    assert not hull_membership([1.0, 1.0], tri)
    m = hull_membership([1.0, 0.0], tri)
    assert m.inside and np.allclose(m.weights, [0, 1, 0])
    with pytest.raises(DimMismatch):
        hull_membership([1.0], tri)


def test_membership_agrees_with_scipy():
    rng = np.random.default_rng(4)
    for _ in range(300):
        d = int(rng.integers(1, 4))
        k = int(rng.integers(1, 7))
        pts = rng.normal(size=(k, d))
        x = rng.normal(size=d) * 0.7
        m = hull_membership(x, PointSet(pts, tuple(range(k))))
        ref = scipy_feasible([x[None, :], pts])
        assert m.inside == ref
        if m.inside:
            assert (m.weights >= -1e-12).all() and abs(m.weights.sum() - 1) < 1e-9
            assert np.abs(m.weights @ pts - x).max() <= 1e-8


# -- intersections ----------------------------------------------------------


def test_interval_examples():
    hs = HullSystem(np.array([[[0.0], [1.0]], [[0.0], [2.0]], [[1.0], [2.0]]]), np.array([[0, 1], [0, 2], [1, 2]]))
    assert intersect_intervals(hs) == (1.0, 1.0)
    assert pick_intersection_point(hs).point[0] == 1.0
    assert feasibility_lp(hs).point[0] == pytest.approx(1.0, abs=1e-9)
    one = HullSystem(np.array([[[-2.0], [5.0]]]), np.array([[0, 1]]))
    assert intersect_intervals(one) == (-2.0, 5.0)
    same = HullSystem(np.array([[[1.0], [3.0]]] * 3), np.array([[0, 1]] * 3))
    assert intersect_intervals(same) == (1.0, 3.0)


def test_three_values_pick_median():
    (hs,) = _system([[0.0], [1.0], [2.0]], 1, 1)
    assert pick_intersection_point(hs).point[0] == 1.0
    assert pick_intersection_point(hs, "lp").point[0] == pytest.approx(1.0)


def test_identical_points_pick_that_point():
    p = np.array([0.3, -1.2])
    (hs,) = _system([p] * 4, 2, 1)
    cert = pick_intersection_point(hs)
    assert np.allclose(cert.point, p) and cert.is_valid(hs)


def test_disjoint_segments_are_infeasible():
    hs = HullSystem(np.array([[[0.0], [1.0]], [[2.0], [3.0]]]), np.array([[0, 1], [2, 3]]))
    with pytest.raises(EmptyIntersection):
        intersect_intervals(hs)
    with pytest.raises(Infeasible) as info:
        feasibility_lp(hs)
    assert info.value.max_residual > 0
    planar = HullSystem(
        np.array([[[0.0, 0.0], [1.0, 0.0]], [[0.0, 2.0], [1.0, 2.0]]]), np.array([[0, 1], [2, 3]])
    )
    with pytest.raises(Infeasible):
        feasibility_lp(planar)


def test_planar_pick_lies_in_every_triangle():
    rng = np.random.default_rng(8)
    for _ in range(50):
        pts = rng.normal(size=(4, 2))
        (hs,) = _system(pts, 2, 1)
        cert = pick_intersection_point(hs)
        assert cert.is_valid(hs)
        for h in range(hs.hull_count):
            assert hull_membership(cert.point, hs.hull(h), 1e-8)


def test_planar_intersection_matches_rejection_sampling():
    # the common region found by sampling contains points iff the LP succeeds,
    # and the LP point lies in the sampled region's bounding box
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(4, 2))
    (hs,) = _system(pts, 2, 1)
    cert = pick_intersection_point(hs)
    samples = rng.uniform(pts.min(0), pts.max(0), size=(4000, 2))
    inside = [s for s in samples if all(hull_membership(s, hs.hull(h), 0.0) for h in range(hs.hull_count))]
    if inside:
        box = np.array(inside)
        pad = 0.3
        assert (cert.point >= box.min(0) - pad).all() and (cert.point <= box.max(0) + pad).all()


def test_lp_point_inside_interval_for_1d():
    rng = np.random.default_rng(21)
    for _ in range(200):
        beta = int(rng.integers(1, 3))
        vals = rng.normal(size=(2 * beta + 1, 1)) * 10
        (hs,) = _system(vals, 1, beta)
        lo, hi = intersect_intervals(hs)
        y = pick_intersection_point(hs, "lp").point[0]
        assert lo - 1e-8 <= y <= hi + 1e-8


def test_interval_pick_matches_certified_pick():
    rng = np.random.default_rng(2)
    for _ in range(100):
        vals = rng.normal(size=7)
        a, b = family_positions(7, 1, 2)
        for j in range(len(a)):
            hs = HullSystem(vals[b[j]][:, :, None], b[j])
            assert interval_pick(vals, b[j]) == pick_intersection_point(hs, "midpoint").point[0]


@pytest.mark.parametrize("d,beta", [(1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (3, 2)])
def test_helly_nonemptiness_random(d, beta):
    rng = np.random.default_rng(100 * d + beta)
    for _ in range(60 if d == 3 and beta == 2 else 150):
        ids, vals, _bad = lemma4_instance(rng, d, beta)
        for hs in _system(vals, d, beta, ids):
            cert = pick_intersection_point(hs)
            assert cert.is_valid(hs)


@given(st.integers(1, 3), st.integers(0, 2), st.integers(0, 2**32 - 1))
def test_certificates_sound_property(d, beta, seed):
    rng = np.random.default_rng(seed)
    ids, vals, _ = lemma4_instance(rng, d, beta, n_max=6)
    for hs in _system(vals, d, beta, ids):
        cert = pick_intersection_point(hs)
        scale = max(1.0, float(np.abs(hs.points).max()))
        assert (cert.residuals(hs) <= 1e-8 * scale).all()
        assert np.allclose(cert.weights.sum(axis=1), 1.0, atol=1e-9)


def test_pick_is_deterministic():
    rng = np.random.default_rng(1)
    vals = rng.normal(size=(4, 2))
    (hs,) = _system(vals, 2, 1)
    a, b = pick_intersection_point(hs), pick_intersection_point(hs)
    assert np.array_equal(a.point, b.point) and np.array_equal(a.weights, b.weights)


# -- simplex ----------------------------------------------------------------


def test_phase_one_against_scipy():
    from scipy.optimize import linprog

    rng = np.random.default_rng(31)
    for _ in range(300):
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 8))
        a = rng.normal(size=(m, n))
        if rng.random() < 0.5:
            b = a @ rng.random(n)  # feasible by construction
        else:
            b = rng.normal(size=m)
        res = phase_one(a, b)
        ref = linprog(np.zeros(n), A_eq=a, b_eq=b, bounds=[(0, None)] * n, method="highs")
        assert res.feasible(1e-8) == (ref.status == 0)
        if res.feasible(1e-8):
            assert (res.x >= -1e-12).all()
            assert np.abs(a @ res.x - b).max() < 1e-7


def test_phase_one_degenerate_duplicates():
    a = np.array([[1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0]])
    res = phase_one(a, np.array([1.0, 0.5]))
    assert res.feasible(1e-12)
    assert np.allclose(a @ res.x, [1.0, 0.5])
