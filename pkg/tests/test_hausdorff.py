import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anosov_lab.errors import ResolutionError
from anosov_lab.hausdorff import (
    PremetricCloud, critical_beta_at, default_scale_range, dimension_estimate, greedy_cover,
    hausdorff_measure_upper, optimal_cover, optimal_cover_value, outer_measure_axiom_suite,
)
from anosov_lab.limitset import limit_flag_sample

from conftest import preset_ball


def circle(n, rng):
    t = rng.uniform(0, 2 * np.pi, n)
    return np.stack([np.cos(t), np.sin(t)], axis=1)


def cantor(depth):
    x = np.zeros(1)
    for k in range(depth):
        x = np.concatenate([x, x + 2 * 3.0 ** -(k + 1)])
    return np.sort(x)


def naive_cover_sizes(X, scales):
    """Independent farthest-point cover count on a Euclidean sample."""
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    out = []
    for s in scales:
        mind = D[0].copy()
        k = 1
        while mind.max() > s:
            j = int(np.argmax(mind))
            mind = np.minimum(mind, D[j])
            k += 1
        out.append(k)
    return np.array(out)


def test_circle_dimension():
    cloud = PremetricCloud.from_points(circle(20000, np.random.default_rng(1)))
    assert abs(dimension_estimate(cloud).value - 1.0) <= 0.05


def test_circle_chordal_lines():
    pts = circle(20000, np.random.default_rng(2))
    # lines through (cos t, sin t, 1) trace a conic in the projective plane
    lines = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
    assert abs(dimension_estimate(PremetricCloud.from_lines(lines)).value - 1.0) <= 0.05


def test_cantor_dimension():
    cloud = PremetricCloud.from_points(cantor(10))
    assert abs(dimension_estimate(cloud).value - math.log(2) / math.log(3)) <= 0.03


def test_finite_set_dimension_zero():
    rng = np.random.default_rng(3)
    centers = rng.uniform(0, 1, (7, 2))
    X = np.concatenate([c + 1e-6 * rng.standard_normal((40, 2)) for c in centers])
    cloud = PremetricCloud.from_points(X)
    gap = min(np.linalg.norm(a - b) for a, b in itertools.combinations(centers, 2))
    est = dimension_estimate(cloud, (0.05 * gap, 0.5 * gap), 10)
    assert abs(est.value) < 1e-12
    assert np.all(est.counts == 7)


def test_metric_inputs_match_box_counting():
    X = np.random.default_rng(4).uniform(0, 1, (600, 2))
    cloud = PremetricCloud.from_points(X)
    est = dimension_estimate(cloud, n_scales=10)
    assert np.array_equal(est.counts, naive_cover_sizes(X, est.radii))
    x = -np.log(est.radii)
    slope = np.polyfit(x, np.log(est.counts), 1)[0]
    assert abs(est.value - slope) < 1e-12


def test_dimension_validation():
    cloud = PremetricCloud.from_points(cantor(6))
    with pytest.raises(ValueError):
        dimension_estimate(cloud, (0.1, 0.2), n_scales=4)
    with pytest.raises(ValueError):
        dimension_estimate(cloud, (0.2, 0.1))
    with pytest.raises(ValueError):
        dimension_estimate(cloud, (0.1, 10.0))
    with pytest.raises(ResolutionError):
        dimension_estimate(cloud, (cloud.resolution_floor / 10, 0.5))
    with pytest.raises(ResolutionError):
        default_scale_range(PremetricCloud.from_points(np.zeros((5, 2))))


def test_greedy_cover_examples():
    X = np.random.default_rng(5).uniform(0, 1, 1000)
    cloud = PremetricCloud.from_points(X)
    assert greedy_cover(cloud, cloud.diameter).cover_size == 1
    assert greedy_cover(cloud, 1e-12).cover_size == 1000
    for seed in range(5, 10):
        c = PremetricCloud.from_points(np.random.default_rng(seed).uniform(0, 1, 1000))
        assert 45 <= greedy_cover(c, 0.01).cover_size <= 60
    rec = greedy_cover(cloud, 0.01)
    assert rec.max_radius <= 0.01
    with pytest.raises(ValueError):
        greedy_cover(cloud, 0.0)


@given(st.integers(0, 10**6), st.floats(0.02, 0.5))
@settings(max_examples=30)
def test_cover_property(seed, scale):
    X = np.random.default_rng(seed).uniform(0, 1, (200, 2))
    cloud = PremetricCloud.from_points(X)
    rec = greedy_cover(cloud, scale)
    D = cloud.block(rec.cover_centers)
    assert np.all(D.min(axis=0) <= scale)
    assert rec.cover_size >= 1


def test_hausdorff_upper_examples():
    X = np.random.default_rng(6).uniform(0, 1, (300, 2))
    cloud = PremetricCloud.from_points(X)
    s = 3 * cloud.resolution_floor
    assert hausdorff_measure_upper(cloud, 0.0, s) == greedy_cover(cloud, s).cover_size
    single = PremetricCloud.from_points(np.zeros((1, 2)))
    assert optimal_cover_value(single, 1.5, 1.0) == 0.0
    assert greedy_cover(single, 1.0).sum_diam_beta(1.5) == 0.0
    with pytest.raises(ResolutionError):
        hausdorff_measure_upper(cloud, 1.0, cloud.resolution_floor / 2)
    with pytest.raises(ValueError):
        hausdorff_measure_upper(cloud, -1.0, s)


def brute_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in brute_partitions(rest):
        yield [[first]] + p
        for i in range(len(p)):
            yield p[:i] + [[first] + p[i]] + p[i + 1:]


def test_exhaustive_matches_bell_enumeration():
    rng = np.random.default_rng(7)
    X = rng.uniform(0, 1, (7, 2))
    cloud = PremetricCloud.from_points(X)
    D = cloud.matrix()
    for beta, mesh in ((1.0, 0.4), (0.5, 0.7), (2.0, 10.0)):
        best = math.inf
        for p in brute_partitions(list(range(7))):
            ds = [D[np.ix_(c, c)].max() for c in p]
            if max(ds) <= mesh:
                best = min(best, math.fsum(d**beta for d in ds))
        assert optimal_cover_value(cloud, beta, mesh) == pytest.approx(best, rel=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_greedy_vs_exhaustive(seed):
    rng = np.random.default_rng(seed)
    cloud = PremetricCloud.from_points(rng.uniform(0, 1, (10, 2)))
    scale = 0.25
    rec = greedy_cover(cloud, scale)
    for beta in (0.5, 1.0, 2.0):
        mesh = max(float(rec.cell_diameters().max()), scale)
        opt = optimal_cover_value(cloud, beta, mesh, floor=scale)
        g = rec.sum_diam_beta(beta, floor=scale)
        assert opt > 0
        assert g >= opt - 1e-12
        assert g / opt <= 4


def test_optimal_cover_limits():
    cloud = PremetricCloud.from_points(np.arange(13.0))
    with pytest.raises(ValueError):
        optimal_cover(cloud, 1.0, 1.0)
    v, cells = optimal_cover(cloud, 1.0, 1.0, idx=[0, 1, 2, 5], exact=True)
    assert v == 0 and len(cells) == 4
    # with a floor of one, pairing two neighbors saves a cell
    v, cells = optimal_cover(cloud, 1.0, 1.0, idx=[0, 1, 2, 5], exact=True, floor=1.0)
    assert v == 3
    assert sorted(x for c in cells for x in c) == [0, 1, 2, 5]
    assert optimal_cover_value(cloud, 0.0, 1.0, idx=[0, 1, 2, 5]) == 3


def test_axiom_suite_fractals():
    rng = np.random.default_rng(8)
    for X in (cantor(6), circle(200, rng)):
        cloud = PremetricCloud.from_points(X)
        rep = outer_measure_axiom_suite(cloud, 0.7, 0.05, np.random.default_rng(9))
        assert rep["violations"] == 0
        assert rep["separated_tested"] >= 10
        assert rep["floor"] == 0.025


def test_axiom_suite_flags():
    ball = preset_ball("schottky-sym2", 10)
    S = limit_flag_sample(ball)
    cloud = PremetricCloud.from_flags(S.flags[:300], ball.boundary)
    scale = float(np.median(cloud.nearest_neighbor)) * 3
    rep = outer_measure_axiom_suite(cloud, 0.19, scale, np.random.default_rng(10), n_pairs=100)
    assert rep["violations"] == 0


def test_scaling_law():
    cloud = PremetricCloud.from_points(cantor(10))
    d1 = dimension_estimate(cloud).value
    for eps in (0.5, 2.0):
        p = cloud.power(eps)
        assert dimension_estimate(p, default_scale_range(p)).value == pytest.approx(d1 / eps, rel=1e-9)
    with pytest.raises(ValueError):
        cloud.power(0.0)


def test_power_matches_direct_flags():
    ball = preset_ball("schottky-sym2", 10)
    S = limit_flag_sample(ball)
    a = PremetricCloud.from_flags(S.flags, ball.boundary, 0.5)
    b = PremetricCloud.from_flags(S.flags, ball.boundary, 1.0).power(0.5)
    I = np.arange(0, len(S), 7)
    assert np.allclose(a.block(I), b.block(I), rtol=1e-12, atol=0)


def test_permutation_invariance():
    X = cantor(9)
    perm = np.random.default_rng(11).permutation(len(X))
    a = dimension_estimate(PremetricCloud.from_points(X), (0.01, 0.2), 12)
    b = dimension_estimate(PremetricCloud.from_points(X[perm]), (0.01, 0.2), 12)
    assert abs(a.value - b.value) < 0.03


def test_cloud_checks():
    ball = preset_ball("schottky-sym2", 10)
    S = limit_flag_sample(ball)
    rep = PremetricCloud.from_flags(S.flags, ball.boundary).check(np.random.default_rng(0))
    assert rep["max_asymmetry"] <= 1e-12
    assert rep["nonfinite_or_negative"] == 0


def test_critical_beta():
    cloud = PremetricCloud.from_points(cantor(10))
    b = critical_beta_at(cloud, 3 * cloud.resolution_floor)
    assert 0.4 < b < 0.9
    assert critical_beta_at(PremetricCloud.from_points(np.zeros((1, 2))), 1.0) == 0.0
