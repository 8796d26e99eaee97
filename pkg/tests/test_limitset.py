import numpy as np
import pytest

from anosov_lab.errors import EmptyMeasureError
from anosov_lab.flag_boundary import SLBoundary
from anosov_lab.limitset import (
    LimitSample, empirical_eps0, fitted_hyperbolicity, limit_flag_sample, metricity_report, orbit_distance_matrix,
    sample_triples, triangle_violations, ultrametric_defect,
)
from anosov_lab.orbit_engine import GroupPresentation, enumerate_ball, veronese_residual

from conftest import preset_ball


@pytest.fixture(scope="module")
def sample():
    ball = preset_ball("schottky-sym2", 10)
    return ball, limit_flag_sample(ball)


def test_sample_is_deduplicated_and_regular(sample):
    ball, S = sample
    assert len(S) > 100
    assert np.all(ball.regular[S.element_index])
    key = np.round(S.flags.reshape(len(S), -1), 9)
    assert len(np.unique(key, axis=0)) == len(S)
    d = ball.d_F[S.element_index]
    assert np.all((d >= S.radius * (1 - S.width)) & (d < S.radius))


def test_sample_on_veronese_curve(sample):
    ball, S = sample
    assert np.max(veronese_residual(S.flags[:, 0])) < 1e-3


def test_sample_deterministic(sample):
    ball, S = sample
    T = limit_flag_sample(ball)
    assert np.array_equal(S.flags, T.flags) and np.array_equal(S.element_index, T.element_index)


def test_sample_errors():
    ball = enumerate_ball(GroupPresentation([], "SL", dim=3), 2)
    with pytest.raises(EmptyMeasureError):
        limit_flag_sample(ball, radius=1.0)
    with pytest.raises(ValueError):
        limit_flag_sample(ball, width=0.0)


def test_triples_distinct(sample):
    ball, S = sample
    t = sample_triples(len(S), 5000, np.random.default_rng(0), S.flags, S.boundary)
    assert t.shape == (5000, 3)
    assert np.all((t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2]))
    with pytest.raises(ValueError):
        sample_triples(2, 10, np.random.default_rng(0))


def test_eps0_threshold(sample):
    ball, S = sample
    rng = np.random.default_rng(1)
    t = sample_triples(len(S), 20000, rng, S.flags, S.boundary)
    e0 = empirical_eps0(S.flags, S.boundary, t)
    assert e0 > 0
    assert triangle_violations(S.flags, S.boundary, e0 / 2, t) == 0
    assert triangle_violations(S.flags, S.boundary, e0 * 0.999, t) == 0
    if e0 < 60:
        assert triangle_violations(S.flags, S.boundary, e0 * 1.01, t) > 0


def test_eps0_on_metric_triples():
    # three collinear lines at angles 0, a, 2a in a plane: chordal sines fail the triangle
    # inequality for large exponents only
    b = SLBoundary(3)
    ang = np.array([0.0, 0.3, 0.6])
    lines = np.stack([np.cos(ang), np.sin(ang), np.zeros(3)], axis=1)
    normals = np.stack([-np.sin(ang), np.cos(ang), np.zeros(3)], axis=1)
    F = np.stack([lines, normals], axis=1)
    t = np.array([[0, 1, 2]])
    e0 = empirical_eps0(F, b, t)
    p = e0 * b.premetric_scale
    q = np.array([b.pair_factor(F[0], F[1]), b.pair_factor(F[1], F[2]), b.pair_factor(F[0], F[2])])
    d = q**p
    assert d[2] == pytest.approx(d[0] + d[1], rel=1e-9)


def test_orbit_distance_matrix(sample):
    ball, _ = sample
    idx = np.arange(1, 30)
    D = orbit_distance_matrix(ball, idx)
    assert np.allclose(D, D.T) and np.all(np.diag(D) == 0)
    # distances from x0 are the stored ones; triangle inequality through x0
    assert np.all(D <= ball.d_F[idx][:, None] + ball.d_F[idx][None, :] + 1e-9)


def test_hyperbolicity_and_ultrametric(sample):
    ball, S = sample
    dh = fitted_hyperbolicity(ball, 150, np.random.default_rng(2))
    assert dh >= 0 and np.isfinite(dh)
    t = sample_triples(len(S), 5000, np.random.default_rng(3), S.flags, S.boundary)
    assert ultrametric_defect(S.flags, S.boundary, t) <= 5 * dh


def test_metricity_report(sample):
    ball, S = sample
    rep = metricity_report(ball, S, np.random.default_rng(4), n_triples=20000, n_calibration=20000)
    assert rep.eps_test == rep.eps0 / 2
    assert rep.violations == 0 and rep.passed
    assert rep.ultrametric_bound == 5 * rep.delta_hat
    assert "passed = True" in rep.records()


def test_product_sample_on_diagonal():
    ball = preset_ball("diagonal-surface", 8)
    S = limit_flag_sample(ball)
    a, b = S.flags[:, 0], S.flags[:, 1]
    assert np.max(np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])) < 1e-3
    assert isinstance(S, LimitSample)
