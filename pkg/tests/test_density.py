import math
import warnings

import numpy as np
import pytest

from anosov_lab.density import (
    PointMassMeasure, compare_ball_masses, conformal_ratio_check, equivariance_defect, margin_exponent,
    margin_extrapolation, mass_quantile_radius, premetric_ball, ps_measure, ps_vs_hausdorff_comparison,
    shadow_lemma_report, shadow_masses,
)
from anosov_lab.errors import EmptyMeasureError, InsufficientMassError
from anosov_lab.flag_boundary import Flag
from anosov_lab.hausdorff import PremetricCloud
from anosov_lab.limitset import limit_flag_sample
from anosov_lab.orbit_engine import GroupPresentation, critical_exponent, enumerate_ball
from anosov_lab.presets import get_preset

from conftest import preset_ball, random_sl


@pytest.fixture(scope="module")
def schottky():
    ball = preset_ball("schottky-sym2", 10)
    s = margin_exponent(critical_exponent(ball).value)
    return ball, ps_measure(ball, s)


def test_identity_only_ball_has_no_atoms():
    ball = enumerate_ball(GroupPresentation([], "SL", dim=3), 3)
    with pytest.raises(EmptyMeasureError):
        ps_measure(ball, 1.0)


def test_probability_at_basepoint(schottky):
    ball, mu = schottky
    assert abs(mu.total_mass - 1.0) < 1e-12
    assert np.all(mu.weights >= 0)
    assert abs(mu.total_mass - math.fsum(mu.weights)) < 1e-9
    assert np.all(ball.regular[mu.element_index])


def test_weights_follow_formula():
    ball = enumerate_ball(get_preset("cyclic").presentation(), 3)
    mu = ps_measure(ball, 1.0)
    # atoms are a^{+-1}, a^{+-2}; the a^{+-3} shell marks the completeness radius
    assert len(mu) == 4
    d = ball.d_F[mu.element_index]
    ratio = mu.weights / np.exp(-d)
    assert np.allclose(ratio, ratio[0], rtol=1e-12)


def test_warns_below_exponent():
    ball = preset_ball("schottky-sym2", 8)
    with pytest.warns(RuntimeWarning):
        ps_measure(ball, 0.1, delta_hat=0.19)


def test_margin_exponent():
    assert margin_exponent(2.0) == pytest.approx(2.1)
    assert margin_exponent(2.0, 0.15) == pytest.approx(2.3)


def test_conformal_identity_is_exact(schottky):
    ball, mu = schottky
    c = mu.flags[int(np.argmax(mu.weights))]
    rad = mass_quantile_radius(mu, c, 0.05)
    rep = conformal_ratio_check(mu, mu, c, rad)
    assert rep.ratio == 1.0 and rep.predicted == 1.0 and rep.relative_deviation == 0.0


def test_conformal_prediction_along_flat(schottky):
    ball, mu = schottky
    b = ball.boundary
    c = mu.flags[int(np.argmax(mu.weights))]
    rad = mass_quantile_radius(mu, c, 0.05)
    for t in (0.5, 1.0, 2.0):
        mux = ps_measure(ball, mu.s, b.ray_point(c, t))
        rep = conformal_ratio_check(mux, mu, c, rad)
        assert rep.horospherical == pytest.approx(-t, abs=1e-9)
        assert rep.predicted == pytest.approx(math.exp(mu.s * t), rel=1e-9)


def test_conformal_whole_space_is_poincare_quotient(schottky):
    ball, mu = schottky
    b = ball.boundary
    c = mu.flags[0]
    mux = ps_measure(ball, mu.s, b.ray_point(c, 1.0))
    rep = conformal_ratio_check(mux, mu, c, math.inf)
    assert rep.ratio == pytest.approx(mux.total_mass / mu.total_mass, rel=1e-12)
    assert rep.region_mass_fraction == pytest.approx(1.0)


def test_conformal_mass_floor(schottky):
    ball, mu = schottky
    with pytest.raises(InsufficientMassError):
        conformal_ratio_check(mu, mu, mu.flags[0], -1.0)


def test_shadow_single_atom(schottky):
    ball, mu = schottky
    k = int(np.flatnonzero(ball.d_F[mu.element_index] > 4.0)[0])
    one = PointMassMeasure(mu.flags[k:k + 1], mu.weights[k:k + 1], mu.basepoint, mu.s, float(mu.weights[k]),
                           mu.boundary, mu.element_index[k:k + 1], mu.distances[k:k + 1])
    g = int(mu.element_index[k])
    m = shadow_masses(one, ball, [g], 8.0)[0]
    assert m == mu.weights[k]
    assert m / math.exp(-mu.s * ball.d_F[g]) == pytest.approx(mu.weights[k] * math.exp(mu.s * ball.d_F[g]))


def test_shadow_monotone_in_r(schottky):
    ball, mu = schottky
    idx = np.flatnonzero((ball.d_F > 3) & (ball.d_F < 8))[:40]
    prev = shadow_masses(mu, ball, idx, 0.5)
    for r in (1.0, 2.0, 4.0, 8.0):
        cur = shadow_masses(mu, ball, idx, r)
        assert np.all(cur >= prev)
        prev = cur


def test_shadow_report_finite(schottky):
    ball, mu = schottky
    rep = shadow_lemma_report(mu, ball, 2.0)
    assert rep.all_finite_positive and math.isfinite(rep.C) and rep.C >= 1
    assert rep.min_ratio <= rep.max_ratio
    assert any(line.startswith("C = ") for line in rep.records())
    with pytest.raises(ValueError):
        shadow_lemma_report(mu, ball, 0.0)
    with pytest.raises(EmptyMeasureError):
        shadow_lemma_report(mu, ball, 2.0, annulus=(100.0, 200.0))


def test_compare_to_itself_is_zero(schottky):
    ball, mu = schottky
    rows = compare_ball_masses(mu.boundary, mu.flags, mu.weights, mu.flags, mu.weights,
                               mu.flags[:5], [[0.01, 0.1, 0.5]] * 5)
    assert max(r[3] for r in rows) == 0.0


def test_disjoint_supports_flagged(schottky):
    ball, mu = schottky
    rng = np.random.default_rng(3)
    g = random_sl(rng, 3, 0.8)
    S = limit_flag_sample(ball)
    moved = np.array([Flag(f[0], f[1]).transform(g).as_array() for f in S.flags])
    cloud = PremetricCloud.from_flags(moved, ball.boundary)
    rep = ps_vs_hausdorff_comparison(mu, cloud, 0.19)
    assert rep.flagged and rep.max_relative_discrepancy > 0.9


def test_ps_vs_hausdorff_reports(schottky):
    ball, mu = schottky
    S = limit_flag_sample(ball)
    cloud = PremetricCloud.from_flags(S.flags, ball.boundary)
    rep = ps_vs_hausdorff_comparison(mu, cloud, mu.s)
    assert 0.0 <= rep.max_relative_discrepancy <= 1.0
    assert rep.centers == 10 and rep.radii_per_center == 3 and len(rep.table) == 30


def test_premetric_ball_contains_center(schottky):
    ball, mu = schottky
    assert premetric_ball(mu, mu.flags[3], 1e-20)[3]


def test_equivariance():
    ball = preset_ball("schottky-sym2", 8)
    for letter in (1, -2):
        rep = equivariance_defect(ball, letter, 0.2)
        assert rep["pairs"] > 100
        assert rep["max_log_weight_defect"] < 1e-8


def test_margin_extrapolation():
    rep = margin_extrapolation([0.15, 0.10, 0.05], [1.3, 1.2, 1.1])
    assert rep["extrapolated"] == pytest.approx(1.0)
    assert rep["fit_quality"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        margin_extrapolation([0.1], [1.0])
