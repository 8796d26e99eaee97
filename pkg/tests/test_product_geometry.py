import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anosov_lab.errors import DimensionMismatchError, NonRegularElementError
from anosov_lab.presets import get_preset, hyperbolic_translation, rotation
from anosov_lab.product_geometry import (
    BASEPOINT, I2, ProductBoundary, ProductFlag, ProductPoint, RepresentationPair, boundary_busemann,
    diagonal_orbit_adapter, hyperbolic_distance, moebius, product_busemann, product_finsler_distance,
    product_gromov_premetric, product_gromov_product, product_riemannian_distance, visual_angles,
)

seeds = st.integers(0, 2**32 - 1)


def random_uhp(rng):
    return complex(rng.normal(), math.exp(rng.normal()))


def random_point(rng):
    return ProductPoint(random_uhp(rng), random_uhp(rng))


def random_flag(rng):
    return ProductFlag(float(rng.normal() * 2), float(rng.normal() * 2))


def test_point_validation():
    with pytest.raises(ValueError):
        ProductPoint(1j, -1j)


def test_finsler_examples():
    assert product_finsler_distance(BASEPOINT, BASEPOINT) == 0.0
    y = ProductPoint(math.e * 1j, 1j)
    assert math.isclose(product_finsler_distance(BASEPOINT, y), 0.5, rel_tol=1e-12)


def test_general_type_formula_rescaled():
    rng = np.random.default_rng(0)
    x, y = random_point(rng), random_point(rng)
    d1, d2 = hyperbolic_distance(x.z1, y.z1), hyperbolic_distance(x.z2, y.z2)
    general = (d1 + d2) / math.sqrt(2)
    assert math.isclose(general / math.sqrt(2), product_finsler_distance(x, y), rel_tol=1e-12)


def test_busemann_examples():
    assert product_busemann(BASEPOINT, BASEPOINT, ProductFlag(0.3, 1.0)) == 0.0
    tau = ProductFlag(math.inf, math.inf)
    x = ProductPoint(math.e * 1j, math.e * 1j)
    assert math.isclose(product_busemann(x, BASEPOINT, tau), -1.0, rel_tol=1e-12)


def test_busemann_matches_limit():
    # horospherical distance as the limit of distance differences along a ray
    rng = np.random.default_rng(1)
    b = ProductBoundary()
    for _ in range(20):
        x, y, tau = random_point(rng), random_point(rng), random_flag(rng)
        z = b.ray_point(tau.as_array(), 30.0)
        lim = product_finsler_distance(x, z) - product_finsler_distance(y, z)
        assert abs(lim - product_busemann(x, y, tau)) < 1e-7


def test_premetric_examples():
    t = ProductFlag(0.5, -1.0)
    assert product_gromov_premetric(t, t) == 0.0
    # 0 and infinity are diametrically opposite as seen from i
    assert product_gromov_premetric(ProductFlag(0.0, 0.0), ProductFlag(math.inf, math.inf)) == 1.0


def test_bi_lipschitz_band_reported():
    rng = np.random.default_rng(2)
    ratios = []
    for _ in range(10_000):
        t1, t2 = random_flag(rng), random_flag(rng)
        a = visual_angles(t1, t2)
        ratios.append(product_gromov_premetric(t1, t2, eps=1.0) / math.sqrt(a[0] * a[1]))
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios))
    # sin(a/2)/a lies in [1/pi, 1/2] for a in [0, pi]
    assert ratios.min() >= 1 / math.pi - 1e-12 and ratios.max() <= 0.5 + 1e-12


def test_representation_pair_validation():
    with pytest.raises(DimensionMismatchError):
        RepresentationPair((np.eye(2),), ())
    with pytest.raises(DimensionMismatchError):
        RepresentationPair((np.eye(3),), (np.eye(3),))


def test_adapter_examples():
    g = hyperbolic_translation(1.3)
    h = rotation(0.4) @ hyperbolic_translation(0.7) @ rotation(-0.4)
    rep = RepresentationPair((g, h), (g, h))
    p, d, f = diagonal_orbit_adapter(rep, [])
    assert p == BASEPOINT and d == (0.0, 0.0) and f is None
    with pytest.raises(NonRegularElementError):
        diagonal_orbit_adapter(rep, [], strict=True)
    p, (dF, dR), f = diagonal_orbit_adapter(rep, [1, 2, -1, 2, 2])
    assert f.xi1 == f.xi2
    assert math.isclose(dF, hyperbolic_distance(I2, p.z1), rel_tol=1e-12)


def test_diagonal_preset_flags_on_diagonal():
    pres = get_preset("diagonal-surface").presentation()
    b = pres.boundary
    rng = np.random.default_rng(3)
    for _ in range(50):
        w = [int(rng.choice([1, -1, 2, -2, 3, -3, 4, -4])) for _ in range(6)]
        m, mi = pres.evaluate(w)
        f, reg = b.flags(m[None], mi[None])
        if reg[0]:
            assert np.allclose(f[0, 0], f[0, 1], atol=1e-9)


@given(seeds)
def test_metric_properties(seed):
    rng = np.random.default_rng(seed)
    x, y, z = random_point(rng), random_point(rng), random_point(rng)
    d = product_finsler_distance
    assert d(x, y) == pytest.approx(d(y, x), abs=1e-12)
    assert d(x, y) <= d(x, z) + d(z, y) + 1e-9
    assert d(x, y) <= product_riemannian_distance(x, y) + 1e-12


@given(seeds)
def test_busemann_cocycle_and_bound(seed):
    rng = np.random.default_rng(seed)
    x, y, z, tau = random_point(rng), random_point(rng), random_point(rng), random_flag(rng)
    b = product_busemann
    assert abs(b(x, y, tau) + b(y, z, tau) - b(x, z, tau)) <= 1e-12 * max(1.0, abs(b(x, z, tau)))
    assert abs(b(x, y, tau)) <= product_finsler_distance(x, y) + 1e-9


@given(seeds)
def test_premetric_properties(seed):
    rng = np.random.default_rng(seed)
    x, t1, t2 = random_point(rng), random_flag(rng), random_flag(rng)
    v = product_gromov_premetric(t1, t2, x)
    assert v == pytest.approx(product_gromov_premetric(t2, t1, x), abs=1e-14)
    assert 0.0 <= v <= 1.0
    t3 = ProductFlag(t1.xi1, t2.xi2)
    assert product_gromov_premetric(t1, t3, x) == 0.0


@given(seeds)
def test_gromov_product_equivariance(seed):
    rng = np.random.default_rng(seed)
    g = [rotation(rng.uniform(0, math.pi)) @ hyperbolic_translation(rng.uniform(0, 2)) for _ in range(2)]
    t1, t2 = random_flag(rng), random_flag(rng)

    def push(t):
        return ProductFlag(*(math.inf if (gj[1, 0] * xi + gj[1, 1]) == 0 else
                             (gj[0, 0] * xi + gj[0, 1]) / (gj[1, 0] * xi + gj[1, 1])
                             for gj, xi in zip(g, (t.xi1, t.xi2))))

    gx = ProductPoint(moebius(g[0], I2), moebius(g[1], I2))
    assert product_gromov_product(push(t1), push(t2), gx) == pytest.approx(product_gromov_product(t1, t2), abs=1e-7)


def test_boundary_busemann_infinity():
    assert math.isclose(boundary_busemann(math.inf, 2j), -math.log(2), rel_tol=1e-12)
