import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from anosov_lab.errors import NonRegularElementError
from anosov_lab.flag_boundary import (
    R_PROXY_MIN, Flag, SLBoundary, antipodal, attracting_flag, busemann_cocycle, canonical_sign,
    conformal_expansion, gromov_premetric, gromov_product, gromov_product_via_flat, shadow_contains_proxy,
)
from anosov_lab.orbit_engine import symmetric_square_lift
from anosov_lab.presets import schottky_pair
from anosov_lab.sl_geometry import act, finsler_distance

from conftest import random_point, random_sl

seeds = st.integers(0, 2**32 - 1)


def random_flag(rng, n=3):
    l = rng.standard_normal(n)
    v = rng.standard_normal(n)
    v -= (v @ l) / (l @ l) * l
    return Flag(l, v)


def near_flag(rng, tau, size):
    a = rng.standard_normal((tau.dim, tau.dim))
    r = expm(size * (a - a.T))
    return Flag(r @ tau.line, r @ tau.normal)


def e(i, n=3):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def test_flag_validation_and_sign():
    f = Flag(np.array([-2.0, 0.0, 0.0]), np.array([0.0, 0.0, -1.0]))
    assert np.allclose(f.line, e(0)) and np.allclose(f.normal, e(2))
    with pytest.raises(ValueError):
        Flag(e(0), e(0))
    assert np.allclose(canonical_sign(np.array([0.0, -1.0, 2.0])), [0.0, 1.0, -2.0])


def test_attracting_flag_diagonal():
    f = attracting_flag(np.diag([math.e**2, 1.0, math.e**-2]))
    assert np.allclose(f.line, e(0)) and np.allclose(f.normal, e(2))


def test_attracting_flag_right_invariance():
    g = np.diag([math.e**2, 1.0, math.e**-2])
    c, s = math.cos(0.3), math.sin(0.3)
    r = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    # r fixes e1 and its orthogonal complement: same left singular data
    assert attracting_flag(g) == attracting_flag(g @ r) or np.allclose(
        attracting_flag(g).as_array(), attracting_flag(g @ r).as_array(), atol=1e-12)


def test_attracting_flag_nonregular():
    with pytest.raises(NonRegularElementError):
        attracting_flag(np.eye(3))
    with pytest.raises(NonRegularElementError):
        attracting_flag(np.diag([math.e, math.e, math.e**-2]))


def test_ping_pong_flag_convergence():
    a, b = schottky_pair()
    la, lb = symmetric_square_lift(a), symmetric_square_lift(b)
    gens = {1: la, -1: np.linalg.inv(la), 2: lb, -2: np.linalg.inv(lb)}
    rng = np.random.default_rng(7)
    word = [1]
    while len(word) < 24:
        s = int(rng.choice([1, -1, 2, -2]))
        if s != -word[-1]:
            word.append(s)

    def flag(w):
        m, mi = np.eye(3), np.eye(3)
        for s in w:
            m, mi = m @ gens[s], gens[-s] @ mi
        return attracting_flag(m, g_inv=mi)

    f12, f24 = flag(word[:12]), flag(word)
    assert np.max(np.abs(f12.as_array() - f24.as_array())) < 1e-6


def test_antipodal_examples():
    f1, f2 = Flag(e(0), e(2)), Flag(e(2), e(0))
    assert antipodal(f1, f2)
    assert not antipodal(f1, f1)
    a, _ = schottky_pair()
    g = symmetric_square_lift(a @ a)
    assert antipodal(attracting_flag(g), attracting_flag(np.linalg.inv(g)))


def test_busemann_examples(rng):
    x = random_point(rng, 3)
    tau = random_flag(rng)
    assert abs(busemann_cocycle(x, x, tau)) < 1e-9


def test_gromov_product_examples():
    f1, f2 = Flag(e(0), e(2)), Flag(e(2), e(0))
    assert gromov_product(f1, f2) == 0.0
    assert gromov_product(f1, f1) == math.inf
    assert gromov_premetric(f1, f1) == 0.0
    assert gromov_premetric(f1, f2) == 1.0


def test_premetric_closed_form_half():
    # lines/hyperplanes at sine 1/2 on both sides; eps = 1/sqrt(3) gives sqrt(1/2 * 1/2)
    c, s = math.sqrt(3) / 2, 0.5
    f1 = Flag(e(0), e(2))
    f2 = Flag(np.array([c, 0.0, s]), np.array([s, 0.0, -c]))
    assert math.isclose(abs(f1.line @ f2.normal), s) and math.isclose(abs(f2.line @ f1.normal), s)
    assert math.isclose(gromov_premetric(f1, f2, eps=1 / math.sqrt(3)), 0.5, rel_tol=1e-12)


def test_conformal_expansion_examples(rng):
    tau = random_flag(rng)
    assert math.isclose(conformal_expansion(np.eye(3), tau), 1.0, abs_tol=1e-9)
    k, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    k *= np.sign(np.linalg.det(k))
    assert math.isclose(conformal_expansion(k, tau), 1.0, abs_tol=1e-7)


def test_conformal_expansion_matches_premetric_quotient():
    rng = np.random.default_rng(3)
    for _ in range(5):
        g = random_sl(rng, 3, 0.7)
        tau = random_flag(rng)
        f1, f2 = near_flag(rng, tau, 1e-4), near_flag(rng, tau, 1e-4)
        q = gromov_premetric(f1.transform(g), f2.transform(g)) / gromov_premetric(f1, f2)
        assert abs(q / conformal_expansion(g, tau) - 1) < 0.01


def test_shadow_proxy_examples(rng):
    x = np.eye(3)
    g = random_sl(rng, 3, 2.0)
    center = act(g, x)
    tau = attracting_flag(g)
    assert shadow_contains_proxy(x, center, R_PROXY_MIN, tau)
    other = random_flag(rng)
    hits = [shadow_contains_proxy(x, center, r, other) for r in (0.5, 1, 2, 4, 8, 100)]
    assert hits == sorted(hits)


def test_boundary_pair_factor_matrix_matches_pairwise():
    rng = np.random.default_rng(4)
    F = np.array([random_flag(rng).as_array() for _ in range(7)])
    b = SLBoundary(3)
    M = b.pair_factor_matrix(F, F)
    assert np.allclose(M, b.pair_factor(F[:, None], F[None, :]), rtol=1e-14, atol=1e-15)


@given(seeds)
def test_cocycle_identity_and_bound(seed):
    rng = np.random.default_rng(seed)
    x, y, z = (random_point(rng, 3) for _ in range(3))
    tau = random_flag(rng)
    bxy, byz, bxz = busemann_cocycle(x, y, tau), busemann_cocycle(y, z, tau), busemann_cocycle(x, z, tau)
    assert abs(bxy + byz - bxz) < 1e-6
    assert abs(bxy) <= finsler_distance(x, y) + 1e-6


@given(seeds)
def test_closed_form_gromov_product_vs_flat(seed):
    rng = np.random.default_rng(seed)
    f1, f2 = random_flag(rng), random_flag(rng)
    if min(abs(f1.line @ f2.normal), abs(f2.line @ f1.normal)) <= 0.05:
        return
    assert abs(gromov_product(f1, f2) - gromov_product_via_flat(f1, f2)) < 1e-5


@given(seeds)
def test_premetric_axioms(seed):
    rng = np.random.default_rng(seed)
    f1, f2 = random_flag(rng), random_flag(rng)
    d12, d21 = gromov_premetric(f1, f2), gromov_premetric(f2, f1)
    assert d12 == pytest.approx(d21, abs=1e-14)
    assert 0.0 <= d12 <= 1.0 and gromov_premetric(f1, f1) == 0.0
    assert (d12 > 0) == antipodal(f1, f2)
    g = near_flag(rng, f1, 1e-10)
    assert abs(gromov_premetric(g, f2) - d12) < 1e-8


@given(seeds)
def test_gromov_product_basepoint_change(seed):
    rng = np.random.default_rng(seed)
    h = random_sl(rng, 3, 0.5)
    f1, f2 = random_flag(rng), random_flag(rng)
    if min(abs(f1.line @ f2.normal), abs(f2.line @ f1.normal)) <= 0.05:
        return
    # equivariance: <h f1 | h f2>_{h x0} = <f1 | f2>_{x0}
    lhs = gromov_product(f1.transform(h), f2.transform(h), act(h, np.eye(3)))
    assert lhs == pytest.approx(gromov_product(f1, f2), abs=1e-8)
