import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anosov_lab.errors import DimensionMismatchError, SingularMatrixError
from anosov_lab.sl_geometry import (
    DET_TOL, act, as_sl, cartan_projection, check_point, default_type, delta_distance,
    delta_triangle_defect, finsler_distance, identity_point, killing_norm, opposition_involution,
    riemannian_distance, TypeVector,
)

from conftest import random_point, random_sl

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(2, 5)


def test_cartan_identity_is_zero():
    assert np.allclose(cartan_projection(np.eye(3)), 0.0)


def test_cartan_diagonal():
    g = np.diag([math.e, 1.0, 1 / math.e])
    assert np.allclose(cartan_projection(g), [1.0, 0.0, -1.0], atol=1e-12)


def test_cartan_sl2_oracle():
    # eigenvalues of g g^T from the characteristic polynomial t^2 - 7t + 1
    lam = (7 + 3 * math.sqrt(5)) / 2
    s = 0.5 * math.log(lam)
    assert np.allclose(cartan_projection(np.array([[2.0, 1.0], [1.0, 1.0]])), [s, -s], atol=1e-12)


def test_cartan_basepoint_change_is_conjugation():
    rng = np.random.default_rng(0)
    g, h = random_sl(rng, 3), random_sl(rng, 3)
    x = act(h, np.eye(3))
    # x = h h^T; relative to x the element g acts like h^{-1} g h up to K
    assert np.allclose(cartan_projection(g, x), cartan_projection(np.linalg.inv(h) @ g @ h), atol=1e-9)


def test_as_sl_renormalizes_determinant():
    g = as_sl(np.diag([2.0, 3.0, 4.0]))
    assert abs(np.linalg.det(g) - 1) < DET_TOL


def test_singular_rejected():
    with pytest.raises(SingularMatrixError):
        cartan_projection(np.zeros((3, 3)))


def test_opposition_examples():
    assert np.allclose(opposition_involution([1, 0, -1]), [1, 0, -1])
    assert np.allclose(opposition_involution([3, 1, -4]), [4, -1, -3])


def test_riemannian_examples():
    assert riemannian_distance(np.eye(3), np.eye(3)) == 0.0
    g = np.diag([math.e, 1 / math.e])
    assert math.isclose(riemannian_distance(np.eye(2), act(g, np.eye(2))), 2 * math.sqrt(2), rel_tol=1e-12)


def test_finsler_examples():
    assert finsler_distance(np.eye(3), np.eye(3)) == 0.0
    g = np.diag([math.e, 1.0, 1 / math.e])
    assert math.isclose(finsler_distance(np.eye(3), act(g, np.eye(3))), 2 * math.sqrt(3), rel_tol=1e-12)


def test_default_type_vector():
    th = default_type(3)
    a = 1 / (2 * math.sqrt(3))
    assert np.allclose(th.theta, [a, 0, -a])
    assert math.isclose(killing_norm(th.theta), 1.0)


def test_type_vector_validation():
    with pytest.raises(ValueError):
        TypeVector(np.array([1.0, 0.0, -1.0]), (1, 2))
    with pytest.raises(ValueError):
        TypeVector(-default_type(3).theta, (1, 2))


def test_check_point_rejects():
    with pytest.raises(ValueError):
        check_point(np.diag([1.0, 2.0, 1.0]))
    with pytest.raises(ValueError):
        check_point(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(DimensionMismatchError):
        riemannian_distance(np.eye(2), np.eye(3))


def test_delta_triangle_examples():
    rng = np.random.default_rng(1)
    x, y = random_point(rng, 3), random_point(rng, 3)
    assert delta_triangle_defect(x, y, y) <= 0.0
    assert abs(delta_triangle_defect(x, y, x)) < 1e-9


@given(seeds, dims)
def test_iota_of_inverse(seed, n):
    rng = np.random.default_rng(seed)
    g = random_sl(rng, n, 1.5)
    a = cartan_projection(g)
    b = cartan_projection(np.linalg.inv(g))
    assert np.allclose(opposition_involution(a), b, atol=1e-8)
    assert np.all(np.diff(a) <= 1e-10) and abs(a.sum()) <= 1e-9


@given(seeds, dims)
def test_finsler_bounds_and_specialization(seed, n):
    rng = np.random.default_rng(seed)
    x, y = random_point(rng, n), random_point(rng, n)
    dF, dR = finsler_distance(x, y), riemannian_distance(x, y)
    s = delta_distance(x, y)
    assert -1e-12 <= dF <= dR + 1e-12
    assert abs(dF - math.sqrt(n) * (s[0] - s[-1])) <= 1e-9


@given(seeds, dims)
def test_riemannian_is_metric(seed, n):
    rng = np.random.default_rng(seed)
    x, y, z = (random_point(rng, n) for _ in range(3))
    dxy, dyx = riemannian_distance(x, y), riemannian_distance(y, x)
    assert abs(dxy - dyx) <= 1e-8
    assert dxy <= riemannian_distance(x, z) + riemannian_distance(z, y) + 1e-8
    assert riemannian_distance(x, x) <= 1e-8


@given(seeds, dims)
def test_delta_triangle_defect_fuzz(seed, n):
    rng = np.random.default_rng(seed)
    x, y, z = (random_point(rng, n) for _ in range(3))
    assert delta_triangle_defect(x, y, z) <= 1e-8


def test_identity_point():
    assert np.array_equal(identity_point(4), np.eye(4))
