"""Cartan projections and distances on the symmetric space of SL(k+1, R).

Points of the symmetric space are symmetric positive definite matrices of
unit determinant. The group acts by ``g . x = g x g^T`` and the identity is the
canonical basepoint. Inner products on the Cartan subalgebra use the Killing
normalization ``<a|b> = 2(k+1) sum a_i b_i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, SingularMatrixError

# Tolerances used throughout the toolkit.
DET_TOL = 1e-9
SYM_TOL = 1e-12
CARTAN_ORDER_TOL = 1e-10
ZERO_SUM_TOL = 1e-9
TYPE_NORM_TOL = 1e-10
IOTA_TOL = 1e-12
METRIC_TOL = 1e-8
FINSLER_SPECIAL_TOL = 1e-9
# Reciprocal condition number below which a matrix counts as singular.
MIN_RCOND = 1e-300


def _check_square(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise DimensionMismatchError(f"{name} must be a square matrix of size >= 2, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise SingularMatrixError(f"{name} has non-finite entries")
    return m


def as_sl(g) -> np.ndarray:
    """Validate ``g`` and rescale it to determinant one.

    Raises SingularMatrixError when the matrix is numerically singular or when
    its determinant is negative in even dimension (no real rescaling exists).
    """
    g = _check_square(g, "group element")
    n = g.shape[0]
    s = np.linalg.svd(g, compute_uv=False)
    if s[-1] <= 0 or s[-1] / s[0] < MIN_RCOND:
        raise SingularMatrixError("group element is numerically singular")
    sign, logdet = np.linalg.slogdet(g)
    if sign == 0:
        raise SingularMatrixError("group element is numerically singular")
    if sign < 0:
        if n % 2 == 0:
            raise SingularMatrixError("negative determinant in even dimension cannot be rescaled into SL")
        return -g * np.exp(-logdet / n)
    return g * np.exp(-logdet / n)


def check_point(x, tol: float = DET_TOL) -> np.ndarray:
    """Validate a symmetric space point (SPD, unit determinant)."""
    x = _check_square(x, "basepoint")
    if np.max(np.abs(x - x.T)) > SYM_TOL * max(1.0, np.max(np.abs(x))):
        raise ValueError("basepoint is not symmetric")
    w = np.linalg.eigvalsh(x)
    if w[0] <= 0:
        raise ValueError("basepoint is not positive definite")
    if abs(np.sum(np.log(w))) > tol:
        raise ValueError("basepoint does not have unit determinant")
    return x


def identity_point(n: int) -> np.ndarray:
    return np.eye(n)


def sym_power(x, p: float) -> np.ndarray:
    """``x**p`` for a symmetric positive definite matrix."""
    w, v = np.linalg.eigh(x)
    return (v * w**p) @ v.T


def act(g, x) -> np.ndarray:
    """Image ``g x g^T`` of a point under a group element."""
    y = g @ x @ g.T
    return 0.5 * (y + y.T)


def _log_singular_values(m, m_inv):
    """Descending log singular values of a batch, mixing both ends.

    The upper half of the spectrum is read from ``m`` and the lower half from
    ``m_inv``; each is accurate to relative precision there, whereas a single
    SVD loses the small values once the condition number passes ~1e15.
    """
    n = m.shape[-1]
    half = n // 2
    with np.errstate(divide="ignore"):
        # only the well-conditioned half of each spectrum is used
        top = np.log(np.linalg.svd(m, compute_uv=False))
        bot = -np.log(np.linalg.svd(m_inv, compute_uv=False))[..., ::-1]
    sigma = np.empty(m.shape[:-1])
    sigma[..., :half] = top[..., :half]
    sigma[..., n - half:] = bot[..., n - half:]
    if n % 2:
        sigma[..., half] = -(sigma[..., :half].sum(-1) + sigma[..., half + 1:].sum(-1))
    else:
        sigma -= sigma.mean(-1, keepdims=True)
    return sigma


def cartan_batch(m, m_inv) -> np.ndarray:
    """Cartan vectors for stacked matrices with their inverses, shape (..., n)."""
    return _log_singular_values(np.asarray(m, float), np.asarray(m_inv, float))


def cartan_projection(g, x=None, g_inv=None) -> np.ndarray:
    """Cartan projection of ``g`` relative to the basepoint ``x``.

    This is the log singular value vector of ``x^{-1/2} g x^{1/2}``, sorted in
    decreasing order with zero sum. An exact inverse can be supplied when the
    caller tracks it, which keeps the smallest entries accurate.
    """
    g = _check_square(g, "group element")
    n = g.shape[0]
    if g_inv is None:
        s = np.linalg.svd(g, compute_uv=False)
        if s[-1] <= 0 or s[-1] / s[0] < MIN_RCOND:
            raise SingularMatrixError("group element is numerically singular")
        g_inv = np.linalg.inv(g)
    if x is not None:
        x = check_point(x)
        if x.shape[0] != n:
            raise DimensionMismatchError("basepoint and group element have different sizes")
        h, hi = sym_power(x, 0.5), sym_power(x, -0.5)
        g, g_inv = hi @ g @ h, hi @ g_inv @ h
    return _log_singular_values(g, g_inv)


def delta_distance(x, y) -> np.ndarray:
    """Vector-valued distance between two points of the symmetric space."""
    x, y = check_point(x), check_point(y)
    if x.shape != y.shape:
        raise DimensionMismatchError("points live in different symmetric spaces")
    # y = h h^T with h = y^{1/2}; the distance is the Cartan projection of x^{-1/2} h
    hi = sym_power(x, -0.5)
    m = hi @ sym_power(y, 0.5)
    m_inv = sym_power(y, -0.5) @ sym_power(x, 0.5)
    return _log_singular_values(m, m_inv)


def killing_inner(a, b) -> np.ndarray:
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = a.shape[-1]
    return 2.0 * n * np.sum(a * b, axis=-1)


def killing_norm(a) -> np.ndarray:
    return np.sqrt(np.maximum(killing_inner(a, a), 0.0))


def opposition_involution(v) -> np.ndarray:
    """The opposition involution, reversing and negating a Cartan vector."""
    return -np.asarray(v, float)[..., ::-1]


@dataclass(frozen=True, eq=False)
class TypeVector:
    """Unit Killing-norm direction in the closed chamber plus the simple roots it sees."""

    theta: np.ndarray
    tau_mod: tuple

    def __post_init__(self):
        th = np.asarray(self.theta, float)
        n = th.size
        if abs(th.sum()) > ZERO_SUM_TOL:
            raise ValueError("type vector must have zero sum")
        if np.any(np.diff(th) > CARTAN_ORDER_TOL):
            raise ValueError("type vector must be decreasing")
        if abs(killing_norm(th) - 1.0) > TYPE_NORM_TOL:
            raise ValueError("type vector must have unit Killing norm")
        if np.max(np.abs(opposition_involution(th) - th)) > IOTA_TOL:
            raise ValueError("type vector must be fixed by the opposition involution")
        mod = tuple(sorted(int(i) for i in self.tau_mod))
        for i in mod:
            if not 1 <= i <= n - 1:
                raise ValueError(f"simple root index {i} out of range")
            if th[i - 1] - th[i] <= CARTAN_ORDER_TOL:
                raise ValueError(f"type vector lies on the wall of simple root {i}")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "tau_mod", mod)

    @property
    def dim(self) -> int:
        return self.theta.size


def default_type(n: int) -> TypeVector:
    """The (1, n-1) type vector, the only choice sensitive to the first and last roots."""
    if n < 2:
        raise DimensionMismatchError("need n >= 2")
    a = 1.0 / (2.0 * np.sqrt(n))
    th = np.zeros(n)
    th[0], th[-1] = a, -a
    mod = (1,) if n == 2 else (1, n - 1)
    return TypeVector(th, mod)


def finsler_from_cartan(sigma, theta: TypeVector | None = None) -> np.ndarray:
    sigma = np.asarray(sigma, float)
    if theta is None:
        theta = default_type(sigma.shape[-1])
    return killing_inner(sigma, theta.theta)


def riemannian_distance(x, y) -> float:
    return float(killing_norm(delta_distance(x, y)))


def finsler_distance(x, y, theta: TypeVector | None = None) -> float:
    return float(finsler_from_cartan(delta_distance(x, y), theta))


def delta_triangle_defect(x, y, z) -> float:
    """``|d(x,y) - d(x,z)| - d_R(y,z)`` in Killing norm; never positive for valid inputs."""
    return float(killing_norm(delta_distance(x, y) - delta_distance(x, z)) - riemannian_distance(y, z))
