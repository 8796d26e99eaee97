"""Product of two hyperbolic planes as a rank-two test model.

Points are pairs of upper half-plane points, boundary points are pairs of
points of the extended real line, and group elements are pairs of SL(2, R)
matrices acting by Moebius transformations. The Finsler distance is the mean
of the factor distances and the Riemannian distance is their Euclidean norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonRegularElementError
from .flag_boundary import ANTIPODAL_TOL, GAP_TOL, Boundary, canonical_sign
from .sl_geometry import as_sl

I2 = complex(0.0, 1.0)


@dataclass(frozen=True)
class ProductPoint:
    z1: complex
    z2: complex

    def __post_init__(self):
        for z in (self.z1, self.z2):
            if not (math.isfinite(z.real) and math.isfinite(z.imag)) or z.imag <= 0:
                raise ValueError(f"{z!r} is not in the upper half-plane")

    def coords(self):
        return (complex(self.z1), complex(self.z2))


BASEPOINT = ProductPoint(I2, I2)


def _canon_xi(xi):
    xi = float(xi)
    if math.isinf(xi):
        return math.inf
    return 0.0 if xi == 0.0 else xi


@dataclass(frozen=True)
class ProductFlag:
    """Pair of boundary points; ``math.inf`` stands for the point at infinity."""

    xi1: float
    xi2: float

    def __post_init__(self):
        for v in (self.xi1, self.xi2):
            if math.isnan(v):
                raise ValueError("boundary coordinate is NaN")
        object.__setattr__(self, "xi1", _canon_xi(self.xi1))
        object.__setattr__(self, "xi2", _canon_xi(self.xi2))

    def as_array(self) -> np.ndarray:
        return np.stack([boundary_vector(self.xi1), boundary_vector(self.xi2)])

    @classmethod
    def from_array(cls, a) -> "ProductFlag":
        a = np.asarray(a, float)
        return cls(vector_to_boundary(a[0]), vector_to_boundary(a[1]))


def boundary_vector(xi) -> np.ndarray:
    """Unit vector (p, q) with ``xi = p / q`` and canonical sign."""
    if math.isinf(xi):
        return np.array([1.0, 0.0])
    v = np.array([xi, 1.0]) / math.hypot(xi, 1.0)
    return canonical_sign(v)


def vector_to_boundary(v) -> float:
    p, q = float(v[0]), float(v[1])
    if q == 0.0:
        return math.inf
    return _canon_xi(p / q)


def moebius(g, z: complex) -> complex:
    a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    return complex((a * z + b) / (c * z + d))


def _to_i(z: complex) -> np.ndarray:
    """Inverse of the affine map sending ``i`` to ``z``."""
    y = math.sqrt(z.imag)
    return np.array([[1.0 / y, -z.real / y], [0.0, y]])


def hyperbolic_distance(z: complex, w: complex) -> float:
    if z.imag <= 0 or w.imag <= 0:
        raise ValueError("points must lie in the upper half-plane")
    return 2.0 * math.asinh(abs(z - w) / (2.0 * math.sqrt(z.imag * w.imag)))


def factor_distances(x: ProductPoint, y: ProductPoint) -> np.ndarray:
    return np.array([hyperbolic_distance(x.z1, y.z1), hyperbolic_distance(x.z2, y.z2)])


def product_finsler_distance(x: ProductPoint, y: ProductPoint) -> float:
    return float(0.5 * factor_distances(x, y).sum())


def product_riemannian_distance(x: ProductPoint, y: ProductPoint) -> float:
    return float(np.hypot(*factor_distances(x, y)))


def boundary_busemann(xi, z: complex) -> float:
    """Busemann function of the boundary point ``xi``, vanishing at ``i``."""
    p, q = boundary_vector(xi)
    return math.log(abs(p - q * z) ** 2 / z.imag)


def product_busemann(x: ProductPoint, y: ProductPoint, tau: ProductFlag) -> float:
    """Horospherical distance from ``x`` to ``y`` toward ``tau``; positive when ``y`` is closer."""
    return 0.5 * sum(boundary_busemann(xi, a) - boundary_busemann(xi, b)
                     for xi, a, b in ((tau.xi1, x.z1, y.z1), (tau.xi2, x.z2, y.z2)))


def factor_gromov_product(xi, eta, z: complex = I2) -> float:
    """Gromov product of two boundary points of one factor; ``inf`` if they coincide."""
    a = _to_i(z)
    u, v = a @ boundary_vector(xi), a @ boundary_vector(eta)
    det = abs(u[0] * v[1] - u[1] * v[0]) / (np.linalg.norm(u) * np.linalg.norm(v))
    if det <= ANTIPODAL_TOL:
        return math.inf
    return max(-math.log(det), 0.0)


def product_gromov_product(t1: ProductFlag, t2: ProductFlag, x: ProductPoint = BASEPOINT) -> float:
    g1 = factor_gromov_product(t1.xi1, t2.xi1, x.z1)
    g2 = factor_gromov_product(t1.xi2, t2.xi2, x.z2)
    return 0.5 * (g1 + g2)


def product_gromov_premetric(t1: ProductFlag, t2: ProductFlag, x: ProductPoint = BASEPOINT,
                             eps: float = 1.0) -> float:
    gp = product_gromov_product(t1, t2, x)
    return 0.0 if math.isinf(gp) else math.exp(-eps * gp)


def visual_angles(t1: ProductFlag, t2: ProductFlag, x: ProductPoint = BASEPOINT) -> np.ndarray:
    """Factor-wise visual angles seen from ``x``."""
    out = []
    for xi, eta, z in ((t1.xi1, t2.xi1, x.z1), (t1.xi2, t2.xi2, x.z2)):
        gp = factor_gromov_product(xi, eta, z)
        out.append(0.0 if math.isinf(gp) else 2.0 * math.asin(min(1.0, math.exp(-gp))))
    return np.array(out)


@dataclass(frozen=True, eq=False)
class RepresentationPair:
    """Two representations of the same free generating set into SL(2, R)."""

    generators_1: tuple
    generators_2: tuple

    def __post_init__(self):
        g1 = [as_sl(np.asarray(g, float)) for g in self.generators_1]
        g2 = [as_sl(np.asarray(g, float)) for g in self.generators_2]
        if len(g1) != len(g2) or not g1:
            raise DimensionMismatchError("both factors need the same non-empty generator list")
        for g in g1 + g2:
            if g.shape != (2, 2):
                raise DimensionMismatchError("factor generators must be 2x2")
        object.__setattr__(self, "generators_1", tuple(g1))
        object.__setattr__(self, "generators_2", tuple(g2))

    def stacked(self) -> np.ndarray:
        """Generators as an array of shape (m, 2, 2, 2)."""
        return np.stack([np.stack([a, b]) for a, b in zip(self.generators_1, self.generators_2)])


def sl2_inverse(m):
    """Exact inverse of stacked unimodular 2x2 matrices."""
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out


def _orbit_distance_from_i(m):
    f = np.sum(m * m, axis=(-2, -1))
    return np.arccosh(np.maximum(f / 2.0, 1.0))


class ProductBoundary(Boundary):
    model = "PRODUCT"
    n = 2

    def basepoint(self):
        return BASEPOINT

    def orbit_cartan(self, mats, invs=None, x=None):
        mats = np.asarray(mats, float)
        if x is not None:
            a = np.stack([_to_i(x.z1), _to_i(x.z2)])
            mats = a @ mats
        return _orbit_distance_from_i(mats)

    def finsler(self, cartan):
        return 0.5 * np.sum(cartan, axis=-1)

    def riemannian(self, cartan):
        return np.sqrt(np.sum(np.asarray(cartan) ** 2, axis=-1))

    def flags(self, mats, invs=None, gap_tol=GAP_TOL):
        mats = np.asarray(mats, float)
        u = np.linalg.svd(mats)[0][..., :, 0]
        d = _orbit_distance_from_i(mats)
        return canonical_sign(u), np.all(d > gap_tol, axis=-1)

    def horofunction(self, y, flags):
        flags = np.asarray(flags, float)
        out = 0.0
        for j, z in enumerate(y.coords()):
            p, q = flags[..., j, 0], flags[..., j, 1]
            out = out + np.log(np.abs(p - q * z) ** 2 / z.imag)
        return 0.5 * out

    def orbit_horofunction(self, mats, invs, flag):
        flag = np.asarray(flag, float)
        invs = sl2_inverse(np.asarray(mats, float)) if invs is None else invs
        a = np.sum((invs[..., 0, :, :] @ flag[0]) ** 2, axis=-1)
        b = np.sum((invs[..., 1, :, :] @ flag[1]) ** 2, axis=-1)
        return 0.5 * (np.log(a) + np.log(b))

    def point_horofunction(self, mat, inv, flags):
        flags = np.asarray(flags, float)
        inv = sl2_inverse(np.asarray(mat, float)) if inv is None else inv
        a = np.sum((flags[:, 0, :] @ inv[0].T) ** 2, axis=1)
        b = np.sum((flags[:, 1, :] @ inv[1].T) ** 2, axis=1)
        return 0.5 * (np.log(a) + np.log(b))

    def orbit_point(self, mat):
        return ProductPoint(moebius(mat[0], I2), moebius(mat[1], I2))

    def fixed_flag(self, mat):
        mat = np.asarray(mat, float)
        out = np.empty((2, 2))
        for j in (0, 1):
            w, v = np.linalg.eig(mat[j])
            if abs(w[0].imag) > 1e-12 or abs(abs(w[0]) - abs(w[1])) < 1e-9:
                raise NonRegularElementError("factor is not hyperbolic")
            k = int(np.argmax(np.abs(w)))
            out[j] = canonical_sign(v[:, k].real / np.linalg.norm(v[:, k].real))
        return out

    def ray_point(self, flag, t):
        f = np.asarray(flag, float)
        zs = []
        for j in (0, 1):
            p, q = f[j] / np.linalg.norm(f[j])
            zs.append(moebius(np.array([[p, -q], [q, p]]), 1j * math.exp(t)))
        return ProductPoint(*zs)

    def _dets(self, fa, fb, x=None):
        fa, fb = np.asarray(fa, float), np.asarray(fb, float)
        if x is not None:
            out = []
            for j, z in enumerate(x.coords()):
                a = _to_i(z)
                u, v = fa[..., j, :] @ a.T, fb[..., j, :] @ a.T
                det = np.abs(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
                out.append(det / (np.linalg.norm(u, axis=-1) * np.linalg.norm(v, axis=-1)))
            return out
        return [np.abs(fa[..., j, 0] * fb[..., j, 1] - fa[..., j, 1] * fb[..., j, 0]) for j in (0, 1)]

    def gromov_products(self, fa, fb, x=None, tol=ANTIPODAL_TOL):
        d1, d2 = self._dets(fa, fb, x)
        bad = (d1 <= tol) | (d2 <= tol)
        with np.errstate(divide="ignore"):
            gp = -0.5 * (np.log(d1) + np.log(d2))
        return np.where(bad, np.inf, np.maximum(gp, 0.0))

    def pair_factor(self, fa, fb):
        d1, d2 = self._dets(fa, fb)
        return d1 * d2

    def pair_factor_matrix(self, fa, fb):
        fa, fb = np.asarray(fa, float), np.asarray(fb, float)
        out = 1.0
        for j in (0, 1):
            a, b = fa[:, j, :], fb[:, j, :]
            out = out * np.abs(np.outer(a[:, 0], b[:, 1]) - np.outer(a[:, 1], b[:, 0]))
        return out

    @property
    def premetric_scale(self):
        return 0.5


def diagonal_orbit_adapter(rep: RepresentationPair, word, gap_tol: float = GAP_TOL, strict: bool = False):
    """Image of a word under the diagonal action.

    Returns ``(point, (d_F, d_R), flag)`` where distances are measured from the
    basepoint ``(i, i)``. ``flag`` is None for a non-regular element unless
    ``strict`` is set, in which case NonRegularElementError is raised.
    """
    m = np.eye(2), np.eye(2)
    gens = (rep.generators_1, rep.generators_2)
    for letter in word:
        k = abs(int(letter)) - 1
        if letter == 0 or k >= len(rep.generators_1):
            raise ValueError(f"invalid letter {letter!r}")
        m = tuple(mj @ (gj[k] if letter > 0 else sl2_inverse(gj[k])) for mj, gj in zip(m, gens))
    point = ProductPoint(moebius(m[0], I2), moebius(m[1], I2))
    d = _orbit_distance_from_i(np.stack(m))
    flags, reg = ProductBoundary().flags(np.stack(m)[None])
    dist = (float(0.5 * d.sum()), float(np.hypot(*d)))
    if not reg[0]:
        if strict:
            raise NonRegularElementError("element fixes a basepoint coordinate")
        return point, dist, None
    return point, dist, ProductFlag.from_array(flags[0])
