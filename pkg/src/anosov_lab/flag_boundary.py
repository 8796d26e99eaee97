"""Flags, Busemann functions and Gromov products for SL(k+1, R).

A (1, k) flag is stored basepoint-free as a line vector and a covector whose
kernel is the hyperplane. Both are unit Euclidean vectors with a canonical
sign, so two flags compare equal iff their arrays do. Basepoint-dependent
quantities take the basepoint as an explicit argument.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .errors import ConvergenceError, DimensionMismatchError, NonRegularElementError
from .sl_geometry import (
    TypeVector,
    act,
    cartan_batch,
    check_point,
    default_type,
    finsler_from_cartan,
    killing_norm,
    sym_power,
    _check_square,
)

ANTIPODAL_TOL = 1e-10
GAP_TOL = 1e-6
BUSEMANN_T = 60.0
BUSEMANN_TOL = 1e-7
# Smallest proxy-shadow radius used by the shadow reports, in Finsler units.
R_PROXY_MIN = 1.0


def canonical_sign(v: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Flip rows so the first entry of absolute value above ``tol`` is positive."""
    v = np.asarray(v, float)
    flat = v.reshape(-1, v.shape[-1])
    idx = np.argmax(np.abs(flat) > tol, axis=1)
    s = np.sign(flat[np.arange(flat.shape[0]), idx])
    s[s == 0] = 1.0
    return (flat * s[:, None]).reshape(v.shape)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Flag:
    """A line contained in a hyperplane, given by the line and the hyperplane's covector."""

    line: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        line = np.asarray(self.line, float)
        normal = np.asarray(self.normal, float)
        if line.shape != normal.shape or line.ndim != 1:
            raise DimensionMismatchError("line and covector must be vectors of equal size")
        if not (np.all(np.isfinite(line)) and np.all(np.isfinite(normal))):
            raise ValueError("flag has non-finite entries")
        line, normal = canonical_sign(_unit(line)), canonical_sign(_unit(normal))
        if abs(line @ normal) > 1e-8:
            raise ValueError("line is not contained in the hyperplane")
        object.__setattr__(self, "line", line)
        object.__setattr__(self, "normal", normal)

    @property
    def dim(self) -> int:
        return self.line.size

    def as_array(self) -> np.ndarray:
        return np.stack([self.line, self.normal])

    def transform(self, g) -> "Flag":
        """Image of the flag under a group element."""
        g = np.asarray(g, float)
        return Flag(g @ self.line, np.linalg.solve(g.T, self.normal))

    def __eq__(self, other):
        if not isinstance(other, Flag):
            return NotImplemented
        return bool(np.array_equal(self.line, other.line) and np.array_equal(self.normal, other.normal))

    def __hash__(self):
        return hash((self.line.tobytes(), self.normal.tobytes()))

    def __repr__(self):
        return f"Flag(line={np.round(self.line, 6).tolist()}, normal={np.round(self.normal, 6).tolist()})"


class Boundary(abc.ABC):
    """Vectorized boundary geometry shared by the matrix and product models.

    Flags are packed as arrays of shape (N, 2, m). Group elements are stacked
    arrays with their inverses. The canonical basepoint is written ``x0``.
    """

    model: str

    @abc.abstractmethod
    def orbit_cartan(self, mats, invs, x=None) -> np.ndarray:
        """Vector-valued distances from ``x`` to the orbit points ``g x0``."""

    @abc.abstractmethod
    def finsler(self, cartan) -> np.ndarray:
        ...

    def riemannian(self, cartan) -> np.ndarray:
        return killing_norm(cartan)

    @abc.abstractmethod
    def flags(self, mats, invs, gap_tol: float = GAP_TOL):
        """Attracting flags of the segments ``x0 -> g x0`` and a regularity mask."""

    @abc.abstractmethod
    def horofunction(self, y, flags) -> np.ndarray:
        """Busemann function normalized so that horospherical distance is ``h(x) - h(y)``."""

    @abc.abstractmethod
    def orbit_horofunction(self, mats, invs, flag) -> np.ndarray:
        """Busemann function of one flag evaluated at the orbit points ``g x0``."""

    @abc.abstractmethod
    def point_horofunction(self, mat, inv, flags) -> np.ndarray:
        """Busemann functions of many flags evaluated at the single orbit point ``g x0``."""

    @abc.abstractmethod
    def orbit_point(self, mat):
        """The orbit point ``g x0`` as a point of the model."""

    @abc.abstractmethod
    def fixed_flag(self, mat) -> np.ndarray:
        """Attracting fixed flag of a loxodromic element, as a flag array."""

    @abc.abstractmethod
    def ray_point(self, flag, t: float):
        """Point at Finsler distance ``t`` from ``x0`` on the ray toward ``flag``."""

    @abc.abstractmethod
    def gromov_products(self, fa, fb, x=None, tol: float = ANTIPODAL_TOL) -> np.ndarray:
        """Elementwise Gromov products with ``inf`` for non-antipodal pairs."""

    @abc.abstractmethod
    def basepoint(self):
        ...

    @abc.abstractmethod
    def pair_factor(self, fa, fb) -> np.ndarray:
        """Basepoint-free quantity ``q`` with premetric ``q**(eps*scale)`` at ``x0``."""

    def pair_factor_matrix(self, fa, fb) -> np.ndarray:
        """All pairs: ``out[i, j] = pair_factor(fa[i], fb[j])``."""
        return self.pair_factor(np.asarray(fa)[:, None], np.asarray(fb)[None, :])

    @property
    @abc.abstractmethod
    def premetric_scale(self) -> float:
        ...

    def premetric(self, fa, fb, x=None, eps: float = 1.0, tol: float = ANTIPODAL_TOL) -> np.ndarray:
        gp = self.gromov_products(fa, fb, x, tol)
        with np.errstate(over="ignore"):
            return np.where(np.isinf(gp), 0.0, np.exp(-eps * gp))


class SLBoundary(Boundary):
    model = "SL"

    def __init__(self, n: int, theta: TypeVector | None = None):
        self.n = int(n)
        self.theta = theta if theta is not None else default_type(self.n)
        if self.theta.dim != self.n:
            raise DimensionMismatchError("type vector has the wrong dimension")
        self._c = 0.5 * np.sqrt(self.n)

    def basepoint(self):
        return np.eye(self.n)

    def orbit_cartan(self, mats, invs, x=None):
        if x is None:
            return cartan_batch(mats, invs)
        h, hi = sym_power(x, 0.5), sym_power(x, -0.5)
        return cartan_batch(hi @ mats, invs @ h)

    def finsler(self, cartan):
        return finsler_from_cartan(cartan, self.theta)

    def flags(self, mats, invs, gap_tol=GAP_TOL):
        mats, invs = np.asarray(mats, float), np.asarray(invs, float)
        u = np.linalg.svd(mats)[0]
        vh = np.linalg.svd(invs)[2]
        out = np.empty(mats.shape[:-2] + (2, self.n))
        out[..., 0, :] = canonical_sign(u[..., :, 0])
        out[..., 1, :] = canonical_sign(vh[..., 0, :])
        sig = cartan_batch(mats, invs)
        reg = (sig[..., 0] - sig[..., 1] > gap_tol) & (sig[..., -2] - sig[..., -1] > gap_tol)
        return out, reg

    def horofunction(self, y, flags):
        flags = np.asarray(flags, float)
        yi = np.linalg.inv(y)
        l, p = flags[..., 0, :], flags[..., 1, :]
        a = np.einsum("...i,ij,...j->...", l, yi, l)
        b = np.einsum("...i,ij,...j->...", p, y, p)
        with np.errstate(divide="ignore"):
            return self._c * (np.log(a) + np.log(b))

    def orbit_horofunction(self, mats, invs, flag):
        flag = np.asarray(flag, float)
        a = np.sum((invs @ flag[0]) ** 2, axis=-1)
        b = np.sum((np.swapaxes(mats, -1, -2) @ flag[1]) ** 2, axis=-1)
        with np.errstate(divide="ignore"):
            return self._c * (np.log(a) + np.log(b))

    def point_horofunction(self, mat, inv, flags):
        flags = np.asarray(flags, float)
        a = np.sum((flags[:, 0, :] @ inv.T) ** 2, axis=1)
        b = np.sum((flags[:, 1, :] @ mat) ** 2, axis=1)
        with np.errstate(divide="ignore"):
            return self._c * (np.log(a) + np.log(b))

    def orbit_point(self, mat):
        return act(np.asarray(mat, float), np.eye(self.n))

    def fixed_flag(self, mat):
        mat = np.asarray(mat, float)
        out = np.empty((2, self.n))
        for k, a in enumerate((mat, np.linalg.inv(mat).T)):
            w, v = np.linalg.eig(a)
            j = int(np.argmax(np.abs(w)))
            if abs(w[j].imag) > 1e-12 or np.sort(np.abs(w))[-2] >= abs(w[j]) * (1 - 1e-9):
                raise NonRegularElementError("element has no simple real top eigenvalue")
            out[k] = canonical_sign(v[:, j].real / np.linalg.norm(v[:, j].real))
        return out

    def ray_point(self, flag, t):
        f = np.asarray(flag, float)
        h = ray_factor(Flag(f[0], f[1]), None, t, self.theta)
        return h @ h.T

    def _sines(self, fa, fb, x=None):
        la, pa = fa[..., 0, :], fa[..., 1, :]
        lb, pb = fb[..., 0, :], fb[..., 1, :]
        s_ab = np.abs(np.sum(la * pb, -1))
        s_ba = np.abs(np.sum(lb * pa, -1))
        if x is None:
            return s_ab, s_ba
        xi = np.linalg.inv(x)

        def ln(l):
            return np.sqrt(np.einsum("...i,ij,...j->...", l, xi, l))

        def pn(p):
            return np.sqrt(np.einsum("...i,ij,...j->...", p, x, p))

        return s_ab / (ln(la) * pn(pb)), s_ba / (ln(lb) * pn(pa))

    def gromov_products(self, fa, fb, x=None, tol=ANTIPODAL_TOL):
        fa, fb = np.asarray(fa, float), np.asarray(fb, float)
        s1, s2 = self._sines(fa, fb, x)
        bad = (s1 <= tol) | (s2 <= tol)
        with np.errstate(divide="ignore"):
            gp = -self._c * (np.log(s1) + np.log(s2))
        return np.where(bad, np.inf, np.maximum(gp, 0.0))

    def pair_factor(self, fa, fb):
        fa, fb = np.asarray(fa, float), np.asarray(fb, float)
        s1, s2 = self._sines(fa, fb)
        return s1 * s2

    def pair_factor_matrix(self, fa, fb):
        fa, fb = np.asarray(fa, float), np.asarray(fb, float)
        return np.abs(fa[:, 0, :] @ fb[:, 1, :].T) * np.abs(fa[:, 1, :] @ fb[:, 0, :].T)

    @property
    def premetric_scale(self):
        return self._c


# ----------------------------------------------------------------------------
# single-object API


def _as_flag_array(f: Flag) -> np.ndarray:
    return f.as_array()


def _boundary_for(n, theta=None) -> SLBoundary:
    return SLBoundary(n, theta)


def attracting_flag(g, x=None, gap_tol: float = GAP_TOL, g_inv=None) -> Flag:
    """Attracting flag of the segment from ``x`` to ``g x``.

    Line: first left singular vector of ``x^{-1/2} g x^{1/2}``. Hyperplane:
    span of the first k left singular vectors. Both are read in the inner
    product of ``x`` and converted back to ambient coordinates. For long words
    pass the exactly multiplied inverse as ``g_inv``.
    """
    g = _check_square(g, "group element")
    n = g.shape[0]
    g_inv = np.linalg.inv(g) if g_inv is None else _check_square(g_inv, "inverse")
    if x is None:
        m, mi, h, hi = g, g_inv, np.eye(n), np.eye(n)
    else:
        x = check_point(x)
        h, hi = sym_power(x, 0.5), sym_power(x, -0.5)
        m, mi = hi @ g @ h, hi @ g_inv @ h
    sig = cartan_batch(m, mi)
    if sig[0] - sig[1] <= gap_tol or sig[-2] - sig[-1] <= gap_tol:
        raise NonRegularElementError(
            f"singular value gaps {sig[0] - sig[1]:.3g}, {sig[-2] - sig[-1]:.3g} not above {gap_tol:g}"
        )
    u1 = np.linalg.svd(m)[0][:, 0]
    un = np.linalg.svd(mi)[2][0, :]
    return Flag(h @ u1, hi @ un)


def antipodal(f1: Flag, f2: Flag, tol: float = ANTIPODAL_TOL) -> bool:
    """Transversality of two flags: each line misses the other hyperplane."""
    if f1.dim != f2.dim:
        raise DimensionMismatchError("flags of different dimensions")
    return bool(abs(f1.line @ f2.normal) > tol and abs(f2.line @ f1.normal) > tol)


def adapted_frame(tau: Flag, x=None) -> np.ndarray:
    """Matrix ``h`` whose columns form an x-orthonormal frame adapted to ``tau``.

    First column spans the line, the first k columns span the hyperplane.
    """
    n = tau.dim
    if x is None:
        hx, hxi = np.eye(n), np.eye(n)
    else:
        hx, hxi = sym_power(x, 0.5), sym_power(x, -0.5)
    l = hxi @ tau.line
    p = hx @ tau.normal
    l, p = l / np.linalg.norm(l), p / np.linalg.norm(p)
    q = np.empty((n, n))
    q[:, 0], q[:, -1] = l, p
    if n > 2:
        q[:, 1:-1] = null_space(np.stack([l, p]))
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return hx @ q


def ray_factor(tau: Flag, x, t: float, theta: TypeVector | None = None) -> np.ndarray:
    """Factor ``h_t`` with ``z_t = h_t h_t^T`` at Finsler distance ``t`` from ``x`` toward ``tau``."""
    theta = theta if theta is not None else default_type(tau.dim)
    return adapted_frame(tau, x) * np.exp(t * theta.theta)


def _finsler_to_factor(y, h, theta):
    """d_F(y, h h^T) using an explicit factor for accuracy far out along a ray."""
    hy, hyi = sym_power(y, 0.5), sym_power(y, -0.5)
    m = hyi @ h
    mi = np.linalg.solve(h, hy)
    return float(finsler_from_cartan(cartan_batch(m, mi), theta))


def busemann_cocycle(x, y, tau: Flag, theta: TypeVector | None = None, T: float = BUSEMANN_T,
                     tol: float = BUSEMANN_TOL) -> float:
    """``lim d_F(x, z_t) - d_F(y, z_t)`` along the ray from ``x`` toward ``tau``.

    Evaluated at ``T`` and ``2T``; ConvergenceError if the two disagree by more
    than ``tol``.
    """
    x, y = check_point(x), check_point(y)
    theta = theta if theta is not None else default_type(tau.dim)
    vals = []
    for t in (T, 2 * T):
        h = ray_factor(tau, x, t, theta)
        vals.append(_finsler_to_factor(x, h, theta) - _finsler_to_factor(y, h, theta))
    if abs(vals[1] - vals[0]) > tol:
        raise ConvergenceError(
            f"Busemann limit did not settle: {vals[0]!r} at t={T}, {vals[1]!r} at t={2 * T}",
            vals[0], vals[1])
    return vals[1]


def horospherical_distance(x, y, tau: Flag) -> float:
    """Closed form of the Busemann cocycle for the (1, k) type."""
    b = SLBoundary(tau.dim)
    f = tau.as_array()[None]
    return float(b.horofunction(check_point(x), f)[0] - b.horofunction(check_point(y), f)[0])


def gromov_product(f1: Flag, f2: Flag, x=None, tol: float = ANTIPODAL_TOL) -> float:
    """Gromov product of two flags seen from ``x``; ``inf`` if they are not antipodal."""
    if f1.dim != f2.dim:
        raise DimensionMismatchError("flags of different dimensions")
    if x is not None:
        x = check_point(x)
    return float(SLBoundary(f1.dim).gromov_products(f1.as_array(), f2.as_array(), x, tol))


def flat_point(f1: Flag, f2: Flag) -> np.ndarray:
    """A point on the maximal flat joining two antipodal flags."""
    if not antipodal(f1, f2):
        raise ValueError("flags are not antipodal")
    n = f1.dim
    cols = [f1.line]
    if n > 2:
        cols.extend(null_space(np.stack([f1.normal, f2.normal])).T)
    cols.append(f2.line)
    h = np.stack(cols, axis=1)
    det = np.linalg.det(h)
    if det < 0:
        h[:, 0] = -h[:, 0]
    h = h / abs(det) ** (1.0 / n)
    return act(h, np.eye(n))


def gromov_product_via_flat(f1: Flag, f2: Flag, x=None, theta=None) -> float:
    """Gromov product from Busemann limits at a point of the joining flat."""
    n = f1.dim
    x = np.eye(n) if x is None else check_point(x)
    z = flat_point(f1, f2)
    z = z / np.linalg.det(z) ** (1.0 / n)
    return 0.5 * (busemann_cocycle(x, z, f1, theta) + busemann_cocycle(x, z, f2, theta))


def gromov_premetric(f1: Flag, f2: Flag, x=None, eps: float = 1.0, tol: float = ANTIPODAL_TOL) -> float:
    """``exp(-eps <f1|f2>_x)``, zero for non-antipodal pairs."""
    gp = gromov_product(f1, f2, x, tol)
    return 0.0 if np.isinf(gp) else float(np.exp(-eps * gp))


def conformal_expansion(g, tau: Flag, x=None, eps: float = 1.0, theta=None) -> float:
    """Local expansion factor of ``g`` at ``tau`` for the premetric at ``x``."""
    g = _check_square(g, "group element")
    n = g.shape[0]
    x = np.eye(n) if x is None else check_point(x)
    gi = np.linalg.inv(g)
    return float(np.exp(-eps * busemann_cocycle(act(gi, x), x, tau, theta)))


def shadow_defect(x, center, tau: Flag, theta=None) -> float:
    """``d_F(x, c) - <c|tau>_x``, half the gap between distance and horospherical distance."""
    b = SLBoundary(tau.dim, theta)
    x, center = check_point(x), check_point(center)
    h = b.horofunction(x, tau.as_array()[None])[0] - b.horofunction(center, tau.as_array()[None])[0]
    d = float(b.finsler(cartan_batch(sym_power(x, -0.5) @ sym_power(center, 0.5),
                                     sym_power(center, -0.5) @ sym_power(x, 0.5))))
    return 0.5 * (d - h)


def shadow_contains_proxy(x, center, r: float, tau: Flag, kappa: float = 1.0, theta=None) -> bool:
    """Proxy shadow membership ``<c|tau>_x >= d_F(x, c) - kappa r``."""
    return shadow_defect(x, center, tau, theta) <= kappa * r
