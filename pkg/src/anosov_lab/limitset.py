"""Limit-flag samples and metric properties of the Gromov premetric on them.

A limit sample is the set of attracting flags of regular orbit elements in the
outermost complete annulus of a ball. On such samples the premetric
``exp(-eps <a|b>)`` is checked for the triangle inequality, and the Gromov
product for the coarse ultrametric inequality against the hyperbolicity
constant fitted on orbit points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMeasureError
from .orbit_engine import OrbitBall, completeness_radius

ANNULUS_WIDTH = 0.1
FLAG_ROUND = 9
TRIANGLE_RTOL = 1e-12
EPS_SEARCH_MAX = 64.0


@dataclass(eq=False)
class LimitSample:
    flags: np.ndarray
    element_index: np.ndarray
    radius: float
    width: float
    boundary: object

    def __len__(self):
        return len(self.flags)


def limit_flag_sample(ball: OrbitBall, width: float = ANNULUS_WIDTH, radius: float | None = None) -> LimitSample:
    """Deduplicated attracting flags of regular elements with ``d_F`` in ``[R(1-w), R)``.

    Duplicates (flags agreeing after rounding) keep their first occurrence in
    ball order, so the sample is deterministic.
    """
    if not 0 < width <= 1:
        raise ValueError("annulus width must lie in (0, 1]")
    R = completeness_radius(ball, "F") if radius is None else float(radius)
    idx = np.flatnonzero(ball.regular & (ball.d_F >= R * (1 - width)) & (ball.d_F < R))
    if idx.size == 0:
        raise EmptyMeasureError("no regular elements in the outer annulus")
    F = ball.flags[idx]
    key = np.round(F.reshape(len(F), -1), FLAG_ROUND) + 0.0
    _, first = np.unique(key, axis=0, return_index=True)
    keep = np.sort(first)
    return LimitSample(F[keep], idx[keep], R, float(width), ball.boundary)


# ----------------------------------------------------------------------------
# triangle inequality


def sample_triples(n: int, count: int, rng: np.random.Generator, flags=None, boundary=None,
                   local_fraction: float = 0.5, k_near: int = 8, near=None) -> np.ndarray:
    """Index triples of distinct points: uniform ones plus local ones.

    Local triples take a random anchor and two of its ``k_near`` nearest
    neighbors in the premetric, where triangle violations concentrate.
    """
    if n < 3:
        raise ValueError("need at least three points")
    n_loc = int(count * local_fraction) if flags is not None else 0
    n_uni = count - n_loc
    out = [_uniform_triples(n, n_uni, rng)]
    if n_loc:
        k = min(k_near, n - 1)
        if near is None:
            near = _nearest(flags, boundary, k)
        k = near.shape[1]
        a = rng.integers(0, n, n_loc)
        pick = np.argsort(rng.random((n_loc, k)), axis=1)[:, :2]
        b = near[a, pick[:, 0]]
        c = near[a, pick[:, 1]]
        out.append(np.stack([a, b, c], axis=1))
    return np.concatenate(out)


def _uniform_triples(n, count, rng):
    t = np.empty((0, 3), dtype=np.int64)
    while len(t) < count:
        c = rng.integers(0, n, (2 * (count - len(t)) + 8, 3))
        ok = (c[:, 0] != c[:, 1]) & (c[:, 1] != c[:, 2]) & (c[:, 0] != c[:, 2])
        t = np.concatenate([t, c[ok]])
    return t[:count]


def _nearest(flags, boundary, k, block=512):
    """Indices of the ``k`` nearest neighbors of each flag (largest pair factor)."""
    n = len(flags)
    out = np.empty((n, k), dtype=np.int64)
    for s in range(0, n, block):
        I = np.arange(s, min(s + block, n))
        q = boundary.pair_factor_matrix(flags[I], flags)
        q[np.arange(len(I)), I] = -np.inf
        part = np.argpartition(-q, k - 1, axis=1)[:, :k]
        # order the k candidates by decreasing factor, ties by index
        qk = np.take_along_axis(q, part, axis=1)
        o = np.lexsort((part, -qk), axis=1)
        out[I] = np.take_along_axis(part, o, axis=1)
    return out


def _triple_factors(flags, boundary, triples):
    """Pair factors ``q`` for the three sides (ab, bc, ac); premetric is ``q**(eps*scale)``."""
    a, b, c = flags[triples[:, 0]], flags[triples[:, 1]], flags[triples[:, 2]]
    q = np.stack([boundary.pair_factor(a, b), boundary.pair_factor(b, c), boundary.pair_factor(a, c)], axis=1)
    return np.clip(q, 0.0, 1.0)


def _triangle_excess(q, p):
    """Largest ``d_i - d_j - d_k`` over the three sides, with ``d = q**p``."""
    d = q**p
    tot = d.sum(axis=1)
    return np.max(2 * d - tot[:, None], axis=1), tot


def triangle_violations(flags, boundary, eps: float, triples) -> int:
    """Number of triples violating the triangle inequality of the premetric at ``eps``."""
    q = _triple_factors(flags, boundary, triples)
    ex, tot = _triangle_excess(q, eps * boundary.premetric_scale)
    return int(np.count_nonzero(ex > TRIANGLE_RTOL * tot))


def empirical_eps0(flags, boundary, triples, iters: int = 60) -> float:
    """Largest ``eps`` for which every given triple satisfies the triangle inequality.

    If ``d`` satisfies the triangle inequality so does ``d**a`` for ``a <= 1``,
    so the valid exponents of each triple form an interval starting at 0 and
    the threshold is found by a vectorized bisection.
    """
    q = _triple_factors(flags, boundary, triples)
    scale = boundary.premetric_scale
    lo = np.zeros(len(q))
    hi = np.full(len(q), EPS_SEARCH_MAX)

    def ok(e):
        ex, tot = _triangle_excess(q, (e * scale)[:, None])
        return ex <= TRIANGLE_RTOL * tot

    good_hi = ok(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g = ok(mid)
        lo = np.where(g, mid, lo)
        hi = np.where(g, hi, mid)
    thr = np.where(good_hi, EPS_SEARCH_MAX, lo)
    return float(thr.min())


# ----------------------------------------------------------------------------
# hyperbolicity and the ultrametric inequality


def orbit_distance_matrix(ball: OrbitBall, idx) -> np.ndarray:
    """Finsler distances between the orbit points ``g_i x0``, ``i`` in ``idx``."""
    idx = np.asarray(idx)
    b = ball.boundary
    M, Mi = ball.mats[idx], ball.invs[idx]
    D = np.zeros((len(idx), len(idx)))
    for a in range(len(idx)):
        m = Mi[a] @ M[a + 1:]
        mi = Mi[a + 1:] @ M[a]
        if len(m):
            D[a, a + 1:] = b.finsler(b.orbit_cartan(m, mi))
    return D + D.T


def fitted_hyperbolicity(ball: OrbitBall, n_points: int = 300, rng=None) -> float:
    """Four-point hyperbolicity constant of orbit points with basepoint ``x0``.

    Returns ``max min((x|y), (y|z)) - (x|z)`` over all triples of a sample of
    orbit points inside the completeness radius (basepoint ``x0`` as the
    fourth point).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    R = completeness_radius(ball, "F")
    pool = np.flatnonzero(ball.d_F < R)
    idx = np.sort(rng.choice(pool, min(n_points, len(pool)), replace=False))
    D = orbit_distance_matrix(ball, idx)
    d0 = ball.d_F[idx]
    P = 0.5 * (d0[:, None] + d0[None, :] - D)
    best = 0.0
    for y in range(len(idx)):
        m = np.minimum(P[:, y][:, None], P[y][None, :])
        best = max(best, float(np.max(m - P)))
    return best


def ultrametric_defect(flags, boundary, triples) -> float:
    """Largest ``min(<a|c>, <b|c>) - <a|b>`` over the triples and their rotations."""
    a, b, c = (flags[triples[:, i]] for i in range(3))
    gab = boundary.gromov_products(a, b, tol=0.0)
    gbc = boundary.gromov_products(b, c, tol=0.0)
    gac = boundary.gromov_products(a, c, tol=0.0)
    d = np.stack([np.minimum(gac, gbc) - gab, np.minimum(gab, gac) - gbc, np.minimum(gab, gbc) - gac])
    d = np.where(np.isfinite(d), d, -np.inf)
    return float(np.max(d))


@dataclass
class MetricityReport:
    eps0: float
    eps_test: float
    n_triples: int
    violations: int
    delta_hat: float
    ultrametric_defect: float
    ultrametric_bound: float

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.ultrametric_defect <= self.ultrametric_bound

    def records(self):
        return [f"{k} = {v}" for k, v in self.__dict__.items()] + [f"passed = {self.passed}"]


def metricity_report(ball: OrbitBall, sample: LimitSample, rng: np.random.Generator,
                     n_triples: int = 100_000, n_calibration: int = 100_000) -> MetricityReport:
    """Empirical eps0 on one triple set, then violations at ``eps0/2`` on a fresh one."""
    F, b = sample.flags, sample.boundary
    near = _nearest(F, b, min(8, len(F) - 1))
    cal = sample_triples(len(F), n_calibration, rng, F, b, near=near)
    eps0 = empirical_eps0(F, b, cal)
    test = sample_triples(len(F), n_triples, rng, F, b, near=near)
    viol = triangle_violations(F, b, eps0 / 2, test)
    dh = fitted_hyperbolicity(ball, rng=rng)
    ud = ultrametric_defect(F, b, test)
    return MetricityReport(eps0, eps0 / 2, len(test), viol, dh, ud, 5 * dh)
