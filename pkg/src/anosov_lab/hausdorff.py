"""Covering numbers, Hausdorff content bounds and dimension estimates on premetric samples.

A cloud is a finite point set with a symmetric nonnegative pair function that
vanishes on the diagonal; the triangle inequality is not assumed. All covers
use balls ``{q : d(c, q) <= s}`` around chosen centers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from .errors import ResolutionError
from .orbit_engine import ExponentEstimate, linear_fit

BLOCK = 512
MAX_EXHAUSTIVE = 12
SYMMETRY_TOL = 1e-12


class PremetricCloud:
    """Finite premetric space given by a vectorized block function.

    ``block(I, J)`` returns the matrix of premetric values between the index
    arrays ``I`` and ``J`` (``J=None`` meaning all points). Points are the
    integers ``0..n-1``; diagonal entries are forced to zero by the accessors.
    """

    def __init__(self, n: int, block, name: str = "cloud", stats=None):
        self.n = int(n)
        self._block = block
        self.name = name
        self._diam = None
        self._nn = None
        self._fps_state = None
        # optional exact shortcut returning (diameter, nearest-neighbor array)
        self._stats = stats
        self.payload = None
        self.meta = {}

    def __len__(self):
        return self.n

    def block(self, I, J=None) -> np.ndarray:
        I = np.atleast_1d(np.asarray(I))
        out = np.array(self._block(I, None if J is None else np.atleast_1d(np.asarray(J))), float)
        if J is None:
            out[np.arange(len(I)), I] = 0.0
        else:
            J = np.atleast_1d(np.asarray(J))
            out[I[:, None] == J[None, :]] = 0.0
        return out

    def row(self, i: int, J=None) -> np.ndarray:
        return self.block(np.array([i]), J)[0]

    def pair(self, i: int, j: int) -> float:
        return float(self.block(np.array([i]), np.array([j]))[0, 0])

    def matrix(self, idx=None) -> np.ndarray:
        idx = np.arange(self.n) if idx is None else np.asarray(idx)
        return self.block(idx, idx)

    # --- constructors --------------------------------------------------------
    @classmethod
    def from_points(cls, points, name="euclidean") -> "PremetricCloud":
        """Euclidean distance between rows of ``points`` (1-D input is a column)."""
        X = np.asarray(points, float)
        if X.ndim == 1:
            X = X[:, None]

        def block(I, J):
            XJ = X if J is None else X[J]
            s = np.zeros((len(I), len(XJ)))
            for c in range(X.shape[1]):
                d = X[I, c][:, None] - XJ[None, :, c]
                s += d * d
            return np.sqrt(s)

        def stats():
            if len(X) < 2:
                return 0.0, np.full(len(X), np.inf)
            nn = cKDTree(X).query(X, k=2)[0][:, 1]
            if X.shape[1] == 1:
                return float(X.max() - X.min()), nn
            try:
                hull = X[ConvexHull(X).vertices]
            except Exception:
                hull = X
            sq = np.sum(hull * hull, axis=1)
            best = 0.0
            for a in range(0, len(hull), 2048):
                g = sq[a:a + 2048, None] + sq[None, :] - 2.0 * hull[a:a + 2048] @ hull.T
                best = max(best, float(g.max()))
            return float(np.sqrt(best)), nn

        return cls(len(X), block, name, stats)

    @classmethod
    def from_lines(cls, lines, name="chordal") -> "PremetricCloud":
        """Sine of the angle between lines, through the norm of the wedge product."""
        L = np.asarray(lines, float)
        L = L / np.linalg.norm(L, axis=1, keepdims=True)
        pairs = [(a, b) for a in range(L.shape[1]) for b in range(a + 1, L.shape[1])]

        def block(I, J):
            A, B = L[I], (L if J is None else L[J])
            s = np.zeros((len(A), len(B)))
            for a, b in pairs:
                w = np.outer(A[:, a], B[:, b]) - np.outer(A[:, b], B[:, a])
                s += w * w
            return np.sqrt(s)

        return cls(len(L), block, name)

    @classmethod
    def from_flags(cls, flags, boundary, eps: float = 1.0, name="gromov") -> "PremetricCloud":
        """Gromov premetric ``exp(-eps <a|b>)`` at the canonical basepoint.

        No antipodality cutoff is applied here: limit samples resolve pairs far
        below the cutoff used for individual flags, and distinct limit flags are
        always antipodal.
        """
        F = np.asarray(flags, float)
        p = eps * boundary.premetric_scale

        def block(I, J):
            return boundary.pair_factor_matrix(F[I], F if J is None else F[J]) ** p

        cloud = cls(len(F), block, name)
        cloud.payload = F
        cloud.meta = {"eps": float(eps), "model": boundary.model}
        return cloud

    def power(self, p: float) -> "PremetricCloud":
        """The cloud with premetric ``d**p``."""
        if p <= 0:
            raise ValueError("power must be positive")
        base = self._block

        def stats():
            # d -> d**p is increasing, so extremes carry over
            return self.diameter ** p, self.nearest_neighbor ** p

        return PremetricCloud(self.n, lambda I, J: base(I, J) ** p, f"{self.name}^{p:g}", stats)

    def subset(self, idx) -> "PremetricCloud":
        idx = np.asarray(idx)
        base = self._block
        return PremetricCloud(len(idx), lambda I, J: base(idx[I], idx if J is None else idx[J]), self.name)

    # --- cached statistics ---------------------------------------------------
    def _scan(self):
        if self._stats is not None:
            self._diam, self._nn = self._stats()
            return
        diam = 0.0
        nn = np.full(self.n, np.inf)
        for s in range(0, self.n, BLOCK):
            I = np.arange(s, min(s + BLOCK, self.n))
            B = self.block(I)
            diam = max(diam, float(B.max()) if B.size else 0.0)
            B[np.arange(len(I)), I] = np.inf
            nn[I] = B.min(axis=1)
        self._diam = diam
        self._nn = nn

    @property
    def diameter(self) -> float:
        if self._diam is None:
            self._scan()
        return self._diam

    @property
    def nearest_neighbor(self) -> np.ndarray:
        if self._nn is None:
            self._scan()
        return self._nn

    @property
    def resolution_floor(self) -> float:
        """Median nearest-neighbor value; zero for one point or repeated samples."""
        if self.n < 2:
            return 0.0
        return float(np.median(self.nearest_neighbor))

    def fps(self, stop: float = 0.0, max_points: int | None = None):
        """Farthest-point order and insertion radii, computed until the radius is ``<= stop``.

        With ``max_points`` the computation also stops once that many centers
        exist; the returned arrays may then be longer if computed earlier.

        Point 0 starts; ties go to the lowest index. ``radii[0]`` is ``inf``.
        """
        st = self._fps_state
        if st is None:
            mind = self.row(0).copy()
            st = {"order": [0], "radii": [np.inf], "mind": mind, "done": self.n == 1}
            self._fps_state = st
        while not st["done"] and st["radii"][-1] > stop and (max_points is None or len(st["order"]) < max_points):
            k = int(np.argmax(st["mind"]))
            r = float(st["mind"][k])
            if r <= 0.0:
                st["done"] = True
                break
            st["order"].append(k)
            st["radii"].append(r)
            np.minimum(st["mind"], self.row(k), out=st["mind"])
            if len(st["order"]) == self.n:
                st["done"] = True
        return np.array(st["order"]), np.array(st["radii"])

    def cover_size(self, scale: float) -> int:
        """Number of farthest-point centers needed to bring every point within ``scale``."""
        _, radii = self.fps(scale)
        return int(1 + np.count_nonzero(radii[1:] > scale))

    def check(self, rng=None, n_pairs: int = 2000) -> dict:
        """Sampled premetric axioms: zero diagonal, symmetry, finiteness, positivity."""
        rng = np.random.default_rng(0) if rng is None else rng
        I = rng.integers(0, self.n, n_pairs)
        J = rng.integers(0, self.n, n_pairs)
        a = np.array([self.pair(i, j) for i, j in zip(I, J)])
        b = np.array([self.pair(j, i) for i, j in zip(I, J)])
        diag = np.array([float(self._block(np.array([i]), np.array([i]))[0, 0]) for i in I[:50]])
        distinct = I != J
        return {
            "pairs": int(n_pairs),
            "max_asymmetry": float(np.max(np.abs(a - b))) if n_pairs else 0.0,
            "nonfinite_or_negative": int(np.count_nonzero(~np.isfinite(a) | (a < 0))),
            "zero_offdiagonal": int(np.count_nonzero(a[distinct] == 0.0)),
            "max_raw_diagonal": float(np.max(np.abs(diag))) if diag.size else 0.0,
        }


@dataclass(eq=False)
class CoverRecord:
    scale: float
    cover_size: int
    cover_centers: np.ndarray
    assignment: np.ndarray
    max_radius: float
    _cloud: PremetricCloud = field(repr=False)
    _diams: np.ndarray | None = field(default=None, repr=False)

    def cell_diameters(self) -> np.ndarray:
        if self._diams is None:
            order = np.argsort(self.assignment, kind="stable")
            bounds = np.searchsorted(self.assignment[order], np.arange(self.cover_size + 1))
            d = np.zeros(self.cover_size)
            for c in range(self.cover_size):
                members = order[bounds[c]:bounds[c + 1]]
                if members.size > 1:
                    d[c] = float(self._cloud.matrix(members).max())
            self._diams = d
        return self._diams

    def sum_diam_beta(self, beta: float, floor: float = 0.0) -> float:
        """Sum of ``max(diam, floor)**beta`` over the cells."""
        d = self.cell_diameters()
        if beta == 0:
            return float(self.cover_size)
        return float(math.fsum(np.maximum(d, floor) ** beta))


def sweep_centers(cloud: PremetricCloud, scale: float) -> np.ndarray:
    """Centers of a sweep cover started at the point farthest from point 0.

    Each step takes the uncovered point ``p`` closest to the start ``e`` and
    places the center at the point within ``scale`` of ``p`` farthest from
    ``e``, so balls are pushed outward. On an interval this is the optimal
    left-to-right cover.
    """
    e = int(np.argmax(cloud.row(0))) if cloud.n > 1 else 0
    de = cloud.row(e)
    mind = np.full(cloud.n, np.inf)
    centers = []
    while True:
        unc = np.flatnonzero(mind > scale)
        if unc.size == 0:
            break
        p = int(unc[np.argmin(de[unc])])
        near = np.flatnonzero(cloud.row(p) <= scale)
        q = int(near[np.argmax(de[near])])
        centers.append(q)
        np.minimum(mind, cloud.row(q), out=mind)
    return np.array(centers, dtype=np.int64)


def greedy_cover(cloud: PremetricCloud, scale: float, verify: bool = True) -> CoverRecord:
    """Cover at ``scale`` by the farthest-point centers or the sweep centers, whichever are fewer.

    Ties keep the farthest-point centers. Each point joins its nearest center.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    order, _ = cloud.fps(scale)
    centers = order[:cloud.cover_size(scale)]
    swept = sweep_centers(cloud, scale)
    if len(swept) < len(centers):
        centers = swept
    k = len(centers)
    assign = np.empty(cloud.n, dtype=np.int64)
    best = np.empty(cloud.n)
    for s in range(0, cloud.n, BLOCK):
        J = np.arange(s, min(s + BLOCK, cloud.n))
        B = cloud.block(centers, J)
        assign[J] = np.argmin(B, axis=0)
        best[J] = B[assign[J], np.arange(len(J))]
    rmax = float(best.max()) if cloud.n else 0.0
    if verify and rmax > scale:
        raise AssertionError(f"cover property violated: {rmax} > {scale}")
    return CoverRecord(float(scale), int(k), centers, assign, rmax, cloud)


def hausdorff_measure_upper(cloud: PremetricCloud, beta: float, scale: float, floor: float = 0.0) -> float:
    """Sum of ``max(diam(cell), floor)**beta`` over the greedy cover at ``scale``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if scale <= cloud.resolution_floor:
        raise ResolutionError(f"scale {scale:g} is not above the resolution floor {cloud.resolution_floor:g}")
    return greedy_cover(cloud, scale).sum_diam_beta(beta, floor)


def _subset_diameters(D: np.ndarray) -> np.ndarray:
    k = D.shape[0]
    diam = np.zeros(1 << k)
    for mask in range(1, 1 << k):
        low = (mask & -mask).bit_length() - 1
        rest = mask & (mask - 1)
        if rest == 0:
            continue
        others = [j for j in range(k) if rest >> j & 1]
        diam[mask] = max(diam[rest], float(D[low, others].max()))
    return diam


def optimal_cover(cloud: PremetricCloud, beta: float, mesh: float, idx=None, exact: bool = False,
                  floor: float = 0.0):
    """Exhaustive minimum of ``sum max(diam(U), floor)**beta`` over covers with cells of diameter ``<= mesh``.

    With ``floor = 0`` singletons are free, so the value of a finite set is
    zero for ``beta > 0``; a positive floor charges each cell at least
    ``floor**beta`` and makes the value informative on samples.

    Cells are subsets of the (at most 12) points, and shrinking overlapping
    cells never raises the sum, so minimizing over set partitions is
    exhaustive. With ``exact`` the search runs in rational arithmetic and the
    value is returned as a Fraction; otherwise as an exactly rounded float.
    Also returns the optimal cells as lists of point indices.
    """
    idx = np.arange(cloud.n) if idx is None else np.asarray(idx)
    k = len(idx)
    if k == 0:
        return (Fraction(0) if exact else 0.0), []
    if k > MAX_EXHAUSTIVE:
        raise ValueError(f"exhaustive covers are limited to {MAX_EXHAUSTIVE} points")
    diam = _subset_diameters(cloud.matrix(idx))
    cost = np.ones_like(diam) if beta == 0 else np.maximum(diam, floor) ** beta
    cost = [Fraction(float(c)) for c in cost] if exact else cost.tolist()
    best = [cost[0] * 0] + [None] * ((1 << k) - 1)
    choice = [0] * (1 << k)
    feasible = diam <= mesh
    for mask in range(1, 1 << k):
        low = mask & -mask
        rest = mask ^ low
        sub = rest
        bv, bc = None, 0
        while True:
            cell = sub | low
            if feasible[cell]:
                v = cost[cell] + best[mask ^ cell]
                if bv is None or v < bv:
                    bv, bc = v, cell
            if sub == 0:
                break
            sub = (sub - 1) & rest
        best[mask], choice[mask] = bv, bc
    cells, masks = [], []
    mask = (1 << k) - 1
    while mask:
        c = choice[mask]
        masks.append(c)
        cells.append([int(idx[j]) for j in range(k) if c >> j & 1])
        mask ^= c
    if exact:
        value = sum((cost[c] for c in masks), Fraction(0))
    else:
        value = math.fsum(cost[c] for c in masks)
    return value, cells


def optimal_cover_value(cloud: PremetricCloud, beta: float, mesh: float, idx=None, floor: float = 0.0) -> float:
    return float(optimal_cover(cloud, beta, mesh, idx, floor=floor)[0])


def default_scale_range(cloud: PremetricCloud, lo: float = 0.2, hi: float = 0.7):
    """Scales interpolated geometrically between the resolution floor and the diameter.

    Geometric interpolation commutes with replacing ``d`` by ``d**p``, so the
    window moves consistently under snowflaking.
    """
    floor, diam = cloud.resolution_floor, cloud.diameter
    if floor <= 0:
        raise ResolutionError("resolution floor is zero; pass an explicit scale range")
    return floor ** (1 - lo) * diam**lo, floor ** (1 - hi) * diam**hi


def dimension_estimate(cloud: PremetricCloud, scale_range=None, n_scales: int = 16,
                       critical_beta: bool = False) -> ExponentEstimate:
    """Slope of log cover size against -log scale over the given range."""
    if n_scales < 8:
        raise ValueError("need at least 8 scales")
    if scale_range is None:
        scale_range = default_scale_range(cloud)
    s_min, s_max = map(float, scale_range)
    if not (0 < s_min < s_max) or s_max > cloud.diameter:
        raise ValueError(f"degenerate scale range ({s_min:g}, {s_max:g}) for diameter {cloud.diameter:g}")
    if s_min < cloud.resolution_floor:
        raise ResolutionError(f"smallest scale {s_min:g} is below the resolution floor {cloud.resolution_floor:g}")
    scales = np.geomspace(s_min, s_max, n_scales)
    cloud.fps(s_min)
    counts = np.array([cloud.cover_size(s) for s in scales])
    x = -np.log(scales)
    slope, _, r2 = linear_fit(x, np.log(counts))
    est = ExponentEstimate(slope, (s_min, s_max), r2, n_scales, scales, counts, np.log(counts) / x, "cover")
    est.diagnostics["resolution_floor"] = cloud.resolution_floor
    est.diagnostics["diameter"] = cloud.diameter
    if critical_beta:
        est.diagnostics["critical_beta"] = critical_beta_at(cloud, s_min)
    return est


def critical_beta_at(cloud: PremetricCloud, scale: float, beta_max: float = 20.0, iters: int = 60) -> float:
    """Exponent at which the greedy content bound at ``scale`` crosses one (bisection)."""
    cover = greedy_cover(cloud, scale)
    d = cover.cell_diameters()
    d = d[d > 0]
    if d.size == 0 or cover.cover_size <= 1:
        return 0.0

    def f(b):
        return math.fsum(d**b) - 1.0

    lo, hi = 0.0, beta_max
    if f(hi) > 0:
        return math.inf
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def outer_measure_axiom_suite(cloud: PremetricCloud, beta: float, scale: float, rng=None,
                              n_pairs: int = 200, max_size: int = 8, floor: float | None = None) -> dict:
    """Check the outer-measure axioms for the exhaustive cover value on random small subsets.

    (i) empty set, (ii) monotonicity, (iii) subadditivity, and (iv)
    additivity for subsets at mutual distance above ``2*scale``. Cells cost
    ``max(diam, floor)**beta`` with ``floor`` defaulting to ``scale/2``, so
    values of nonempty subsets are positive.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    max_size = min(max_size, MAX_EXHAUSTIVE)
    floor = 0.5 * scale if floor is None else floor

    def value(idx):
        return optimal_cover(cloud, beta, scale, np.array(sorted(idx), dtype=np.int64), exact=True, floor=floor)

    report = {"empty": 0, "monotone": 0, "subadditive": 0, "separated": 0, "separated_tested": 0,
              "pairs": n_pairs, "floor": float(floor)}
    if value([])[0] != 0:
        report["empty"] = 1
    for _ in range(n_pairs):
        kb = int(rng.integers(1, max_size + 1))
        B = rng.choice(cloud.n, size=min(kb, cloud.n), replace=False)
        A = B[: int(rng.integers(0, len(B) + 1))]
        vA, vB = value(A)[0], value(B)[0]
        if vA > vB:
            report["monotone"] += 1
        C = rng.choice(cloud.n, size=min(int(rng.integers(1, max_size // 2 + 1)), cloud.n), replace=False)
        U = np.union1d(A, C)
        if len(U) <= max_size:
            if value(U)[0] > value(A)[0] + value(C)[0]:
                report["subadditive"] += 1
    # separated additivity: grow clusters far apart
    tries = 0
    while report["separated_tested"] < max(10, n_pairs // 10) and tries < 50 * n_pairs:
        tries += 1
        a0 = int(rng.integers(cloud.n))
        ra = cloud.row(a0)
        near = np.flatnonzero(ra <= scale)
        A = rng.choice(near, size=min(len(near), int(rng.integers(1, max_size // 2 + 1))), replace=False)
        dA = cloud.block(A).min(axis=0)
        far = np.flatnonzero(dA > 2 * scale)
        if far.size == 0:
            continue
        b0 = int(rng.choice(far))
        rb = cloud.row(b0)
        cand = np.intersect1d(np.flatnonzero(rb <= scale), far)
        B = rng.choice(cand, size=min(len(cand), int(rng.integers(1, max_size // 2 + 1))), replace=False)
        if cloud.block(A, B).min() <= 2 * scale:
            continue
        report["separated_tested"] += 1
        if value(np.concatenate([A, B]))[0] != value(A)[0] + value(B)[0]:
            report["separated"] += 1
    report["violations"] = report["empty"] + report["monotone"] + report["subadditive"] + report["separated"]
    return report
