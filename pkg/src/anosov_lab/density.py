"""Discrete Patterson-Sullivan measures on finite orbit balls and their checks.

The measure seen from a basepoint x puts mass ``exp(-s d_F(x, g x0))`` on the
attracting flag of each regular orbit element inside the ball's complete
radius. All measures built from one ball share the normalizer computed at x0.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyMeasureError, InsufficientMassError
from .flag_boundary import R_PROXY_MIN
from .orbit_engine import OrbitBall, completeness_radius, linear_fit

MASS_FLOOR = 1e-12
DEFAULT_MARGIN = 0.05
EXTRAPOLATION_MARGINS = (0.15, 0.10, 0.05)


@dataclass(eq=False)
class PointMassMeasure:
    flags: np.ndarray
    weights: np.ndarray
    basepoint: object
    s: float
    total_mass: float
    boundary: object
    element_index: np.ndarray
    distances: np.ndarray
    at_basepoint: bool = True

    def __len__(self):
        return len(self.weights)

    def region_mass(self, mask) -> float:
        return float(math.fsum(self.weights[mask]))


def _report_records(obj) -> list:
    out = []
    for k, v in asdict(obj).items():
        if isinstance(v, np.ndarray):
            continue
        out.append(f"{k} = {v}")
    return out


def _distances_from(ball: OrbitBall, x, idx):
    if x is None:
        return ball.d_F[idx]
    b = ball.boundary
    return b.finsler(b.orbit_cartan(ball.mats[idx], ball.invs[idx], x))


def ps_measure(ball: OrbitBall, s: float, x=None, delta_hat: float | None = None) -> PointMassMeasure:
    """Point-mass approximation of the Patterson-Sullivan measure seen from ``x``.

    Atoms are restricted to regular elements closer than the completeness
    radius. Weights are divided by the sum of ``exp(-s d_F(x0, g x0))`` over
    the same elements, so the measure at ``x0`` is a probability measure.
    """
    if len(ball) == 0:
        raise EmptyMeasureError("empty ball")
    if delta_hat is not None and s <= delta_hat:
        warnings.warn(f"s = {s:g} does not exceed the estimated exponent {delta_hat:g}", RuntimeWarning)
    R = completeness_radius(ball, "F")
    idx = np.flatnonzero(ball.regular & (ball.d_F < R))
    if idx.size == 0:
        raise EmptyMeasureError("no regular orbit elements, so no atoms")
    d0 = ball.d_F[idx]
    shift = float(d0.min())
    norm = math.fsum(np.exp(-s * (d0 - shift)))
    dx = _distances_from(ball, x, idx)
    w = np.exp(-s * (dx - shift)) / norm
    bp = ball.boundary.basepoint() if x is None else x
    return PointMassMeasure(ball.flags[idx], w, bp, float(s), math.fsum(w), ball.boundary, idx, dx, x is None)


def margin_exponent(delta_hat: float, margin: float = DEFAULT_MARGIN) -> float:
    """Evaluation parameter ``s = delta_hat (1 + margin)`` standing in for the limit ``s -> delta``."""
    return float(delta_hat) * (1.0 + margin)


def premetric_ball(mu: PointMassMeasure, center, radius: float, eps: float = 1.0) -> np.ndarray:
    """Atoms within ``radius`` of ``center`` for the Gromov premetric at the canonical basepoint."""
    c = np.broadcast_to(np.asarray(center, float), mu.flags.shape)
    return mu.boundary.premetric(mu.flags, c, None, eps, tol=0.0) <= radius


def mass_quantile_radius(mu: PointMassMeasure, center, fraction: float, eps: float = 1.0) -> float:
    """Smallest premetric radius around ``center`` whose ball holds ``fraction`` of the mass."""
    c = np.broadcast_to(np.asarray(center, float), mu.flags.shape)
    d = mu.boundary.premetric(mu.flags, c, None, eps, tol=0.0)
    o = np.argsort(d, kind="stable")
    cum = np.cumsum(mu.weights[o]) / mu.total_mass
    k = min(int(np.searchsorted(cum, fraction * (1 - 1e-12))), len(o) - 1)
    return float(d[o[k]])


@dataclass
class ConformalReport:
    ratio: float
    predicted: float
    relative_deviation: float
    region_mass_fraction: float
    atoms: int
    horospherical: float

    def records(self):
        return _report_records(self)


def conformal_ratio_check(mu_x: PointMassMeasure, mu_x0: PointMassMeasure, center, radius: float,
                          eps: float = 1.0, mass_floor: float = MASS_FLOOR) -> ConformalReport:
    """Compare ``mu_x(B)/mu_x0(B)`` with ``exp(-s d_hor(x, x0))`` toward the region's center."""
    if len(mu_x) != len(mu_x0) or not np.array_equal(mu_x.element_index, mu_x0.element_index):
        raise ValueError("measures must come from the same ball")
    mask = premetric_ball(mu_x0, center, radius, eps)
    m0 = mu_x0.region_mass(mask)
    if m0 < mass_floor:
        raise InsufficientMassError(f"region mass {m0:g} below the floor {mass_floor:g}")
    m1 = mu_x.region_mass(mask)
    b = mu_x.boundary
    f = np.asarray(center, float)[None]
    horo = float(b.horofunction(mu_x.basepoint, f)[0] - b.horofunction(mu_x0.basepoint, f)[0])
    pred = math.exp(-mu_x.s * horo)
    ratio = m1 / m0
    return ConformalReport(ratio, pred, abs(ratio - pred) / pred, m0 / mu_x0.total_mass,
                           int(mask.sum()), horo)


@dataclass
class ShadowReport:
    r: float
    beta: float
    count: int
    min_ratio: float
    max_ratio: float
    C: float
    all_finite_positive: bool
    annulus: tuple
    ratios: np.ndarray = field(repr=False, default=None)

    def records(self):
        return _report_records(self)


def shadow_masses(mu: PointMassMeasure, ball: OrbitBall, idx, r: float, kappa: float = 1.0) -> np.ndarray:
    """Measure of the proxy shadow of each orbit point ``ball[i]``, ``i`` in ``idx``."""
    b = ball.boundary
    x = mu.basepoint
    h_x = b.horofunction(x, mu.flags)
    idx = np.asarray(idx, dtype=np.int64)
    dist = _distances_from(ball, None if mu.at_basepoint else x, idx)
    out = np.empty(len(idx))
    for k, i in enumerate(idx):
        horo = h_x - b.point_horofunction(ball.mats[i], ball.invs[i], mu.flags)
        d = dist[k]
        inside = 0.5 * (d - horo) <= kappa * r
        out[k] = math.fsum(mu.weights[inside])
    return out


def shadow_lemma_report(mu: PointMassMeasure, ball: OrbitBall, r: float, beta: float | None = None,
                        kappa: float = 1.0, annulus=(1 / 3, 2 / 3)) -> ShadowReport:
    """Ratios ``mu(shadow of B(g x0, r)) / exp(-beta d_F)`` over a mid-annulus of the ball.

    The annulus is given as fractions of the completeness radius; the default
    drops the inner third and the frontier third, where shadow masses are
    biased by truncation. The empirical constant is ``sqrt(max/min)``.
    """
    if r < R_PROXY_MIN:
        raise ValueError(f"shadow radius {r:g} below the proxy minimum {R_PROXY_MIN:g}")
    beta = mu.s if beta is None else beta
    R = completeness_radius(ball, "F")
    lo, hi = annulus[0] * R, annulus[1] * R
    idx = np.flatnonzero((ball.d_F >= lo) & (ball.d_F < hi))
    if idx.size == 0:
        raise EmptyMeasureError(f"no orbit points with distance in [{lo:g}, {hi:g})")
    masses = shadow_masses(mu, ball, idx, r, kappa)
    ratios = masses / np.exp(-beta * ball.d_F[idx])
    ok = bool(np.all(np.isfinite(ratios)) and np.all(ratios > 0))
    mn, mx = float(ratios.min()), float(ratios.max())
    C = math.sqrt(mx / mn) if mn > 0 else math.inf
    return ShadowReport(float(r), float(beta), int(idx.size), mn, mx, C, ok, (lo, hi), ratios)


@dataclass
class ComparisonReport:
    max_relative_discrepancy: float
    flagged: bool
    centers: int
    radii_per_center: int
    cover_scale: float
    table: list = field(repr=False, default_factory=list)

    def records(self):
        return _report_records(self)


def compare_ball_masses(boundary, flags_a, w_a, flags_b, w_b, centers, radii, eps: float = 1.0):
    """Normalized masses of the same premetric balls under two weighted flag sets."""
    w_a = np.asarray(w_a, float) / math.fsum(w_a)
    w_b = np.asarray(w_b, float) / math.fsum(w_b)
    rows = []
    for c, rs in zip(centers, radii):
        c = np.asarray(c, float)
        da = boundary.premetric(flags_a, np.broadcast_to(c, flags_a.shape), None, eps, tol=0.0)
        db = boundary.premetric(flags_b, np.broadcast_to(c, flags_b.shape), None, eps, tol=0.0)
        for rho in rs:
            ma, mb = math.fsum(w_a[da <= rho]), math.fsum(w_b[db <= rho])
            top = max(ma, mb)
            rows.append((float(rho), ma, mb, 0.0 if top == 0 else abs(ma - mb) / top))
    return rows


def covering_weights(cloud, beta: float, scale: float) -> np.ndarray:
    """Point weights of the covering measure: each greedy cell carries ``max(diam, scale)**beta``."""
    from .hausdorff import greedy_cover

    cover = greedy_cover(cloud, scale)
    cell = np.maximum(cover.cell_diameters(), scale) ** beta
    sizes = np.bincount(cover.assignment, minlength=cover.cover_size)
    return cell[cover.assignment] / sizes[cover.assignment]


def ps_vs_hausdorff_comparison(mu: PointMassMeasure, cloud, beta: float, scale: float | None = None,
                               n_centers: int = 10, quantiles=(0.05, 0.2, 0.5),
                               flag_threshold: float = 0.5) -> ComparisonReport:
    """Compare mu with the covering measure of a flag cloud on matched premetric balls.

    Centers are the first farthest-point centers of the cloud; radii are
    quantiles of each center's premetric distances to the cloud.
    """
    from .hausdorff import default_scale_range

    flags = cloud.payload
    if flags is None:
        raise ValueError("cloud does not carry flags")
    eps = cloud.meta.get("eps", 1.0)
    if scale is None:
        scale = default_scale_range(cloud)[0]
    if scale <= cloud.resolution_floor:
        from .errors import ResolutionError
        raise ResolutionError("cover scale is below the cloud's resolution floor")
    nu = covering_weights(cloud, beta, scale)
    order, _ = cloud.fps(scale)
    centers = order[:n_centers]
    radii = [np.quantile(cloud.row(int(c)), quantiles) for c in centers]
    rows = compare_ball_masses(mu.boundary, mu.flags, mu.weights, flags, nu, flags[centers], radii, eps)
    worst = max(r[3] for r in rows)
    return ComparisonReport(worst, worst > flag_threshold, len(centers), len(quantiles), float(scale), rows)


def equivariance_defect(ball: OrbitBall, letter: int, s: float) -> dict:
    """Compare atom weights of mu_{g x0} and mu_{x0} on elements related by the generator g.

    For each element h with g^-1 h also in the ball, ``d_F(g x0, h x0)`` must
    equal ``d_F(x0, g^-1 h x0)``; the report gives the largest discrepancy of
    the corresponding weights in log scale.
    """
    pres = ball.presentation
    g, gi = pres.letter(letter)
    index = {w: i for i, w in enumerate(ball.words)}
    gx = ball.boundary.orbit_point(g)
    pairs = []
    for i, w in enumerate(ball.words):
        red = list(w)
        if red and red[0] == letter:
            red = red[1:]
        else:
            red = [-letter] + red
        j = index.get(tuple(red))
        if j is not None:
            pairs.append((i, j))
    if not pairs:
        return {"pairs": 0, "max_log_weight_defect": 0.0}
    I = np.array([p[0] for p in pairs])
    J = np.array([p[1] for p in pairs])
    b = ball.boundary
    d_moved = b.finsler(b.orbit_cartan(ball.mats[I], ball.invs[I], gx))
    return {"pairs": len(pairs), "max_log_weight_defect": float(s * np.max(np.abs(d_moved - ball.d_F[J])))}


def margin_extrapolation(margins, values) -> dict:
    """Linear extrapolation of a quantity measured at several margins to margin zero."""
    if len(margins) != len(values) or len(margins) < 2:
        raise ValueError("need at least two (margin, value) pairs")
    slope, icpt, r2 = linear_fit(margins, values)
    return {"margins": list(map(float, margins)), "values": list(map(float, values)),
            "extrapolated": icpt, "slope": slope, "fit_quality": r2}
