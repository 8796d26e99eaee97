"""Orbit enumeration, orbital counting and critical exponent estimation.

Balls are grown breadth-first over freely reduced words. Matrices and their
inverses are carried along so both ends of the singular spectrum stay
accurate. Elements that coincide as group elements (relations in non-free
groups) are merged by hashing rounded, scale-normalized entries.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import (
    DimensionMismatchError,
    IncompleteBallError,
    MemoryBudgetError,
    UnsupportedModelError,
    WindowError,
)
from .flag_boundary import GAP_TOL, Boundary, SLBoundary
from .product_geometry import ProductBoundary, RepresentationPair, sl2_inverse
from .sl_geometry import TypeVector, as_sl

SPREAD_CAP = 650.0
DEDUP_TOL = 1e-7
INVERSE_TOL = 1e-9
DEFAULT_MAX_ELEMENTS = 3_000_000
METRIC_TAGS = ("F", "R", "1k", "12")


def letter_order(m: int) -> list:
    """Canonical letter order 1, -1, 2, -2, ... used for shortlex ties."""
    return [s for i in range(1, m + 1) for s in (i, -i)]


class GroupPresentation:
    """Finitely many generators of a matrix group together with their inverses.

    ``model`` is "SL" for stacked (n, n) matrices or "PRODUCT" for pairs of
    2x2 matrices, given as a RepresentationPair or an array (m, 2, 2, 2).
    """

    def __init__(self, generators, model: str = "SL", theta: TypeVector | None = None,
                 dim: int | None = None, relations=(), names=None):
        if model not in ("SL", "PRODUCT"):
            raise ValueError(f"unknown model {model!r}")
        self.model = model
        if isinstance(generators, RepresentationPair):
            gens = generators.stacked()
            if model != "PRODUCT":
                raise ValueError("a representation pair needs the PRODUCT model")
        else:
            gens = [np.asarray(g, float) for g in generators]
        if model == "SL":
            gens = [as_sl(g) for g in gens]
            if gens:
                n = gens[0].shape[0]
                if any(g.shape != (n, n) for g in gens):
                    raise DimensionMismatchError("generators have different sizes")
                if dim is not None and dim != n:
                    raise DimensionMismatchError("dim does not match the generators")
            elif dim is None:
                raise ValueError("an empty generator list needs an explicit dim")
            else:
                n = int(dim)
            self.dim = n
            self.generators = np.array(gens).reshape(len(gens), n, n)
            self.inverses = np.linalg.inv(self.generators) if gens else self.generators.copy()
            self.boundary: Boundary = SLBoundary(n, theta)
            eye = np.eye(n)
        else:
            arr = np.array(gens, float).reshape(-1, 2, 2, 2)
            arr = np.array([[as_sl(f) for f in g] for g in arr]).reshape(-1, 2, 2, 2)
            self.dim = 2
            self.generators = arr
            self.inverses = sl2_inverse(arr)
            self.boundary = ProductBoundary()
            eye = np.broadcast_to(np.eye(2), (2, 2, 2))
        for k, (g, gi) in enumerate(zip(self.generators, self.inverses)):
            scale = max(1.0, float(np.max(np.abs(g))) * float(np.max(np.abs(gi))))
            if np.max(np.abs(g @ gi - eye)) > INVERSE_TOL * scale:
                raise ValueError(f"generator {k + 1} has an inaccurate inverse")
            if model == "SL":
                if np.max(np.abs(g - eye)) <= 1e-12:
                    raise ValueError(f"generator {k + 1} is the identity")
            elif all(min(np.max(np.abs(f - np.eye(2))), np.max(np.abs(f + np.eye(2)))) <= 1e-12 for f in g):
                raise ValueError(f"generator {k + 1} is the identity")
        self.relations = tuple(tuple(int(a) for a in r) for r in relations)
        self.names = tuple(names) if names else tuple(f"g{i + 1}" for i in range(len(self.generators)))

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @property
    def identity(self):
        if self.model == "SL":
            return np.eye(self.dim)
        return np.array([np.eye(2), np.eye(2)])

    def letter(self, s: int):
        k = abs(s) - 1
        if s == 0 or k >= self.n_generators:
            raise ValueError(f"invalid letter {s!r}")
        if s > 0:
            return self.generators[k], self.inverses[k]
        return self.inverses[k], self.generators[k]

    def evaluate(self, word):
        """Matrix and inverse of a word, multiplied left to right."""
        m, mi = self.identity.copy(), self.identity.copy()
        for s in word:
            a, ai = self.letter(int(s))
            m, mi = m @ a, ai @ mi
        return m, mi

    def check_relations(self, tol: float = 1e-8) -> list:
        """Distance of each stored relation from the identity, projectively for products."""
        out = []
        for r in self.relations:
            m, _ = self.evaluate(r)
            if self.model == "PRODUCT":
                out.append(max(min(np.max(np.abs(f - np.eye(2))), np.max(np.abs(f + np.eye(2)))) for f in m))
            else:
                out.append(float(np.max(np.abs(m - np.eye(self.dim)))))
        return out


@dataclass(frozen=True)
class OrbitElement:
    word: tuple
    matrix: np.ndarray
    cartan: np.ndarray
    d_F: float
    d_R: float
    flag: np.ndarray | None
    word_length: int


@dataclass(eq=False)
class OrbitBall:
    """Columnar store of an enumerated orbit, sorted by Finsler distance.

    ``frontier_min`` maps each metric tag to its minimum over elements at the
    maximal word length; together with ``distance_cap`` it bounds the radius
    up to which counts are complete.
    """

    presentation: GroupPresentation
    words: list
    mats: np.ndarray
    invs: np.ndarray
    cartan: np.ndarray
    d_F: np.ndarray
    d_R: np.ndarray
    flags: np.ndarray
    regular: np.ndarray
    word_length: np.ndarray
    max_word_length: int
    dedup_count: int = 0
    truncated_by_overflow: bool = False
    distance_cap: float | None = None
    prune_slack: float = 0.0
    frontier_min: dict = field(default_factory=dict)
    explored: int = 0

    def __len__(self):
        return len(self.words)

    @property
    def model(self) -> str:
        return self.presentation.model

    @property
    def boundary(self) -> Boundary:
        return self.presentation.boundary

    def element(self, i: int) -> OrbitElement:
        return OrbitElement(self.words[i], self.mats[i], self.cartan[i], float(self.d_F[i]),
                            float(self.d_R[i]), self.flags[i] if self.regular[i] else None,
                            int(self.word_length[i]))

    def metric(self, tag: str = "F") -> np.ndarray:
        return metric_values(self.presentation, self.cartan, self.d_F, self.d_R, tag)

    def subset(self, idx) -> "OrbitBall":
        idx = np.asarray(idx)
        return OrbitBall(self.presentation, [self.words[i] for i in idx], self.mats[idx], self.invs[idx],
                         self.cartan[idx], self.d_F[idx], self.d_R[idx], self.flags[idx], self.regular[idx],
                         self.word_length[idx], self.max_word_length, self.dedup_count,
                         self.truncated_by_overflow, self.distance_cap, self.prune_slack,
                         dict(self.frontier_min), self.explored)


def metric_values(pres, cartan, d_F, d_R, tag):
    if tag == "F":
        return d_F
    if tag == "R":
        return d_R
    if tag in ("1k", "12"):
        if pres.model != "SL":
            raise UnsupportedModelError("root exponents need the SL model")
        if tag == "1k":
            return cartan[:, 0] - cartan[:, -1]
        return cartan[:, 0] - cartan[:, 1]
    raise ValueError(f"unknown metric tag {tag!r}")


# ----------------------------------------------------------------------------
# enumeration

_HASH_MULT = None


def _hash_rows(keys: np.ndarray) -> np.ndarray:
    """Mix integer rows into one 64-bit hash with fixed odd multipliers."""
    global _HASH_MULT
    d = keys.shape[1]
    if _HASH_MULT is None or _HASH_MULT.size < d:
        rng = np.random.default_rng(20240917)
        _HASH_MULT = rng.integers(1, 2**62, size=max(d, 32), dtype=np.uint64) | np.uint64(1)
    with np.errstate(over="ignore"):
        h = keys.astype(np.uint64) * _HASH_MULT[:d]
        out = np.zeros(keys.shape[0], dtype=np.uint64)
        for j in range(d):
            out = (out ^ h[:, j]) * np.uint64(0x9E3779B97F4A7C15)
    return out


def dedup_features(model: str, mats: np.ndarray) -> np.ndarray:
    """Scale-normalized entries plus log-scale; sign-canonical per factor for PSL(2) pairs."""
    n = mats.shape[0]
    if model == "PRODUCT":
        feats = []
        for j in (0, 1):
            f = mats[:, j].reshape(n, 4)
            idx = np.argmax(np.abs(f) > 1e-6 * np.max(np.abs(f), axis=1, keepdims=True), axis=1)
            s = np.sign(f[np.arange(n), idx])
            f = f * s[:, None]
            nrm = np.linalg.norm(f, axis=1)
            feats.append(f / nrm[:, None])
            feats.append(np.log(nrm)[:, None])
        return np.hstack(feats)
    f = mats.reshape(n, mats.shape[1] * mats.shape[2])
    nrm = np.linalg.norm(f, axis=1)
    return np.hstack([f / nrm[:, None], np.log(nrm)[:, None]])


def _duplicate_mask(feats: np.ndarray, tol: float) -> np.ndarray:
    """Mark rows equal (within ``tol`` per coordinate) to an earlier row.

    Two rounding grids offset by half a cell catch pairs straddling a cell
    boundary in one of them; hash collisions are resolved by comparing the
    features themselves.
    """
    n = feats.shape[0]
    dup = np.zeros(n, dtype=bool)
    if n < 2:
        return dup
    for offset in (0.0, 0.5):
        keys = np.floor(feats / tol + offset).astype(np.int64)
        h = _hash_rows(keys)
        order = np.lexsort((np.arange(n), h))
        hs = h[order]
        same = np.flatnonzero(hs[1:] == hs[:-1]) + 1
        if same.size == 0:
            continue
        # first index of each run of equal hashes
        starts = np.ones(n, dtype=bool)
        starts[same] = False
        run_first = order[np.maximum.accumulate(np.where(starts, np.arange(n), 0))]
        cand = order[same]
        first = run_first[same]
        close = np.max(np.abs(feats[cand] - feats[first]), axis=1) <= 2 * tol
        dup[cand[close]] = True
    return dup


class _DedupIndex:
    """Hashes of all accepted elements on both rounding grids, with their features."""

    def __init__(self, tol: float):
        self.tol = tol
        self.feats = None
        self.hashes = {}
        self.ids = {}

    def _keys(self, feats, offset):
        return _hash_rows(np.floor(feats / self.tol + offset).astype(np.int64))

    def seen(self, feats: np.ndarray) -> np.ndarray:
        """Rows matching an accepted element within the tolerance."""
        dup = np.zeros(feats.shape[0], dtype=bool)
        if self.feats is None or feats.shape[0] == 0:
            return dup
        for offset in (0.0, 0.5):
            h = self._keys(feats, offset)
            hs, ids = self.hashes[offset], self.ids[offset]
            pos = np.minimum(np.searchsorted(hs, h), hs.size - 1)
            hit = np.flatnonzero(hs[pos] == h)
            if hit.size:
                close = np.max(np.abs(feats[hit] - self.feats[ids[pos[hit]]]), axis=1) <= 2 * self.tol
                dup[hit[close]] = True
        return dup

    def add(self, feats: np.ndarray):
        base = 0 if self.feats is None else self.feats.shape[0]
        self.feats = feats.copy() if self.feats is None else np.vstack([self.feats, feats])
        new_ids = np.arange(base, base + feats.shape[0])
        for offset in (0.0, 0.5):
            h = np.concatenate([self.hashes.get(offset, np.empty(0, np.uint64)), self._keys(feats, offset)])
            ids = np.concatenate([self.ids.get(offset, np.empty(0, np.int64)), new_ids])
            o = np.argsort(h, kind="stable")
            self.hashes[offset], self.ids[offset] = h[o], ids[o]


def _annotate(boundary, model, mats, invs, x, workers, chunk):
    def work(sl):
        return boundary.orbit_cartan(mats[sl], invs[sl], x)

    n = mats.shape[0]
    if workers <= 1 or n <= chunk:
        return work(slice(0, n))
    slices = [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(work, slices))
    return np.concatenate(parts, axis=0)


def _spread(model, cartan):
    if model == "SL":
        return cartan[:, 0] - cartan[:, -1]
    return np.max(cartan, axis=1)


def enumerate_ball(pres: GroupPresentation, max_word_length: int, x=None, *,
                   distance_cap: float | None = None, prune_slack: float = 3.0,
                   cone=None, max_elements: int = DEFAULT_MAX_ELEMENTS, workers: int = 1,
                   chunk_size: int = 16384, gap_tol: float = GAP_TOL,
                   dedup_tol: float = DEDUP_TOL) -> OrbitBall:
    """Enumerate the orbit over freely reduced words up to ``max_word_length``.

    With ``distance_cap`` set, candidates farther than ``distance_cap +
    prune_slack`` (Finsler) are not expanded, so the ball is complete only up
    to the cap. ``cone = (target, c, kappa, slack)`` restricts further to
    elements whose shadow defect toward the target (a flag array or a
    RayTarget) is at most ``kappa*c + slack``.
    """
    if max_word_length < 1:
        raise ValueError("max_word_length must be at least 1")
    boundary, model = pres.boundary, pres.model
    letters = letter_order(pres.n_generators)
    S = np.array([pres.letter(s)[0] for s in letters]) if letters else None
    Si = np.array([pres.letter(s)[1] for s in letters]) if letters else None
    inv_pos = {s: letters.index(-s) for s in letters}

    ident = pres.identity
    lv_mats = [ident[None]]
    lv_invs = [ident[None]]
    lv_cartan = [boundary.orbit_cartan(ident[None], ident[None], x)]
    lv_words = [[()]]
    lv_last = [np.array([-1])]
    index = _DedupIndex(dedup_tol)
    index.add(dedup_features(model, ident[None]))
    total = 1
    dedup_count = 0
    overflow = False
    explored = 1
    frontier_min = {}
    limit = np.inf if distance_cap is None else distance_cap + prune_slack
    track_mp = cone is not None and isinstance(cone[0], RayTarget)
    if track_mp:
        mpl = _mp_letters(pres)
        S_mp = np.array([mpl[s][0] for s in letters], dtype=object)
        Si_mp = np.array([mpl[s][1] for s in letters], dtype=object)
        mp_m = _to_mp(ident[None])
        mp_mi = mp_m.copy()

    for L in range(1, max_word_length + 1):
        fm, fl = lv_mats[-1], lv_last[-1]
        if not letters or fm.shape[0] == 0:
            break
        npar, nlet = fm.shape[0], len(letters)
        par = np.repeat(np.arange(npar), nlet)
        let = np.tile(np.arange(nlet), npar)
        # free reduction: never follow a letter by its inverse
        bad_inv = np.array([inv_pos[s] for s in letters])
        ok = np.ones(par.size, dtype=bool)
        has_last = fl[par] >= 0
        ok[has_last] = let[has_last] != bad_inv[fl[par[has_last]]]
        par, let = par[ok], let[ok]
        cm = fm[par] @ S[let]
        ci = Si[let] @ lv_invs[-1][par]
        explored += cm.shape[0]
        cart = _annotate(boundary, model, cm, ci, x, workers, chunk_size)
        dF = boundary.finsler(cart)
        keep = np.isfinite(dF)
        over = _spread(model, cart) > SPREAD_CAP
        if np.any(over & keep):
            overflow = True
        keep &= ~over
        if L == max_word_length and np.any(keep):
            kept_cart = cart[keep]
            vals = {
                "F": dF[keep],
                "R": boundary.riemannian(kept_cart),
            }
            if model == "SL":
                vals["1k"] = kept_cart[:, 0] - kept_cart[:, -1]
                vals["12"] = kept_cart[:, 0] - kept_cart[:, 1]
            frontier_min = {k: float(v.min()) for k, v in vals.items()}
        keep &= dF <= limit
        if cone is not None:
            target, c, kappa, cslack = cone
            k = np.flatnonzero(keep)
            if track_mp:
                with mpmath.mp.workdps(MP_DPS):
                    pm = mp_m[par[k]] @ S_mp[let[k]]
                    pmi = Si_mp[let[k]] @ mp_mi[par[k]]
                d = _target_defects(boundary, pm, pmi, dF[k], target)
            else:
                d = 0.5 * (dF[k] + boundary.orbit_horofunction(cm[k], ci[k], np.asarray(target, float)))
            ok = d <= kappa * c + cslack
            keep[k] = ok
            if track_mp:
                pm, pmi = pm[ok], pmi[ok]
        idx = np.flatnonzero(keep)
        cm, ci, cart, par, let = cm[idx], ci[idx], cart[idx], par[idx], let[idx]
        feats = dedup_features(model, cm)
        dup = index.seen(feats) | _duplicate_mask(feats, dedup_tol)
        dedup_count += int(dup.sum())
        sel = np.flatnonzero(~dup)
        cm, ci, cart, par, let = cm[sel], ci[sel], cart[sel], par[sel], let[sel]
        if track_mp:
            mp_m, mp_mi = pm[sel], pmi[sel]
        pw = lv_words[-1]
        words = [pw[p] + (letters[s],) for p, s in zip(par.tolist(), let.tolist())]
        total += len(words)
        if total > max_elements:
            partial = _assemble(pres, lv_mats, lv_invs, lv_cartan, lv_words, L - 1, dedup_count,
                                overflow, distance_cap, prune_slack, {}, explored, gap_tol)
            raise MemoryBudgetError(
                f"ball exceeds the budget of {max_elements} elements at word length {L}", partial)
        lv_mats.append(cm)
        lv_invs.append(ci)
        lv_cartan.append(cart)
        lv_words.append(words)
        lv_last.append(let)
        index.add(feats[sel])
        if cm.shape[0] == 0:
            break
    return _assemble(pres, lv_mats, lv_invs, lv_cartan, lv_words, max_word_length, dedup_count, overflow,
                     distance_cap, prune_slack, frontier_min, explored, gap_tol)


def _assemble(pres, lv_mats, lv_invs, lv_cartan, lv_words, max_len, dedup_count, overflow, cap, slack,
              frontier_min, explored, gap_tol):
    boundary = pres.boundary
    mats = np.concatenate(lv_mats)
    invs = np.concatenate(lv_invs)
    cart = np.concatenate(lv_cartan)
    words = [w for lw in lv_words for w in lw]
    wl = np.array([len(w) for w in words], dtype=np.int64)
    dF = boundary.finsler(cart)
    dR = boundary.riemannian(cart)
    flags, reg = boundary.flags(mats, invs, gap_tol)
    # bfs order is shortlex, so it breaks distance ties canonically
    order = np.lexsort((np.arange(len(words)), dF))
    return OrbitBall(pres, [words[i] for i in order], mats[order], invs[order], cart[order], dF[order],
                     dR[order], flags[order], reg[order], wl[order], max_len, dedup_count, overflow,
                     cap, slack, dict(frontier_min), explored)


def ball_from_words(pres: GroupPresentation, words, max_word_length: int, *, distance_cap=None,
                    prune_slack=0.0, frontier_min=None, dedup_count=0, truncated_by_overflow=False,
                    explored=0, gap_tol=GAP_TOL) -> OrbitBall:
    """Rebuild a ball from its words, multiplying level by level as enumeration does."""
    words = [tuple(int(a) for a in w) for w in words]
    index = {w: i for i, w in enumerate(words)}
    n = len(words)
    shape = pres.identity.shape
    mats = np.empty((n,) + shape)
    invs = np.empty((n,) + shape)
    by_len = {}
    for i, w in enumerate(words):
        by_len.setdefault(len(w), []).append(i)
    letters = letter_order(pres.n_generators)
    for L in sorted(by_len):
        idx = np.array(by_len[L])
        if L == 0:
            mats[idx], invs[idx] = pres.identity, pres.identity
            continue
        par = np.array([index[words[i][:-1]] for i in idx])
        let = [words[i][-1] for i in idx]
        S = np.array([pres.letter(s)[0] for s in let])
        Si = np.array([pres.letter(s)[1] for s in let])
        mats[idx] = mats[par] @ S
        invs[idx] = Si @ invs[par]
    del letters
    b = pres.boundary
    cart = b.orbit_cartan(mats, invs)
    return _assemble(pres, [mats], [invs], [cart], [words], max_word_length, dedup_count,
                     truncated_by_overflow, distance_cap, prune_slack, frontier_min or {}, explored, gap_tol)


# ----------------------------------------------------------------------------
# counting and exponents


def completeness_radius(ball: OrbitBall, metric_tag: str = "F") -> float:
    """Radius below which every group element is known to be in the ball."""
    fr = ball.frontier_min.get(metric_tag, math.inf)
    cap = ball.distance_cap
    if cap is None:
        return float(fr)
    if metric_tag in ("F", "R"):
        capv = cap
    elif metric_tag == "1k":
        capv = cap / math.sqrt(ball.presentation.dim)
    elif metric_tag == "12":
        capv = cap * _regularity_ratio(ball)
    else:
        raise ValueError(f"unknown metric tag {metric_tag!r}")
    return float(min(fr, capv))


def _regularity_ratio(ball: OrbitBall) -> float:
    """Smallest observed (sigma_1 - sigma_2) / d_F among elements past half the cap."""
    v = ball.metric("12")
    far = ball.d_F >= 0.5 * ball.distance_cap
    if not np.any(far):
        return 0.0
    return float(np.min(v[far] / ball.d_F[far]))


def counting_function(ball: OrbitBall, r: float, metric_tag: str = "F") -> int:
    """Number of elements with distance strictly below ``r``."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    R = completeness_radius(ball, metric_tag)
    if r > R:
        raise IncompleteBallError(f"radius {r:g} exceeds the completeness radius {R:g}; enumerate deeper")
    return int(np.count_nonzero(ball.metric(metric_tag) < r))


@dataclass(frozen=True)
class WindowPolicy:
    c: float = 0.5
    n_samples: int = 32
    min_width: float = 4.0


@dataclass(frozen=True, eq=False)
class ExponentEstimate:
    value: float
    window: tuple
    fit_quality: float
    sample_count: int
    radii: np.ndarray
    counts: np.ndarray
    limsup_sequence: np.ndarray
    metric_tag: str = "F"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError("degenerate window")
        if self.sample_count < 8:
            raise ValueError("need at least 8 samples")


def linear_fit(x, y):
    """Least-squares slope, intercept and coefficient of determination."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), float(icpt), r2


def slope_from_values(values, R: float, policy: WindowPolicy = WindowPolicy(), tag: str = "F",
                      scale: float = 1.0) -> ExponentEstimate:
    """Windowed slope of log N(r) for the sorted-or-not distance array ``values``.

    ``scale`` rescales the radius axis (``r -> r / scale``) without touching
    the counts, so a metric that is a constant multiple of another gives the
    same counts on corresponding windows.
    """
    if not math.isfinite(R):
        raise WindowError("completeness radius is infinite; the ball is closed and growth is not defined")
    if R * (1.0 - policy.c) < policy.min_width:
        raise WindowError(f"window [{policy.c * R:.3g}, {R:.3g}] narrower than {policy.min_width:g}; "
                          "enumerate a deeper ball")
    v = np.sort(np.asarray(values, float))
    radii = np.linspace(policy.c * R, R, policy.n_samples)
    counts = np.searchsorted(v, radii, side="left")
    if np.any(np.diff(counts) < 0):
        raise AssertionError("counting function is not monotone")
    if counts[0] < 1:
        raise WindowError("no elements inside the window")
    rr = radii / scale
    slope, _, r2 = linear_fit(rr, np.log(counts))
    return ExponentEstimate(slope, (float(rr[0]), float(rr[-1])), r2, policy.n_samples, rr, counts,
                            np.log(counts) / rr, tag)


def critical_exponent(ball: OrbitBall, metric_tag: str = "F", policy: WindowPolicy = WindowPolicy()
                      ) -> ExponentEstimate:
    """Growth rate of the orbital counting function for one metric."""
    return slope_from_values(ball.metric(metric_tag), completeness_radius(ball, metric_tag), policy, metric_tag)


def root_exponents(ball: OrbitBall, policy: WindowPolicy = WindowPolicy()):
    """Exponents for the counts of sigma_1 - sigma_n and sigma_1 - sigma_2."""
    if ball.model != "SL":
        raise UnsupportedModelError("root exponents need the SL model")
    return critical_exponent(ball, "1k", policy), critical_exponent(ball, "12", policy)


def finsler_from_hilbert(ball: OrbitBall, policy: WindowPolicy = WindowPolicy()) -> ExponentEstimate:
    """The Finsler exponent read off the sigma_1 - sigma_n counts.

    For the (1, n-1) type the Finsler distance is sqrt(n) times that gap, so
    both estimates come from one counting function.
    """
    if ball.model != "SL":
        raise UnsupportedModelError("needs the SL model")
    n = ball.presentation.dim
    R = completeness_radius(ball, "1k")
    return slope_from_values(ball.metric("1k"), R, policy, "F", scale=1.0 / math.sqrt(n))


MP_DPS = 60
_to_mp = np.frompyfunc(mpmath.mpf, 1, 1)


def _mp_float(a) -> np.ndarray:
    return np.asarray(a, dtype=float)


@dataclass(frozen=True, eq=False)
class RayTarget:
    """Far orbit point ``y x0`` standing in for the end of a ray.

    Horospherical distances toward a flag lose all precision once orbit
    points are farther than about 35 from ``x0`` (they are differences of
    huge matrix entries). Toward the attracting fixed flag of a loxodromic
    ``w``, the Busemann limit is reached along ``w^N x0``, and the shadow
    defect becomes ``(g x0 | y x0)`` measured at ``g x0``. The product
    ``g^-1 y`` is formed in extended precision since its norm is far below
    the product of the norms.
    """
    word: tuple
    mat: np.ndarray
    inv: np.ndarray
    mp_mat: np.ndarray
    mp_inv: np.ndarray
    reach: float


def _mp_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a square matrix or of a stack of them, at the working precision."""
    if a.ndim == 3:
        return np.array([_mp_inverse(f) for f in a], dtype=object)
    inv = mpmath.inverse(mpmath.matrix(a.tolist()))
    n = a.shape[0]
    return np.array([[inv[i, j] for j in range(n)] for i in range(n)], dtype=object)


def _mp_letters(pres: GroupPresentation):
    """Generators in extended precision with inverses exact at that precision.

    The float inverses agree with the generators only to rounding, which long
    products amplify; here the generators are taken as exact and inverted.
    """
    out = {}
    with mpmath.mp.workdps(MP_DPS):
        for k in range(pres.n_generators):
            g = _to_mp(np.asarray(pres.generators[k], float))
            gi = _mp_inverse(g)
            out[k + 1], out[-(k + 1)] = (g, gi), (gi, g)
    return out


def mp_products(pres: GroupPresentation, words) -> tuple:
    """Extended-precision matrices and inverses of the words, sharing prefixes."""
    letters = _mp_letters(pres)
    ident = _to_mp(pres.identity)
    memo = {(): (ident, ident)}
    with mpmath.mp.workdps(MP_DPS):
        for w in sorted(set(map(tuple, words)), key=len):
            if w in memo:
                continue
            m, mi = memo[w[:-1]] if w[:-1] in memo else _mp_eval(memo, letters, w[:-1])
            a, ai = letters[w[-1]]
            memo[w] = (m @ a, ai @ mi)
    mats = np.array([memo[tuple(w)][0] for w in words], dtype=object)
    invs = np.array([memo[tuple(w)][1] for w in words], dtype=object)
    return mats, invs


def _mp_eval(memo, letters, w):
    k = len(w)
    while w[:k] not in memo:
        k -= 1
    m, mi = memo[w[:k]]
    for j in range(k, len(w)):
        a, ai = letters[w[j]]
        m, mi = m @ a, ai @ mi
        memo[w[:j + 1]] = (m, mi)
    return m, mi


def ray_target(pres: GroupPresentation, word, reach: float, max_power: int = 10000) -> RayTarget:
    """Smallest power ``word^N`` whose orbit point is at Finsler distance at least ``reach``."""
    b = pres.boundary
    word = tuple(int(s) for s in word)
    if not word:
        raise ValueError("empty word")
    w, wi = pres.evaluate(word)
    m, mi = w, wi
    for n in range(1, max_power + 1):
        d = float(b.finsler(b.orbit_cartan(m[None], mi[None]))[0])
        if d >= reach:
            full = word * n
            mm, mmi = mp_products(pres, [full])
            return RayTarget(full, m, mi, mm[0], mmi[0], d)
        m, mi = m @ w, wi @ mi
    raise ValueError("word does not move the basepoint far enough")


def _target_defects(boundary, mp_mats, mp_invs, dF, target: RayTarget):
    with mpmath.mp.workdps(MP_DPS):
        a = _mp_float(mp_invs @ target.mp_mat)
        ai = _mp_float(target.mp_inv @ mp_mats)
    d_y = boundary.finsler(boundary.orbit_cartan(a, ai))
    return 0.5 * (dF + d_y - target.reach)


def shadow_defects(ball: OrbitBall, target, idx=None) -> np.ndarray:
    """Half of ``d_F`` minus the horospherical distance toward the target, per orbit point.

    ``target`` is a flag array, or a RayTarget for points far from ``x0``.
    """
    idx = np.arange(len(ball)) if idx is None else np.asarray(idx)
    if isinstance(target, RayTarget):
        if len(idx) == 0:
            return np.empty(0)
        mm, mmi = mp_products(ball.presentation, [ball.words[i] for i in idx])
        return _target_defects(ball.boundary, mm, mmi, ball.d_F[idx], target)
    horo = -ball.boundary.orbit_horofunction(ball.mats[idx], ball.invs[idx], np.asarray(target, float))
    return 0.5 * (ball.d_F[idx] - horo)


def conical_exponent_estimate(ball: OrbitBall, tau, c: float, kappa: float = 1.0,
                              policy: WindowPolicy = WindowPolicy(), min_points: int = 8) -> ExponentEstimate:
    """Growth rate of the count of orbit points within the proxy cone toward ``tau``."""
    if c <= 0:
        raise ValueError("c must be positive")
    if not isinstance(tau, RayTarget):
        tau = np.asarray(tau, float)
    R = completeness_radius(ball, "F")
    inside = shadow_defects(ball, tau) <= kappa * c
    vals = ball.d_F[inside]
    in_window = np.count_nonzero((vals >= policy.c * R) & (vals < R))
    if in_window < min_points:
        raise WindowError(f"only {in_window} conical points in the window; need {min_points}")
    est = slope_from_values(vals, R, policy, "F")
    lin_slope, lin_icpt, lin_r2 = linear_fit(est.radii, est.counts)
    est.diagnostics.update(linear_slope=lin_slope, linear_intercept=lin_icpt, linear_r2=lin_r2,
                           conical_total=int(np.count_nonzero(vals < R)))
    return est


def fit_metric_comparison(ball: OrbitBall):
    """Constants (L, A) with ``d_R / L - A <= d_F <= d_R`` on the whole ball."""
    R = completeness_radius(ball, "F")
    far = ball.d_F >= 0.5 * min(R, float(ball.d_F.max()))
    far &= ball.d_F > 0
    if not np.any(far):
        return 1.0, 0.0
    L = float(np.max(ball.d_R[far] / ball.d_F[far]))
    A = float(max(0.0, np.max(ball.d_R / L - ball.d_F)))
    return L, A


def symmetric_square_lift(g) -> np.ndarray:
    """Action of a 2x2 matrix on binary quadratic forms in an orthonormal basis.

    The basis ``x^2, sqrt(2) xy, y^2`` makes rotations act orthogonally, so a
    matrix with singular values (e^t, e^-t) lifts to one with (e^2t, 1, e^-2t).
    """
    g = np.asarray(g, float)
    if g.shape != (2, 2):
        raise DimensionMismatchError("symmetric square lift needs a 2x2 matrix")
    if abs(np.linalg.det(g) - 1.0) > 1e-9:
        raise ValueError("matrix must have unit determinant")
    a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    r = math.sqrt(2.0)
    return np.array([
        [a * a, r * a * b, b * b],
        [r * a * c, a * d + b * c, r * b * d],
        [c * c, r * c * d, d * d],
    ])


def veronese_line(v) -> np.ndarray:
    """Image of a vector of R^2 on the Veronese curve, as a unit vector of R^3."""
    v = np.asarray(v, float)
    out = np.stack([v[..., 0] ** 2, math.sqrt(2.0) * v[..., 0] * v[..., 1], v[..., 1] ** 2], axis=-1)
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def veronese_residual(lines) -> np.ndarray:
    """Distance-like residual of unit lines from the Veronese conic ``2 u1 u3 = u2^2``."""
    lines = np.asarray(lines, float)
    return np.abs(2.0 * lines[..., 0] * lines[..., 2] - lines[..., 1] ** 2)
