"""Built-in groups: a cyclic group, a lifted Schottky group and two genus-2 surface groups.

Surface groups come from centrally symmetric hyperbolic octagons whose
opposite sides are paired by translations. Each translation is the product of
the half-turns about the octagon's center and about a side midpoint; with
the side lengths scaled so the eight angles sum to 2 pi, the pairing
generates a cocompact genus-2 surface group.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .orbit_engine import GroupPresentation, letter_order, symmetric_square_lift
from .product_geometry import RepresentationPair

SCHOTTKY_LENGTH = 2.2
REGULAR_OCTAGON = ((1.0, 1.0, 1.0, 1.0), tuple(math.pi / 8 + k * math.pi / 4 for k in range(4)))
# strongly non-regular but convex octagon (smallest angles near 2 and 8 degrees)
BENT_OCTAGON = ((1.0, 2.2, 0.5, 1.5), (0.0, 0.4, 1.6, 2.3))


def hyperbolic_translation(length: float) -> np.ndarray:
    """Translation by ``length`` along the geodesic from -1 to 1."""
    c, s = math.cosh(length / 2), math.sinh(length / 2)
    return np.array([[c, s], [s, c]])


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def schottky_pair(length: float = SCHOTTKY_LENGTH):
    """Two translations with perpendicular axes through ``i``; ping-pong holds when sinh(length/2) > 1."""
    a = hyperbolic_translation(length)
    r = rotation(math.pi / 4)
    return a, r @ a @ r.T


# --- hyperboloid helpers for octagons ---------------------------------------

def _hyperboloid(z: complex) -> np.ndarray:
    x, y = z.real, z.imag
    r2 = x * x + y * y
    return np.array([(r2 + 1) / (2 * y), (r2 - 1) / (2 * y), x / y])


def _from_hyperboloid(p) -> complex:
    t, u, v = p
    y = 1.0 / (t - u)
    return complex(v * y, y)


def _minkowski(p, q) -> float:
    return -p[0] * q[0] + p[1] * q[1] + p[2] * q[2]


def _dist(z, w) -> float:
    return math.acosh(max(1.0, -_minkowski(_hyperboloid(z), _hyperboloid(w))))


def _midpoint(z, w) -> complex:
    s = _hyperboloid(z) + _hyperboloid(w)
    return _from_hyperboloid(s / math.sqrt(-_minkowski(s, s)))


def _disk_polar(rho: float, psi: float) -> complex:
    w = math.tanh(rho / 2) * complex(math.cos(psi), math.sin(psi))
    return 1j * (1 + w) / (1 - w)


def octagon_vertices(radii, angles):
    v = [_disk_polar(r, p) for r, p in zip(radii, angles)]
    return v + [_disk_polar(r, p + math.pi) for r, p in zip(radii, angles)]


def interior_angles(v) -> np.ndarray:
    n = len(v)
    out = []
    for k in range(n):
        p, q, r = v[k - 1], v[k], v[(k + 1) % n]
        a, b, c = _dist(p, r), _dist(q, p), _dist(q, r)
        cos = (math.cosh(b) * math.cosh(c) - math.cosh(a)) / (math.sinh(b) * math.sinh(c))
        out.append(math.acos(min(1.0, max(-1.0, cos))))
    return np.array(out)


def _half_turn(p: complex) -> np.ndarray:
    y = math.sqrt(p.imag)
    a = np.array([[y, p.real / y], [0.0, 1.0 / y]])
    return a @ np.array([[0.0, -1.0], [1.0, 0.0]]) @ np.linalg.inv(a)


@lru_cache(maxsize=None)
def octagon_generators(weights: tuple, angles: tuple):
    """Side-pairing translations of the octagon with vertex radii ``s * weights``.

    The scale ``s`` is solved so the interior angles sum to 2 pi.
    """
    w = np.asarray(weights, float)
    s = brentq(lambda t: interior_angles(octagon_vertices(t * w, angles)).sum() - 2 * math.pi, 0.3, 10.0,
               xtol=1e-15, rtol=1e-15)
    v = octagon_vertices(s * w, angles)
    center = _half_turn(1j)
    gens = tuple(center @ _half_turn(_midpoint(v[k], v[k + 1])) for k in range(4))
    return gens, tuple(v)


def _projective_key(m, tol=1e-8):
    f = np.concatenate([x.ravel() for x in m])
    k = np.argmax(np.abs(f) > 1e-6)
    return tuple(np.round(f * np.sign(f[k]) / tol).astype(np.int64))


@lru_cache(maxsize=None)
def surface_relation(gens_key) -> tuple:
    """A defining-length relation found by matching words of length four.

    Used only to validate deduplication; the side pairing of an octagon gives
    a single relation of length eight.
    """
    gens = [np.array(g).reshape(2, 2) for g in gens_key]
    inv = [np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]) for g in gens]
    letters = letter_order(len(gens))

    def mat(s):
        return gens[s - 1] if s > 0 else inv[-s - 1]

    seen = {}
    stack = [((), np.eye(2))]
    while stack:
        w, m = stack.pop()
        if len(w) == 4:
            k = _projective_key([m])
            if k in seen and seen[k] != w:
                u = seen[k]
                return u + tuple(-a for a in reversed(w))
            seen.setdefault(k, w)
            continue
        for s in letters:
            if w and s == -w[-1]:
                continue
            stack.append((w + (s,), m @ mat(s)))
    raise RuntimeError("no relation of length eight found")


@dataclass(frozen=True)
class Preset:
    name: str
    model: str
    default_depth: int
    cap_per_depth: float | None
    prune_slack: float
    description: str

    def presentation(self) -> GroupPresentation:
        return _build(self.name)

    def distance_cap(self, depth: int):
        return None if self.cap_per_depth is None else self.cap_per_depth * depth


PRESETS = {
    "cyclic": Preset("cyclic", "SL", 30, None, 0.0,
                     "cyclic group of a lifted hyperbolic translation in SL(3)"),
    "schottky-sym2": Preset("schottky-sym2", "SL", 14, 4.0, 8.0,
                            "symmetric-square lift of a two-generator Fuchsian Schottky group"),
    "diagonal-surface": Preset("diagonal-surface", "PRODUCT", 10, 1.0, 3.0,
                               "genus-2 surface group acting diagonally by the same Fuchsian structure"),
    "bent-surface": Preset("bent-surface", "PRODUCT", 10, 1.0, 4.0,
                           "genus-2 surface group acting by two different Fuchsian structures"),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None


@lru_cache(maxsize=None)
def _build(name: str) -> GroupPresentation:
    if name == "cyclic":
        a, _ = schottky_pair()
        return GroupPresentation([symmetric_square_lift(a)], "SL", names=("a",))
    if name == "schottky-sym2":
        a, b = schottky_pair()
        return GroupPresentation([symmetric_square_lift(a), symmetric_square_lift(b)], "SL", names=("a", "b"))
    if name in ("diagonal-surface", "bent-surface"):
        reg, _ = octagon_generators(*REGULAR_OCTAGON)
        other = reg if name == "diagonal-surface" else octagon_generators(*BENT_OCTAGON)[0]
        rel = surface_relation(tuple(tuple(g.ravel()) for g in reg))
        return GroupPresentation(RepresentationPair(reg, other), "PRODUCT", relations=(rel,),
                                 names=("a1", "a2", "a3", "a4"))
    raise KeyError(name)
