"""Run configuration: a YAML file checked against a fixed schema before any work starts.

Schema (every key optional unless noted; unknown keys are errors)::

    preset: schottky-sym2          # or give model + generators
    model: SL                      # SL or PRODUCT
    generators: [...]              # SL: list of n x n matrices
                                   # PRODUCT: list of [2x2, 2x2] pairs
    type_vector: [a, 0, -a]        # SL only, unit Killing norm
    max_word_length: 12
    distance_cap: 48.0             # null disables pruning
    prune_slack: 8.0
    eps: 1.0
    seed: 0
    workers: 1
    output: out
    window: {c: 0.5, samples: 32, min_width: 4.0}
    limitset: {annulus_width: 0.1}
    dimension: {n_scales: 16, lo: 0.2, hi: 0.7, min_flags: 500}
    conical: {words: [[1, 2], [2, -1], [1, 1, -2]], c: 2.0, slack: 3.0, depth: 40}
    verify: {shadow_radius: 2.0, margin: 0.05, triples: 100000, conformal_mass: 0.01,
             conformal_centers: 10, conformal_steps: [0.5, 1.0, 2.0], cocycle_cases: 200}
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .orbit_engine import GroupPresentation, WindowPolicy
from .presets import PRESETS, get_preset
from .product_geometry import RepresentationPair
from .sl_geometry import TypeVector

SECTIONS = {
    "window": {"c": 0.5, "samples": 32, "min_width": 4.0},
    "limitset": {"annulus_width": 0.1},
    "dimension": {"n_scales": 16, "lo": 0.2, "hi": 0.7, "min_flags": 500},
    "conical": {"words": [[1, 2], [2, -1], [1, 1, -2]], "c": 2.0, "slack": 3.0, "depth": 40},
    "verify": {"shadow_radius": 2.0, "margin": 0.05, "triples": 100000, "conformal_mass": 0.01,
               "conformal_centers": 10, "conformal_steps": [0.5, 1.0, 2.0], "cocycle_cases": 200},
}
TOP = {"preset", "model", "generators", "type_vector", "max_word_length", "distance_cap", "prune_slack",
       "eps", "seed", "workers", "output"} | set(SECTIONS)


@dataclass
class RunConfig:
    model: str
    generators: list | None
    preset: str | None
    type_vector: list | None
    max_word_length: int
    distance_cap: float | None
    prune_slack: float
    eps: float
    seed: int
    workers: int
    output: str
    window: dict = field(default_factory=dict)
    limitset: dict = field(default_factory=dict)
    dimension: dict = field(default_factory=dict)
    conical: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)

    def presentation(self) -> GroupPresentation:
        if self.preset is not None:
            return get_preset(self.preset).presentation()
        theta = TypeVector(np.array(self.type_vector, float)) if self.type_vector is not None else None
        if self.model == "PRODUCT":
            gens = np.array(self.generators, float)
            return GroupPresentation(RepresentationPair(list(gens[:, 0]), list(gens[:, 1])), "PRODUCT")
        return GroupPresentation([np.array(g, float) for g in self.generators], "SL", theta)

    def source(self) -> dict:
        """What identifies the group: the preset name or the literal generators."""
        if self.preset is not None:
            return {"preset": self.preset}
        return {"model": self.model, "generators": self.generators, "type_vector": self.type_vector}

    def orbit_key(self, depth: int | None = None) -> dict:
        return {"source": self.source(), "max_word_length": depth or self.max_word_length,
                "distance_cap": self.cap_for(depth or self.max_word_length), "prune_slack": self.prune_slack}

    def cap_for(self, depth: int):
        if self.distance_cap is None:
            return None
        if depth == self.max_word_length:
            return self.distance_cap
        return self.distance_cap * depth / self.max_word_length

    def window_policy(self) -> WindowPolicy:
        w = self.window
        return WindowPolicy(c=w["c"], n_samples=w["samples"], min_width=w["min_width"])

    def as_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in
                ["preset", "model", "generators", "type_vector", "max_word_length", "distance_cap",
                 "prune_slack", "eps", "seed", "workers", "output", *SECTIONS]}


def _line(node) -> int:
    return node.start_mark.line + 1


def _mapping_lines(node) -> dict:
    """Line numbers of each key in a mapping node, nested sections included."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[k.value] = (_line(k), _mapping_lines(v) if isinstance(v, yaml.MappingNode) else None)
    return out


def _num(value, name, line, kind=float, lo=None, lo_open=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number", line)
    if kind is int and (not float(value).is_integer()):
        raise ConfigError(f"{name} must be an integer", line)
    v = kind(value)
    if not math.isfinite(v):
        raise ConfigError(f"{name} must be finite", line)
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(f"{name} must be {'>' if lo_open else '>='} {lo}", line)
    return v


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a YAML config; command-line overrides win over file values."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}", mark.line + 1 if mark else None) from None
    if data is None:
        data, node = {}, None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", _line(node) if node else 1)
    lines = _mapping_lines(node)

    def ln(key, sub=None):
        entry = lines.get(key)
        if entry is None:
            return None
        if sub is not None and entry[1] and sub in entry[1]:
            return entry[1][sub][0]
        return entry[0]

    for k in data:
        if k not in TOP:
            raise ConfigError(f"unknown key {k!r}", ln(k))
    sections = {}
    for s, defaults in SECTIONS.items():
        given = data.get(s) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"{s} must be a mapping", ln(s))
        for k in given:
            if k not in defaults:
                raise ConfigError(f"unknown key {s}.{k}", ln(s, k))
        sections[s] = {**copy.deepcopy(defaults), **given}

    preset = data.get("preset")
    gens = data.get("generators")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(sorted(PRESETS))}", ln("preset"))
        if gens is not None:
            raise ConfigError("give either preset or generators, not both", ln("generators"))
        p = get_preset(preset)
        model = data.get("model", p.model)
        if model != p.model:
            raise ConfigError(f"preset {preset} uses the {p.model} model", ln("model"))
    else:
        if gens is None:
            raise ConfigError("either preset or generators is required", 1)
        model = data.get("model", "SL")
        if model not in ("SL", "PRODUCT"):
            raise ConfigError("model must be SL or PRODUCT", ln("model"))
        if not isinstance(gens, list) or not gens:
            raise ConfigError("generators must be a nonempty list", ln("generators"))
        try:
            arr = np.array(gens, float)
        except (TypeError, ValueError):
            raise ConfigError("generators must be numeric matrices of equal shape", ln("generators")) from None
        if model == "SL" and (arr.ndim != 3 or arr.shape[1] != arr.shape[2] or arr.shape[1] < 2):
            raise ConfigError("SL generators must be a list of square matrices", ln("generators"))
        if model == "PRODUCT" and arr.shape[1:] != (2, 2, 2):
            raise ConfigError("PRODUCT generators must be a list of pairs of 2x2 matrices", ln("generators"))
        p = None
    tv = data.get("type_vector")
    if tv is not None and model != "SL":
        raise ConfigError("type_vector applies to the SL model only", ln("type_vector"))

    depth_default = p.default_depth if p else 10
    depth = data.get("max_word_length", depth_default)
    depth = _num(depth, "max_word_length", ln("max_word_length"), int, lo=1)
    if "distance_cap" in data:
        cap = _num(data["distance_cap"], "distance_cap", ln("distance_cap"), lo=0, lo_open=True, allow_none=True)
    else:
        cap = p.distance_cap(depth) if p else None
    slack = _num(data.get("prune_slack", p.prune_slack if p else 3.0), "prune_slack", ln("prune_slack"), lo=0)
    cfg = RunConfig(
        model=model, generators=gens, preset=preset, type_vector=tv, max_word_length=depth,
        distance_cap=cap, prune_slack=slack,
        eps=_num(data.get("eps", 1.0), "eps", ln("eps"), lo=0, lo_open=True),
        seed=_num(data.get("seed", 0), "seed", ln("seed"), int, lo=0),
        workers=_num(data.get("workers", 1), "workers", ln("workers"), int, lo=1),
        output=str(data.get("output", "out")), **sections)
    _check_sections(cfg, ln)
    if overrides:
        apply_overrides(cfg, overrides, p)
    if tv is not None:
        try:
            TypeVector(np.array(tv, float))
        except Exception as e:
            raise ConfigError(f"type_vector: {e}", ln("type_vector")) from None
    try:
        cfg.presentation()
    except ConfigError:
        raise
    except Exception as e:
        raise ConfigError(f"generators: {e}", ln("generators") or ln("preset")) from None
    return cfg


def _check_sections(cfg: RunConfig, ln):
    w = cfg.window
    _num(w["c"], "window.c", ln("window", "c"), lo=0, lo_open=True)
    if not w["c"] < 1:
        raise ConfigError("window.c must be below 1", ln("window", "c"))
    _num(w["samples"], "window.samples", ln("window", "samples"), int, lo=8)
    _num(w["min_width"], "window.min_width", ln("window", "min_width"), lo=0, lo_open=True)
    a = _num(cfg.limitset["annulus_width"], "limitset.annulus_width", ln("limitset", "annulus_width"),
             lo=0, lo_open=True)
    if a > 1:
        raise ConfigError("limitset.annulus_width must be at most 1", ln("limitset", "annulus_width"))
    d = cfg.dimension
    _num(d["n_scales"], "dimension.n_scales", ln("dimension", "n_scales"), int, lo=8)
    if not 0 < d["lo"] < d["hi"] < 1:
        raise ConfigError("dimension.lo and dimension.hi must satisfy 0 < lo < hi < 1", ln("dimension"))
    _num(d["min_flags"], "dimension.min_flags", ln("dimension", "min_flags"), int, lo=1)
    c = cfg.conical
    if not isinstance(c["words"], list) or not c["words"] or not all(
            isinstance(wd, list) and wd and all(isinstance(x, int) and x != 0 for x in wd) for wd in c["words"]):
        raise ConfigError("conical.words must be a list of nonempty lists of nonzero letters", ln("conical", "words"))
    _num(c["c"], "conical.c", ln("conical", "c"), lo=0, lo_open=True)
    _num(c["slack"], "conical.slack", ln("conical", "slack"), lo=0)
    _num(c["depth"], "conical.depth", ln("conical", "depth"), int, lo=1)
    v = cfg.verify
    _num(v["shadow_radius"], "verify.shadow_radius", ln("verify", "shadow_radius"), lo=0, lo_open=True)
    _num(v["margin"], "verify.margin", ln("verify", "margin"), lo=0, lo_open=True)
    _num(v["triples"], "verify.triples", ln("verify", "triples"), int, lo=1)
    m = _num(v["conformal_mass"], "verify.conformal_mass", ln("verify", "conformal_mass"), lo=0, lo_open=True)
    if m >= 1:
        raise ConfigError("verify.conformal_mass must be below 1", ln("verify", "conformal_mass"))
    _num(v["conformal_centers"], "verify.conformal_centers", ln("verify", "conformal_centers"), int, lo=1)
    if not isinstance(v["conformal_steps"], list) or not v["conformal_steps"]:
        raise ConfigError("verify.conformal_steps must be a nonempty list", ln("verify", "conformal_steps"))
    for t in v["conformal_steps"]:
        _num(t, "verify.conformal_steps", ln("verify", "conformal_steps"), lo=0, lo_open=True)
    _num(v["cocycle_cases"], "verify.cocycle_cases", ln("verify", "cocycle_cases"), int, lo=1)


def apply_overrides(cfg: RunConfig, overrides: dict, preset=None):
    if overrides.get("depth") is not None:
        d = int(overrides["depth"])
        if d < 1:
            raise ConfigError("--depth must be at least 1")
        if cfg.distance_cap is not None:
            per = preset.cap_per_depth if preset and preset.cap_per_depth else cfg.distance_cap / cfg.max_word_length
            cfg.distance_cap = per * d
        cfg.max_word_length = d
    if overrides.get("eps") is not None:
        if not overrides["eps"] > 0:
            raise ConfigError("--eps must be positive")
        cfg.eps = float(overrides["eps"])
    if overrides.get("seed") is not None:
        if overrides["seed"] < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg.seed = int(overrides["seed"])
    if overrides.get("out") is not None:
        cfg.output = str(overrides["out"])


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    return parse_config(text, overrides)
