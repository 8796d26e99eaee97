"""Computation steps behind the command-line tool, each resumable from files on disk.

Every step reads its inputs from earlier artifacts when they exist and match
the configuration (the orbit file header records the enumeration key), and
writes its outputs deterministically.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import serialization as ser
from .config import RunConfig
from .density import (
    conformal_ratio_check,
    margin_exponent,
    mass_quantile_radius,
    ps_measure,
    shadow_lemma_report,
)
from .errors import AnosovLabError, EmptyMeasureError, WindowError
from .flag_boundary import Flag, busemann_cocycle
from .hausdorff import (
    PremetricCloud,
    default_scale_range,
    dimension_estimate,
    outer_measure_axiom_suite,
)
from .limitset import LimitSample, limit_flag_sample, metricity_report
from .orbit_engine import (
    OrbitBall,
    completeness_radius,
    conical_exponent_estimate,
    counting_function,
    critical_exponent,
    enumerate_ball,
    fit_metric_comparison,
    ray_target,
    root_exponents,
    veronese_residual,
)
from .product_geometry import ProductFlag, product_busemann

N_TABLE_RADII = 16
SHADOW_STABILITY = 0.10
CONFORMAL_TOL = 0.15
AXIOM_CLOUD = 40
COCYCLE_RADIUS = 8.0
SHADOW_HORIZON = 60.0


def orbit_path(out, depth: int) -> Path:
    return Path(out) / f"orbit-L{depth}.csv.gz"


def get_ball(cfg: RunConfig, depth: int | None = None, log=None) -> OrbitBall:
    """Load the orbit ball for ``depth`` from disk if its key matches, else enumerate and save it."""
    depth = depth or cfg.max_word_length
    path = orbit_path(cfg.output, depth)
    key = cfg.orbit_key(depth)
    pres = cfg.presentation()
    if path.exists():
        head = ser.read_orbit_header(path)
        if head.get("source") == key["source"] and head["max_word_length"] == depth \
                and head["distance_cap"] == key["distance_cap"] and head["prune_slack"] == key["prune_slack"]:
            if log:
                log(f"reusing {path}")
            return ser.read_orbit(path, pres)
    if log:
        log(f"enumerating word length {depth}")
    ball = enumerate_ball(pres, depth, distance_cap=key["distance_cap"], prune_slack=cfg.prune_slack,
                          workers=cfg.workers)
    ser.write_orbit(path, ball, key["source"])
    return ser.read_orbit(path, pres)


# ----------------------------------------------------------------------------
# orbit summary


def counts_rows(ball: OrbitBall, n: int = N_TABLE_RADII) -> list:
    R = completeness_radius(ball, "F")
    if not math.isfinite(R):
        R = float(ball.d_F.max()) if len(ball) > 1 else 1.0
        radii = np.linspace(R / n, R, n)
        return [(r, int(np.count_nonzero(ball.d_F < r)), int(np.count_nonzero(ball.d_R < r))) for r in radii]
    radii = np.linspace(R / n, R, n)
    RR = completeness_radius(ball, "R")
    return [(r, counting_function(ball, r, "F"), counting_function(ball, r, "R") if r <= RR else math.nan)
            for r in radii]


def orbit_summary(ball: OrbitBall) -> list:
    L, A = fit_metric_comparison(ball)
    rows = [("elements", len(ball)), ("max_word_length", ball.max_word_length),
            ("completeness_radius_F", completeness_radius(ball, "F")),
            ("completeness_radius_R", completeness_radius(ball, "R")),
            ("dedup_count", ball.dedup_count), ("truncated_by_overflow", bool(ball.truncated_by_overflow)),
            ("regular_elements", int(np.count_nonzero(ball.regular))),
            ("metric_comparison_L", L), ("metric_comparison_A", A)]
    return rows


def run_orbit(cfg: RunConfig, log=None) -> dict:
    ball = get_ball(cfg, log=log)
    out = Path(cfg.output)
    ser.write_csv(out / "counts.csv", ["r", "N_F", "N_R"], counts_rows(ball))
    ser.write_csv(out / "orbit_summary.csv", ["quantity", "value"], orbit_summary(ball))
    return {"ball": ball, "artifacts": [orbit_path(out, ball.max_word_length), out / "counts.csv",
                                        out / "orbit_summary.csv"]}


# ----------------------------------------------------------------------------
# exponents


def conical_words(cfg: RunConfig, n_generators: int) -> list:
    words = [tuple(w) for w in cfg.conical["words"]]
    if any(abs(a) > n_generators for w in words for a in w):
        words = [(1, 2)] if n_generators >= 2 else [(1,)]
    return words


def conical_ball(cfg: RunConfig, word, log=None) -> tuple:
    pres = cfg.presentation()
    depth = int(cfg.conical["depth"])
    cap = cfg.cap_for(depth)
    if cap is None:
        raise WindowError("the conical exponent needs a distance cap")
    target = ray_target(pres, word, 2 * cap + 20)
    c, slack = cfg.conical["c"], cfg.conical["slack"]
    if log:
        log(f"enumerating the cone toward the fixed flag of {list(word)}")
    ball = enumerate_ball(pres, depth, distance_cap=cap, prune_slack=cfg.prune_slack,
                          cone=(target, c, 1.0, slack), workers=cfg.workers)
    return ball, target


def conical_estimates(cfg: RunConfig, n_generators: int, log=None) -> list:
    out = []
    policy = cfg.window_policy()
    for w in conical_words(cfg, n_generators):
        ball, target = conical_ball(cfg, w, log)
        est = conical_exponent_estimate(ball, target, cfg.conical["c"], policy=policy)
        out.append((w, est))
    return out


def _est_row(name, est, note=""):
    return (name, est.value, est.window[0], est.window[1], est.fit_quality, est.sample_count, note)


def exponent_table(cfg: RunConfig, ball: OrbitBall, log=None) -> tuple:
    """Rows of estimates and rows of consistency diagnostics."""
    policy = cfg.window_policy()
    rows, diag = [], []
    est = {}
    for tag, name in (("R", "delta_R"), ("F", "delta_F")):
        est[name] = critical_exponent(ball, tag, policy)
        rows.append(_est_row(name, est[name]))
    if ball.model == "SL":
        e1k, e12 = root_exponents(ball, policy)
        n = ball.presentation.dim
        est["delta_1_2"], est[f"delta_1_{n}"] = e12, e1k
        rows.append(_est_row("delta_1_2", e12))
        rows.append(_est_row(f"delta_1_{n}", e1k))
    try:
        con = conical_estimates(cfg, ball.presentation.n_generators, log)
        worst = max(con, key=lambda t: t[1].value)
        e = worst[1]
        note = f"sup over fixed flags of {len(con)} words; linear count r2={e.diagnostics['linear_r2']:.4f}"
        rows.append(_est_row("delta_F_conical", e, note))
        est["delta_F_conical"] = e
    except (AnosovLabError, ValueError) as exc:
        rows.append(("delta_F_conical", math.nan, math.nan, math.nan, math.nan, 0, f"not estimated: {exc}"))
    noise = 0.05
    dR, dF = est["delta_R"].value, est["delta_F"].value
    diag.append(("delta_R <= delta_F", dR, dF, dR <= dF + noise))
    if ball.model == "SL":
        n = ball.presentation.dim
        d1k, d12 = est[f"delta_1_{n}"].value, est["delta_1_2"].value
        diag.append((f"delta_F*sqrt({n}) vs delta_1_{n}", dF * math.sqrt(n), d1k,
                     abs(dF * math.sqrt(n) - d1k) <= noise))
        diag.append((f"delta_1_{n} <= delta_1_2/2", d1k, d12 / 2, d1k <= d12 / 2 + noise))
    return rows, diag, est


EXPONENT_HEADER = ["exponent", "value", "window_lo", "window_hi", "fit_quality", "samples", "note"]


def run_exponents(cfg: RunConfig, log=None) -> dict:
    ball = get_ball(cfg, log=log)
    rows, diag, est = exponent_table(cfg, ball, log)
    out = Path(cfg.output)
    ser.write_csv(out / "exponents.csv", EXPONENT_HEADER, rows)
    ser.write_csv(out / "exponent_checks.csv", ["check", "lhs", "rhs", "passed"], diag)
    return {"ball": ball, "rows": rows, "checks": diag, "estimates": est,
            "artifacts": [out / "exponents.csv", out / "exponent_checks.csv"]}


def load_exponent(cfg: RunConfig, name: str, log=None) -> float:
    """Value from exponents.csv, computing the table if it is missing."""
    path = Path(cfg.output) / "exponents.csv"
    if not path.exists():
        run_exponents(cfg, log)
    head, rows = ser.read_csv(path)
    for r in rows:
        if r[0] == name:
            return float(r[1])
    raise KeyError(name)


# ----------------------------------------------------------------------------
# limit set


def sample_residual(flags, model: str) -> tuple:
    """Distance of the sample from its expected curve: torus diagonal or Veronese conic."""
    F = np.asarray(flags, float)
    if model == "PRODUCT":
        a, b = F[:, 0], F[:, 1]
        return "diagonal", float(np.max(np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])))
    if F.shape[-1] == 3:
        return "veronese", float(np.max(veronese_residual(F[:, 0])))
    return "none", math.nan


def run_limitset(cfg: RunConfig, log=None) -> dict:
    ball = get_ball(cfg, log=log)
    S = limit_flag_sample(ball, cfg.limitset["annulus_width"])
    out = Path(cfg.output)
    meta = {"count": len(S), "radius": S.radius, "annulus_width": S.width, "key": cfg.orbit_key()}
    ser.write_flag_sample(out / "limitset.csv", S.flags, ball.model, meta)
    svg = ser.limit_chart_svg(S.flags, ball.model, f"limit flags ({len(S)})") \
        if ball.model == "PRODUCT" or S.flags.shape[-1] == 3 else None
    arts = [out / "limitset.csv"]
    if svg is not None:
        ser.write_bytes(out / "limitset.svg", svg.encode())
        arts.append(out / "limitset.svg")
    kind, res = sample_residual(S.flags, ball.model)
    return {"sample": S, "residual": (kind, res), "artifacts": arts}


def load_limitset(cfg: RunConfig, log=None):
    path = Path(cfg.output) / "limitset.csv"
    if path.exists():
        F, head = ser.read_flag_sample(path)
        if head.get("key") == cfg.orbit_key() and head.get("annulus_width") == cfg.limitset["annulus_width"]:
            return F, head
    run_limitset(cfg, log)
    return ser.read_flag_sample(path)


# ----------------------------------------------------------------------------
# dimension


def dimension_rows(cfg: RunConfig, flags, boundary, delta_F: float) -> list:
    d = cfg.dimension
    eps = cfg.eps
    rows = []
    clouds = [("hd_dg_eps", PremetricCloud.from_flags(flags, boundary, eps), delta_F / eps),
              ("hd_dg_eps_via_power", PremetricCloud.from_flags(flags, boundary, 1.0).power(eps), delta_F / eps)]
    if boundary.model == "SL":
        clouds.append(("hd_R_lines", PremetricCloud.from_lines(flags[:, 0]), math.nan))
    for name, cloud, pred in clouds:
        rng = default_scale_range(cloud, d["lo"], d["hi"])
        est = dimension_estimate(cloud, rng, int(d["n_scales"]))
        rows.append((name, est.value, est.fit_quality, rng[0], rng[1], pred))
    return rows


DIMENSION_HEADER = ["quantity", "value", "fit_quality", "scale_lo", "scale_hi", "prediction"]


def run_dimension(cfg: RunConfig, log=None) -> dict:
    F, head = load_limitset(cfg, log)
    if len(F) < int(cfg.dimension["min_flags"]):
        raise EmptyMeasureError(f"flag sample has {len(F)} flags; need at least {cfg.dimension['min_flags']}")
    delta_F = load_exponent(cfg, "delta_F", log)
    boundary = cfg.presentation().boundary
    rows = dimension_rows(cfg, F, boundary, delta_F)
    rows.append(("delta_F", delta_F, math.nan, math.nan, math.nan, math.nan))
    if boundary.model == "SL":
        n = boundary.n
        for nm in ("delta_1_2", f"delta_1_{n}"):
            rows.append((nm, load_exponent(cfg, nm, log), math.nan, math.nan, math.nan, math.nan))
    out = Path(cfg.output)
    ser.write_csv(out / "dimension.csv", DIMENSION_HEADER, rows)
    return {"rows": rows, "artifacts": [out / "dimension.csv"]}


# ----------------------------------------------------------------------------
# verification suite


def cocycle_defects(ball: OrbitBall, flags, n_cases: int, rng) -> float:
    """Largest ``|b(x,y) + b(y,z) - b(x,z)|`` with Busemann values from the ray limit.

    Points are orbit points of moderate distance, directions are limit flags.
    When fewer than three orbit points are that close (long generators), the
    points are taken on rays of length at most ``COCYCLE_RADIUS`` instead.
    """
    idx = np.flatnonzero(ball.d_F < min(COCYCLE_RADIUS, completeness_radius(ball, "F")))
    b = ball.boundary
    worst = 0.0
    for _ in range(n_cases):
        f = flags[int(rng.integers(len(flags)))]
        if idx.size >= 3:
            pts = [b.orbit_point(ball.mats[m]) for m in rng.choice(idx, 3, replace=False)]
        else:
            pts = [b.ray_point(flags[int(rng.integers(len(flags)))], float(rng.uniform(0, COCYCLE_RADIUS)))
                   for _ in range(3)]
        if ball.model == "SL":
            tau = Flag(f[0], f[1])

            def B(p, q):
                return busemann_cocycle(p, q, tau)
        else:
            tau = ProductFlag.from_array(f)

            def B(p, q):
                return product_busemann(p, q, tau)
        worst = max(worst, abs(B(pts[0], pts[1]) + B(pts[1], pts[2]) - B(pts[0], pts[2])))
    return worst


def shadow_stability(cfg: RunConfig, s: float, log=None) -> tuple:
    r = cfg.verify["shadow_radius"]
    b0 = get_ball(cfg, log=log)
    b1 = get_ball(cfg, cfg.max_word_length + 1, log=log)
    # horofunction differences lose float precision far out, so the annulus stays below a horizon
    R0 = min(completeness_radius(b0, "F"), SHADOW_HORIZON)
    reps = []
    for b in (b0, b1):
        R = completeness_radius(b, "F")
        mu = ps_measure(b, s)
        reps.append(shadow_lemma_report(mu, b, r, annulus=(R0 / 3 / R, 2 * R0 / 3 / R)))
    return reps


def conformal_deviation(cfg: RunConfig, ball: OrbitBall, s: float, rng) -> tuple:
    """Worst relative deviation of region-mass ratios from the conformal prediction."""
    v = cfg.verify
    mu = ps_measure(ball, s)
    b = ball.boundary
    p = mu.weights / mu.total_mass
    worst, n = 0.0, 0
    for i in rng.choice(len(mu), size=int(v["conformal_centers"]), p=p):
        c = mu.flags[int(i)]
        rad = mass_quantile_radius(mu, c, v["conformal_mass"])
        for t in v["conformal_steps"]:
            mux = ps_measure(ball, s, b.ray_point(c, float(t)))
            rep = conformal_ratio_check(mux, mu, c, rad)
            if rep.region_mass_fraction >= v["conformal_mass"] * (1 - 1e-9):
                worst = max(worst, rep.relative_deviation)
                n += 1
    return worst, n


def run_verify(cfg: RunConfig, log=None) -> dict:
    rng = np.random.default_rng(cfg.seed)
    ball = get_ball(cfg, log=log)
    F, _ = load_limitset(cfg, log)
    delta_F = load_exponent(cfg, "delta_F", log)
    s = margin_exponent(delta_F, cfg.verify["margin"])
    rows = []

    def add(name, value, bound, passed, note=""):
        rows.append((name, value, bound, passed if passed == "skipped" else bool(passed), note))

    cd = cocycle_defects(ball, F, int(cfg.verify["cocycle_cases"]), rng)
    add("busemann_cocycle_defect", cd, 1e-6, cd < 1e-6)
    try:
        r0, r1 = shadow_stability(cfg, s, log)
        add("shadow_ratios_finite_positive", r0.min_ratio, 0.0, r0.all_finite_positive and r1.all_finite_positive,
            f"{r0.count} orbit points")
        ch = abs(r1.C / r0.C - 1.0)
        add("shadow_C_depth_change", ch, SHADOW_STABILITY, ch <= SHADOW_STABILITY, f"C={r0.C!r} -> {r1.C!r}")
    except (AnosovLabError, ValueError) as exc:
        add("shadow_ratios_finite_positive", math.nan, 0.0, False, str(exc))
    wc, nc = conformal_deviation(cfg, ball, s, rng)
    add("conformal_max_relative_deviation", wc, CONFORMAL_TOL, nc > 0 and wc <= CONFORMAL_TOL, f"{nc} regions")
    if len(F) < 3:
        note = f"skipped: {len(F)} limit flags"
        for name in ("premetric_eps0", "triangle_violations_at_half_eps0", "ultrametric_defect",
                     "outer_measure_axiom_violations"):
            add(name, math.nan, math.nan, "skipped", note)
    else:
        S = LimitSample(F, np.arange(len(F)), math.nan, cfg.limitset["annulus_width"], ball.boundary)
        met = metricity_report(ball, S, rng, n_triples=int(cfg.verify["triples"]),
                               n_calibration=int(cfg.verify["triples"]))
        add("premetric_eps0", met.eps0, 0.0, met.eps0 > 0)
        add("triangle_violations_at_half_eps0", met.violations, 0, met.violations == 0, f"{met.n_triples} triples")
        add("ultrametric_defect", met.ultrametric_defect, met.ultrametric_bound,
            met.ultrametric_defect <= met.ultrametric_bound, f"delta_hat={met.delta_hat!r}")
        cloud = PremetricCloud.from_flags(F, ball.boundary, cfg.eps)
        order, _ = cloud.fps(max_points=AXIOM_CLOUD)
        small = cloud.subset(np.sort(order[:AXIOM_CLOUD]))
        scale = float(np.median(small.nearest_neighbor))
        ax = outer_measure_axiom_suite(small, delta_F / cfg.eps, scale, rng)
        add("outer_measure_axiom_violations", ax["violations"], 0, ax["violations"] == 0,
            f"{ax['separated_tested']} separated pairs")
    out = Path(cfg.output)
    ser.write_csv(out / "verify.csv", ["property", "value", "bound", "passed", "note"], rows)
    return {"rows": rows, "passed": all(r[3] is not False for r in rows), "artifacts": [out / "verify.csv"]}
