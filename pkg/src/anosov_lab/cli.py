"""Command-line driver: ``anosov-lab <orbit|exponents|limitset|dimension|verify> --config FILE``."""
from __future__ import annotations

import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path

import click
import numpy as np
import scipy

from . import __version__
from . import pipeline
from . import serialization as ser
from .config import RunConfig, load_config
from .errors import AnosovLabError, ConfigError


def _log(msg):
    click.echo(msg, err=True)


def _common(f):
    f = click.option("--seed", type=int, default=None, help="Seed for sampling.")(f)
    f = click.option("--eps", type=float, default=None, help="Premetric exponent.")(f)
    f = click.option("--depth", type=int, default=None, help="Maximal word length.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True,
                     help="YAML run configuration.")(f)
    return f


def _load(config_path, out, depth, eps, seed) -> RunConfig:
    try:
        cfg = load_config(config_path, {"out": out, "depth": depth, "eps": eps, "seed": seed})
    except ConfigError as e:
        raise click.UsageError(f"{config_path}: {e}") from None
    Path(cfg.output).mkdir(parents=True, exist_ok=True)
    return cfg


def _manifest(cfg: RunConfig, command: str, artifacts, wall: float):
    """Run record; holds wall time, so it is kept apart from the deterministic artifacts."""
    conf = ser.canonical_json(cfg.as_dict())
    data = {
        "command": command,
        "config_sha256": ser.sha256_text(conf),
        "config": cfg.as_dict(),
        "versions": {"anosov_lab": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_seconds": round(wall, 3),
        "artifacts": {Path(a).name: hashlib.sha256(Path(a).read_bytes()).hexdigest() for a in artifacts},
    }
    path = Path(cfg.output) / f"manifest-{command}.json"
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _run(command, cfg, fn):
    t0 = time.perf_counter()
    try:
        res = fn(cfg, _log)
    except AnosovLabError as e:
        raise click.ClickException(str(e)) from None
    _manifest(cfg, command, res.get("artifacts", []), time.perf_counter() - t0)
    return res


def _table(rows, header):
    def cell(v):
        if isinstance(v, float):
            return "nan" if math.isnan(v) else f"{v:.6g}"
        return str(v)

    body = [[cell(v) for v in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines)


@click.group()
@click.version_option(__version__, prog_name="anosov-lab")
def main():
    """Numerical Patterson-Sullivan theory for Anosov subgroups."""


@main.command()
@_common
def orbit(config_path, out, depth, eps, seed):
    """Enumerate the orbit ball and print counting tables."""
    cfg = _load(config_path, out, depth, eps, seed)
    res = _run("orbit", cfg, pipeline.run_orbit)
    click.echo(_table(pipeline.orbit_summary(res["ball"]), ["quantity", "value"]))
    click.echo()
    click.echo(_table(pipeline.counts_rows(res["ball"]), ["r", "N_F", "N_R"]))


@main.command()
@_common
def exponents(config_path, out, depth, eps, seed):
    """Estimate the critical exponents and check their relations."""
    cfg = _load(config_path, out, depth, eps, seed)
    res = _run("exponents", cfg, pipeline.run_exponents)
    click.echo(_table(res["rows"], pipeline.EXPONENT_HEADER))
    click.echo()
    click.echo(_table(res["checks"], ["check", "lhs", "rhs", "passed"]))


@main.command()
@_common
def limitset(config_path, out, depth, eps, seed):
    """Write the limit-flag sample and its chart."""
    cfg = _load(config_path, out, depth, eps, seed)
    res = _run("limitset", cfg, pipeline.run_limitset)
    kind, r = res["residual"]
    click.echo(f"flags = {len(res['sample'])}")
    click.echo(f"annulus_radius = {res['sample'].radius!r}")
    click.echo(f"{kind}_residual = {r!r}")


@main.command()
@_common
def dimension(config_path, out, depth, eps, seed):
    """Estimate dimensions of the limit-flag sample next to the exponents."""
    cfg = _load(config_path, out, depth, eps, seed)
    res = _run("dimension", cfg, pipeline.run_dimension)
    click.echo(_table(res["rows"], pipeline.DIMENSION_HEADER))


@main.command()
@_common
def verify(config_path, out, depth, eps, seed):
    """Run the property suite; the exit code is nonzero if any property fails."""
    cfg = _load(config_path, out, depth, eps, seed)
    res = _run("verify", cfg, pipeline.run_verify)
    click.echo(_table(res["rows"], ["property", "value", "bound", "passed", "note"]))
    if not res["passed"]:
        sys.exit(1)


if __name__ == "__main__":
    main()
