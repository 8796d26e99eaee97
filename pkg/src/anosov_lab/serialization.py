"""Deterministic on-disk formats: orbit files, CSV tables, flag samples, SVG charts.

Every writer produces identical bytes for identical inputs: floats use the
shortest round-trip representation, gzip headers carry no timestamp, and
nothing depends on wall-clock time or dictionary order.
"""
from __future__ import annotations

import csv
import gzip
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import AnosovLabError
from .orbit_engine import GroupPresentation, OrbitBall, ball_from_words

ORBIT_FORMAT = "anosov-lab-orbit"
ORBIT_VERSION = 1
SAMPLE_FORMAT = "anosov-lab-flags"
SAMPLE_VERSION = 1
REBUILD_TOL = 1e-9


class FormatError(AnosovLabError):
    pass


def fmt(x) -> str:
    """Shortest round-trip text for a number; integers and booleans stay exact."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_bytes(path, data: bytes):
    """Write only when the content changes, so reruns leave files untouched."""
    path = Path(path)
    if path.exists() and path.read_bytes() == data:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def _gzip(data: bytes) -> bytes:
    buf = io.BytesIO()
    with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0, compresslevel=6) as f:
        f.write(data)
    return buf.getvalue()


def csv_text(header, rows) -> str:
    """RFC-4180 CSV (CRLF line ends, minimal quoting) with deterministic number formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows):
    write_bytes(path, csv_text(header, rows).encode())


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


# ----------------------------------------------------------------------------
# orbit files


def _word_text(w) -> str:
    return " ".join(str(a) for a in w)


def _parse_word(s: str) -> tuple:
    return tuple(int(a) for a in s.split()) if s.strip() else ()


def orbit_columns(ball: OrbitBall) -> list:
    n = ball.cartan.shape[1]
    nf = int(np.prod(ball.flags.shape[1:]))
    return (["word", "word_length", "d_F", "d_R"] + [f"cartan_{i}" for i in range(n)]
            + ["regular"] + [f"flag_{i}" for i in range(nf)])


def orbit_bytes(ball: OrbitBall, source: dict) -> bytes:
    """Gzipped CSV with a versioned comment header; ``source`` rebuilds the presentation."""
    head = {
        "format": ORBIT_FORMAT,
        "version": ORBIT_VERSION,
        "model": ball.model,
        "source": source,
        "max_word_length": ball.max_word_length,
        "distance_cap": ball.distance_cap,
        "prune_slack": ball.prune_slack,
        "frontier_min": {k: ball.frontier_min[k] for k in sorted(ball.frontier_min)},
        "dedup_count": ball.dedup_count,
        "truncated_by_overflow": bool(ball.truncated_by_overflow),
        "explored": ball.explored,
        "count": len(ball),
    }
    lines = [f"# {canonical_json(head)}\r\n"]
    fl = ball.flags.reshape(len(ball), -1)
    rows = ([_word_text(w), int(ball.word_length[i]), ball.d_F[i], ball.d_R[i], *ball.cartan[i],
             bool(ball.regular[i]), *fl[i]] for i, w in enumerate(ball.words))
    text = "".join(lines) + csv_text(orbit_columns(ball), rows)
    return _gzip(text.encode())


def write_orbit(path, ball: OrbitBall, source: dict):
    write_bytes(path, orbit_bytes(ball, source))


def read_orbit_header(path) -> dict:
    with gzip.open(path, "rt", newline="") as f:
        first = f.readline()
    if not first.startswith("# "):
        raise FormatError(f"{path}: missing orbit header")
    head = json.loads(first[2:])
    if head.get("format") != ORBIT_FORMAT:
        raise FormatError(f"{path}: not an orbit file")
    if head.get("version") != ORBIT_VERSION:
        raise FormatError(f"{path}: unsupported orbit format version {head.get('version')}")
    return head


def read_orbit(path, presentation: GroupPresentation) -> OrbitBall:
    """Rebuild the ball from stored words and check it against the stored columns.

    Matrices are recomputed by the same level-by-level products used in
    enumeration, so all derived columns agree bit for bit.
    """
    head = read_orbit_header(path)
    if head["model"] != presentation.model:
        raise FormatError(f"{path}: model {head['model']} does not match the presentation")
    with gzip.open(path, "rt", newline="") as f:
        f.readline()
        reader = csv.reader(f)
        cols = next(reader)
        rows = list(reader)
    if len(rows) != head["count"]:
        raise FormatError(f"{path}: expected {head['count']} rows, found {len(rows)}")
    ci = cols.index("d_F")
    words = [_parse_word(r[0]) for r in rows]
    stored = np.array([float(r[ci]) for r in rows])
    try:
        ball = ball_from_words(presentation, words, head["max_word_length"], distance_cap=head["distance_cap"],
                               prune_slack=head["prune_slack"], frontier_min=head["frontier_min"],
                               dedup_count=head["dedup_count"], truncated_by_overflow=head["truncated_by_overflow"],
                               explored=head["explored"])
    except ValueError as e:
        raise FormatError(f"{path}: words do not fit the presentation: {e}") from None
    ref = {w: d for w, d in zip(words, stored)}
    back = np.array([ref[w] for w in ball.words])
    if len(back) and np.max(np.abs(back - ball.d_F)) > REBUILD_TOL * max(1.0, float(np.max(back))):
        raise FormatError(f"{path}: stored distances do not match the presentation")
    return ball


# ----------------------------------------------------------------------------
# flag samples and point samples


def write_flag_sample(path, flags: np.ndarray, model: str, meta: dict):
    head = {"format": SAMPLE_FORMAT, "version": SAMPLE_VERSION, "model": model, **meta}
    F = np.asarray(flags, float).reshape(len(flags), -1)
    text = f"# {canonical_json(head)}\r\n" + csv_text([f"flag_{i}" for i in range(F.shape[1])], F.tolist())
    write_bytes(path, text.encode())


def read_flag_sample(path):
    with open(path, newline="") as f:
        first = f.readline()
        if not first.startswith("# "):
            raise FormatError(f"{path}: missing sample header")
        head = json.loads(first[2:])
        if head.get("format") != SAMPLE_FORMAT or head.get("version") != SAMPLE_VERSION:
            raise FormatError(f"{path}: not a version {SAMPLE_VERSION} flag sample")
        rows = list(csv.reader(f))[1:]
    F = np.array([[float(v) for v in r] for r in rows])
    m = 2 if head["model"] == "PRODUCT" else F.shape[1] // 2
    return F.reshape(len(F), 2, m), head


def read_points(path) -> np.ndarray:
    """Numeric sample file with one point per line (whitespace or comma separated)."""
    pts = []
    with open(path) as f:
        for k, line in enumerate(f, 1):
            s = line.split("#", 1)[0].replace(",", " ").split()
            if not s:
                continue
            try:
                pts.append([float(v) for v in s])
            except ValueError:
                raise FormatError(f"{path}: line {k}: not numeric") from None
    if not pts or len({len(p) for p in pts}) != 1:
        raise FormatError(f"{path}: rows must be nonempty with a common length")
    return np.array(pts)


# ----------------------------------------------------------------------------
# SVG charts


def _svg(width, height, body, title) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<title>{title}</title>\n'
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n' + body + "</svg>\n")


def _c(v) -> str:
    return f"{v:.3f}"


def disk_chart_svg(flags: np.ndarray, title: str = "limit set", size: int = 480) -> str:
    """Line components in the projective-plane disk chart ``(x, y)/(1 + |z|)`` with ``z >= 0``."""
    L = np.asarray(flags, float)[:, 0, :]
    L = L * np.where(L[:, 2:3] < 0, -1.0, 1.0)
    L = L / np.linalg.norm(L, axis=1, keepdims=True)
    p = L[:, :2] / (1.0 + L[:, 2:3])
    h = size / 2
    body = [f'<circle cx="{_c(h)}" cy="{_c(h)}" r="{_c(h - 10)}" fill="none" stroke="black"/>\n']
    for x, y in p:
        body.append(f'<circle cx="{_c(h + (h - 10) * x)}" cy="{_c(h - (h - 10) * y)}" r="1" fill="black"/>\n')
    return _svg(size, size, "".join(body), title)


def torus_chart_svg(flags: np.ndarray, title: str = "limit set", size: int = 480) -> str:
    """Pairs of boundary angles in ``[0, pi)^2`` for the product model."""
    F = np.asarray(flags, float)
    ang = np.mod(np.arctan2(F[:, :, 1], F[:, :, 0]), np.pi) / np.pi
    m = 20
    s = size - 2 * m
    body = [f'<rect x="{m}" y="{m}" width="{s}" height="{s}" fill="none" stroke="black"/>\n',
            f'<line x1="{m}" y1="{m + s}" x2="{m + s}" y2="{m}" stroke="gray" stroke-dasharray="4 4"/>\n']
    for a, b in ang:
        body.append(f'<circle cx="{_c(m + s * a)}" cy="{_c(m + s * (1 - b))}" r="1" fill="black"/>\n')
    return _svg(size, size, "".join(body), title)


def limit_chart_svg(flags, model: str, title: str = "limit set") -> str:
    if model == "PRODUCT":
        return torus_chart_svg(flags, title)
    if np.asarray(flags).shape[-1] != 3:
        raise ValueError("the disk chart is drawn for SL(3) only")
    return disk_chart_svg(flags, title)
