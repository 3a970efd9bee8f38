"""CSV artifacts with ``# key=value`` header comments."""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows, meta=None):
    """Write ``rows`` under a header line, preceded by one ``# key=value`` line per ``meta`` item.

    Floats are written with ``repr`` so values round-trip exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def read_csv(path):
    """Return ``(meta, columns, rows)``; numeric cells come back as floats."""
    meta, lines = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition("=")
                meta[key] = value
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader)
    rows = []
    for r in reader:
        out = []
        for c in r:
            try:
                out.append(float(c))
            except ValueError:
                out.append(c)
        rows.append(out)
    return meta, columns, rows


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def measure_rows(mu):
    return zip(mu.centers, mu.weights)


def density_curve(kernel, x, n_points=1000):
    """Sampled transition density ``y -> p(y | x)`` on a uniform grid of the space."""
    lo, hi = kernel.space.lower, kernel.space.upper
    y = lo + (hi - lo) * (np.arange(n_points) + 0.5) / n_points
    return y, np.asarray(kernel.density(np.full(n_points, x), y), dtype=float)


def write_density_curve(path, kernel, x, n_points=1000, meta=None):
    y, d = density_curve(kernel, x, n_points)
    return write_csv(path, ["y", "density"], zip(y, d), meta)


def write_trajectory(path, points, meta=None, time_column="k", times=None):
    """One row per orbit point: index (or time) then the coordinates."""
    pts = np.asarray(points, dtype=float)
    pts = pts.reshape(len(pts), -1)
    t = np.arange(len(pts)) if times is None else times
    cols = [time_column] + [f"x{i}" for i in range(pts.shape[1])]
    return write_csv(path, cols, ([ti, *p] for ti, p in zip(t, pts)), meta)


def write_ensemble_summaries(path, summaries, meta=None):
    """Rows ``(observable, mean, stderr, n)`` from :class:`~rdslab.skew.EnsembleSummary` objects."""
    return write_csv(path, ["observable", "mean", "stderr", "n"],
                     ((s.name, s.mean, s.stderr, s.n) for s in summaries), meta)
