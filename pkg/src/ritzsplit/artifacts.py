"""Run artifacts: CSV grids, pushforward histograms, quantile tables and PGM heatmaps.

All CSV files use ``,`` separators, ``.`` decimals and LF line endings.
Floats are written with ``repr`` so that reruns are byte-identical.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

QUANTILES = (5, 50, 95)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _fmt(v):
    v = float(v)
    return "nan" if np.isnan(v) else repr(v)


def write_grid(path, grid):
    """Rectangular grid, one CSV row per image row (top row first); NaN written as ``nan``."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ValueError("grid must be two-dimensional")
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        for row in grid:
            w.writerow([_fmt(v) for v in row])


def read_grid(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty grid")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged grid (row lengths {sorted(widths)})")
    return np.array([[float(v) for v in r] for r in rows])


def field_to_image(values, n):
    """Reshape a cell-centred ``n x n`` field (row = y ascending) to image order (max y on top)."""
    return np.asarray(values).reshape(n, n)[::-1]


# ----------------------------------------------------------------------------
# heatmaps


def render_heatmap(grid, out, sidecar=True):
    """Write an 8-bit grayscale PGM (P5), scaled linearly between the grid min and max.

    ``grid`` is an array or the path of a CSV grid.  NaN cells map to 0.  A
    constant grid renders black.  The scaling range goes to ``<out>.txt``.

    Returns
    -------
    (lo, hi) : the scaling range.
    """
    if isinstance(grid, (str, Path)):
        grid = read_grid(grid)
    else:
        rows = list(grid)
        if len({len(r) for r in rows}) > 1:
            raise ValueError("ragged grid")
        grid = np.asarray(rows, dtype=float)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError("grid must be a non-empty rectangle")
    finite = np.isfinite(grid)
    if finite.any():
        lo, hi = float(grid[finite].min()), float(grid[finite].max())
    else:
        lo = hi = 0.0
    img = np.zeros(grid.shape, dtype=np.uint8)
    if hi > lo:
        scaled = np.where(finite, (grid - lo) / (hi - lo), 0.0)
        img = np.rint(255.0 * scaled).astype(np.uint8)
    out = Path(out)
    h, w = img.shape
    out.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())
    if sidecar:
        Path(str(out) + ".txt").write_text(f"min={lo!r}\nmax={hi!r}\n")
    return lo, hi


def read_pgm(path):
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


# ----------------------------------------------------------------------------
# pushforward histograms


def pushforward_histogram(points, extent, bins=100):
    """2D histogram of mapped samples.

    The range is ``extent`` (x0, x1, y0, y1) widened to cover every sample,
    so the counts always sum to the number of samples.  Rows are image
    order (max y on top).

    Returns
    -------
    counts : (bins, bins) int array
    extent : the widened range actually used
    """
    p = np.asarray(points, dtype=float)
    x0, x1, y0, y1 = extent
    x0, x1 = min(x0, p[:, 0].min()), max(x1, p[:, 0].max())
    y0, y1 = min(y0, p[:, 1].min()), max(y1, p[:, 1].max())
    H, _, _ = np.histogram2d(p[:, 0], p[:, 1], bins=bins, range=[[x0, x1], [y0, y1]])
    return H.T[::-1].astype(np.int64), (x0, x1, y0, y1)


def write_counts(path, counts):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        for row in counts:
            w.writerow([int(v) for v in row])


# ----------------------------------------------------------------------------
# quantiles across repeats


def quantile_rows(series, index_name, metric):
    """Rows ``(index_name, i, metric, q05, q50, q95)`` over repeats.

    ``series`` is a list (one per repeat) of equal-length value sequences;
    only the common prefix is used if lengths differ.
    """
    n = min(len(s) for s in series)
    if n == 0:
        return []
    A = np.array([np.asarray(s[:n], dtype=float) for s in series])
    Q = np.percentile(A, QUANTILES, axis=0)
    return [(index_name, i, metric, *(_fmt(q) for q in Q[:, i])) for i in range(n)]


def write_quantiles(path, rows):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(("axis", "index", "metric") + tuple(f"q{q:02d}" for q in QUANTILES))
        for r in rows:
            w.writerow(r)
