"""Domains, uniform collocation and seed-based adaptive importance resampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

DEFENSIVE_MIX = 0.1
POOL_FACTOR = 10
SEED_FRACTION = 0.01


@dataclass(frozen=True)
class Square:
    side: float = 1.0
    origin: tuple = (0.0, 0.0)

    @property
    def area(self):
        return self.side ** 2

    @property
    def perimeter(self):
        return 4.0 * self.side

    def bbox(self):
        o = np.asarray(self.origin, dtype=float)
        return o, o + self.side

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.bbox()
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def sample_interior(self, n, rng):
        return np.asarray(self.origin) + self.side * rng.random((n, 2))

    def sample_boundary(self, n, rng):
        # each edge has the same length, so a uniform edge index is arclength-uniform
        edge = rng.integers(0, 4, n)
        s = rng.random(n)
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        a = corners[edge]
        b = corners[(edge + 1) % 4]
        return np.asarray(self.origin) + self.side * (a + s[:, None] * (b - a))


@dataclass(frozen=True)
class Disk:
    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    @property
    def area(self):
        return np.pi * self.radius ** 2

    @property
    def perimeter(self):
        return 2.0 * np.pi * self.radius

    def bbox(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def contains(self, x):
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        return (d ** 2).sum(-1) <= self.radius ** 2

    def sample_interior(self, n, rng):
        return _rejection(self, n, rng)

    def sample_boundary(self, n, rng):
        t = rng.uniform(0.0, 2.0 * np.pi, n)
        return np.asarray(self.center) + self.radius * np.stack([np.cos(t), np.sin(t)], -1)


@dataclass(frozen=True)
class Ellipse:
    center: tuple = (0.0, 0.0)
    axes: tuple = (1.0, 1.0)
    _table: tuple = field(default=None, init=False, repr=False, compare=False)

    @property
    def area(self):
        return np.pi * self.axes[0] * self.axes[1]

    @property
    def perimeter(self):
        return float(self._arclength()[1][-1])

    def bbox(self):
        c = np.asarray(self.center, dtype=float)
        a = np.asarray(self.axes, dtype=float)
        return c - a, c + a

    def contains(self, x):
        d = (np.asarray(x, dtype=float) - np.asarray(self.center)) / np.asarray(self.axes)
        return (d ** 2).sum(-1) <= 1.0

    def sample_interior(self, n, rng):
        return _rejection(self, n, rng)

    def _arclength(self, n=20001):
        # cumulative perimeter s(t) on a fine parameter grid; trapezoid on a
        # smooth periodic integrand is accurate far beyond 1e-6 here
        if self._table is None:
            a, b = self.axes
            t = np.linspace(0.0, 2.0 * np.pi, n)
            speed = np.hypot(a * np.sin(t), b * np.cos(t))
            s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t))])
            object.__setattr__(self, "_table", (t, s))
        return self._table

    def sample_boundary(self, n, rng):
        t, s = self._arclength()
        tt = np.interp(rng.random(n) * s[-1], s, t)
        a, b = self.axes
        return np.asarray(self.center) + np.stack([a * np.cos(tt), b * np.sin(tt)], -1)


def _rejection(domain, n, rng):
    lo, hi = domain.bbox()
    frac = domain.area / np.prod(hi - lo)
    out = []
    got = 0
    while got < n:
        m = int(1.2 * (n - got) / frac) + 16
        x = lo + (hi - lo) * rng.random((m, 2))
        x = x[domain.contains(x)]
        out.append(x)
        got += len(x)
    return np.concatenate(out)[:n]


def sample_interior(domain, n, rng):
    """``n`` i.i.d. uniform points in ``domain``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return domain.sample_interior(int(n), rng)


def sample_boundary(domain, n, rng):
    """``n`` points uniform with respect to arclength on the boundary."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return domain.sample_boundary(int(n), rng)


@dataclass
class CollocationSet:
    points: np.ndarray
    weights: np.ndarray
    boundary_points: np.ndarray

    def __post_init__(self):
        if len(self.weights) != len(self.points):
            raise ValueError("one weight per interior point")
        if np.any(self.weights < 0):
            raise ValueError("importance weights must be nonnegative")

    @property
    def n_c(self):
        return len(self.points)

    @property
    def n_b(self):
        return len(self.boundary_points)

    @property
    def uniform(self):
        return bool(np.all(self.weights == 1.0))


@dataclass
class SeedDensity:
    seeds: np.ndarray
    seed_values: np.ndarray
    pool: np.ndarray
    assignment: np.ndarray  # nearest seed of each pool point
    probs: np.ndarray


def uniform_collocation(domain, n_c, n_b, rng):
    pts = sample_interior(domain, n_c, rng)
    return CollocationSet(pts, np.ones(len(pts)), sample_boundary(domain, n_b, rng))


def adaptive_resample(pool, d_at_seed, S, n_c, rng, domain=None, boundary_points=None,
                      mix=DEFENSIVE_MIX):
    """Draw ``n_c`` collocation points from ``pool`` with probability driven by seed values.

    Parameters
    ----------
    pool : (M, 2) array
        Uniform candidate points in the domain.
    d_at_seed : callable
        Maps an (S, 2) array of seeds to nonnegative values d(seed).
    S : int
        Number of seeds; each pool point takes the value of its nearest seed.
    domain : optional
        Seeds are drawn uniformly in it; if omitted they are drawn from the pool.
    mix : float
        Weight of the uniform component in the defensive mixture.

    Returns
    -------
    CollocationSet, SeedDensity
        Weights are ``1 / (M p_j)`` so that weighted means are unbiased for
        pool means; they are bounded by ``1 / mix``.
    """
    if S < 1 or n_c < 1:
        raise ValueError("S and n_c must be >= 1")
    pool = np.ascontiguousarray(pool, dtype=float)
    M = len(pool)
    if domain is not None:
        seeds = sample_interior(domain, S, rng)
    else:
        seeds = pool[rng.choice(M, size=S, replace=False)]
    vals = np.asarray(d_at_seed(seeds), dtype=float).reshape(S)
    if not np.all(np.isfinite(vals)) or np.any(vals < 0):
        raise ValueError("seed values must be finite and nonnegative")
    _, assign = kernels.get().nearest(pool, seeds)
    d = vals[assign]
    total = d.sum()
    if total > 0:
        p = (1.0 - mix) * d / total + mix / M
        p /= p.sum()
    else:
        p = np.full(M, 1.0 / M)
    idx = rng.choice(M, size=n_c, replace=True, p=p)
    w = 1.0 / (M * p[idx])
    if total == 0:
        w = np.ones(n_c)
    if boundary_points is None:
        boundary_points = np.empty((0, 2))
    col = CollocationSet(pool[idx], w, np.asarray(boundary_points, dtype=float))
    return col, SeedDensity(seeds, vals, pool, assign, p)


def dump_resample(path, dens):
    """Write seeds and pool (with probabilities) of one resampling event as CSV."""
    n_s = len(dens.seeds)
    rows = np.concatenate([
        np.column_stack([np.zeros(n_s), dens.seeds, dens.seed_values, np.full(n_s, np.nan),
                         np.arange(n_s)]),
        np.column_stack([np.ones(len(dens.pool)), dens.pool, dens.seed_values[dens.assignment],
                         dens.probs, dens.assignment]),
    ])
    np.savetxt(path, rows, delimiter=",", header="is_pool,x,y,d,prob,seed", comments="",
               fmt=["%d", "%.10g", "%.10g", "%.10g", "%.10g", "%d"])
