"""Benchmark cases with closed-form data.

Right-hand sides and boundary data are generated from the exact solutions
by differentiating them with :mod:`ritzsplit.jet`, never typed by hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constraints as C
from . import jet
from .network import ICNN, MLP
from .sampling import Disk, Ellipse, Square
from .splitting import ProblemSpec


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    spec: ProblemSpec
    n_c: int = 3000
    n_b: int = 300
    n_iters: int = 10
    n_repeats: int = 5
    arch_kind: str = ICNN
    adaptive: bool = True

    @property
    def lam(self):
        return self.spec.lam


def _value(u):
    return lambda x: jet.lift(u, x).val


def _det_data(u):
    def f(x):
        h = jet.lift(u, x).hess
        return h[:, 0] * h[:, 2] - h[:, 1] ** 2
    return f


def _pucci_data(u, alpha):
    def f(x):
        e = C.eigen2(jet.lift(u, x).hess)
        lam = np.stack([e.lambda1, e.lambda2], -1)
        return alpha * np.clip(lam, 0, None).sum(-1) + np.clip(lam, None, 0).sum(-1)
    return f


def _dirichlet(name, kind, u, domain, lam=100.0, alpha=None):
    f = _pucci_data(u, alpha) if kind == C.PUCCI else _det_data(u)
    return ProblemSpec(kind, domain, lam, f=f, phi=_value(u), alpha=alpha, exact=u, name=name)


# --------------------------------------------------------------- exact solutions


def u_exp(alpha):
    return lambda x, y: jet.exp((alpha / 2.0) * (x * x + y * y))


def u_sqrt(R):
    return lambda x, y: -jet.sqrt(R * R - (x * x + y * y))


def u_disk(x, y):
    return 0.5 * (x * x + y * y - 1.0)


def u_pucci(alpha):
    return lambda x, y: -(((x + 1.0) * (x + 1.0) + (y + 1.0) * (y + 1.0)) ** ((1.0 - alpha) / 2.0))


MINKOWSKI_B = (0.5, 0.5)


def u_minkowski(x, y):
    bx, by = MINKOWSKI_B
    return (x - bx) * (x - bx) + (y - by) * (y - by)


def minkowski_K(x):
    r2 = ((np.asarray(x) - np.asarray(MINKOWSKI_B)) ** 2).sum(-1)
    return 4.0 / (1.0 + 4.0 * r2) ** 2


def u_disk_ellipse(x, y):
    return x * x + 0.25 * y * y + 3.5 * x


# --------------------------------------------------------------- densities


def _gauss_mass_1d(mean, var):
    # integral over [0, 1] of exp(-(t - mean)^2 / (2 var))
    s = math.sqrt(2.0 * var)
    return math.sqrt(math.pi * var / 2.0) * (math.erf((1 - mean) / s) - math.erf(-mean / s))


class GaussianMix:
    """Sum of axis-aligned Gaussians normalized to unit mass on the unit square.

    Evaluation is not truncated (it is also used as a target density, where
    values outside the square keep the explicit right-hand side finite);
    ``inside`` gives the truncated density.
    """

    def __init__(self, centers, var):
        self.centers = np.asarray(centers, dtype=float)
        self.var = np.asarray(var, dtype=float)
        mass = sum(_gauss_mass_1d(c[0], self.var[0]) * _gauss_mass_1d(c[1], self.var[1])
                   for c in self.centers)
        self.c0 = 1.0 / mass

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c in self.centers:
            out += np.exp(-((x - c) ** 2 / (2 * self.var)).sum(-1))
        return self.c0 * out

    def inside(self, x):
        return np.where(Square().contains(x), self(x), 0.0)

    def sample(self, n, rng):
        """Exact draws from the truncated density (component choice, then rejection)."""
        w = np.array([_gauss_mass_1d(c[0], self.var[0]) * _gauss_mass_1d(c[1], self.var[1])
                      for c in self.centers])
        out = []
        got = 0
        while got < n:
            m = 2 * (n - got) + 64
            k = rng.choice(len(self.centers), size=m, p=w / w.sum())
            z = self.centers[k] + np.sqrt(self.var) * rng.standard_normal((m, 2))
            z = z[Square().contains(z)]
            out.append(z)
            got += len(z)
        return np.concatenate(out)[:n]


def _const(c):
    return lambda x: np.full(np.shape(x)[:-1], c)


def _uniform_sampler(domain):
    return lambda n, rng: domain.sample_interior(n, rng)


def _transport(name, source, target, mu0, mu1, sampler, exact=None):
    return ProblemSpec(C.TRANSPORT, source, 100.0, mu0=mu0, mu1=mu1, target=target,
                       mu0_sampler=sampler, exact=exact, name=name)


# --------------------------------------------------------------- catalog


def catalog():
    sq = Square()
    disk = Disk()
    ellipse = Ellipse((3.5, 0.0), (2.0, 0.5))
    g1 = GaussianMix([[0.25, 0.75]], [0.25, 0.25])
    g2 = GaussianMix([[0.5, 0.2], [0.5, 0.8]], [0.25, 0.015625])
    gt = GaussianMix([[0.5, 0.5]], [0.04, 0.04])
    cases = [
        BenchmarkCase("exp_alpha1", _dirichlet("exp_alpha1", C.MONGE_AMPERE, u_exp(1.0), sq)),
        BenchmarkCase("exp_alpha4", _dirichlet("exp_alpha4", C.MONGE_AMPERE, u_exp(4.0), sq)),
        BenchmarkCase("sqrt_R2", _dirichlet("sqrt_R2", C.MONGE_AMPERE, u_sqrt(2.0), sq)),
        BenchmarkCase("sqrt_Rcrit",
                      _dirichlet("sqrt_Rcrit", C.MONGE_AMPERE, u_sqrt(math.sqrt(2.0) + 0.01), sq)),
        BenchmarkCase("disk_degenerate",
                      _dirichlet("disk_degenerate", C.MONGE_AMPERE, u_disk, disk)),
    ]
    for a in (2, 3, 5):
        name = f"pucci_alpha{a}"
        cases.append(BenchmarkCase(
            name, _dirichlet(name, C.PUCCI, u_pucci(float(a)), sq, lam=1000.0, alpha=float(a)),
            arch_kind=MLP))
    cases.append(BenchmarkCase(
        "minkowski",
        ProblemSpec(C.MINKOWSKI, sq, 100.0, phi=_value(u_minkowski), K=minkowski_K,
                    exact=u_minkowski, name="minkowski")))
    cases += [
        BenchmarkCase("ot_disk_ellipse",
                      _transport("ot_disk_ellipse", disk, ellipse, _const(1 / math.pi),
                                 _const(1 / math.pi), _uniform_sampler(disk), u_disk_ellipse),
                      n_c=1000, n_b=1000, n_iters=30),
        BenchmarkCase("ot_gauss_uniform",
                      _transport("ot_gauss_uniform", sq, sq, g1.inside, _const(1.0), g1.sample),
                      n_iters=20),
        BenchmarkCase("ot_twogauss_uniform",
                      _transport("ot_twogauss_uniform", sq, sq, g2.inside, _const(1.0), g2.sample),
                      n_iters=20),
        BenchmarkCase("ot_twogauss_gauss",
                      _transport("ot_twogauss_gauss", sq, sq, g2.inside, gt, g2.sample),
                      n_iters=20),
    ]
    return cases


def get(name):
    for c in catalog():
        if c.name == name:
            return c
    raise KeyError(f"unknown case {name!r}; known: {', '.join(names())}")


def names():
    return [c.name for c in catalog()]


def residual(case, x):
    """``F(D^2 u_ex, grad u_ex, x)`` at points ``x`` (zero for consistent data)."""
    spec = case.spec
    J = spec.exact_jets(x)
    H = J.hess
    f = spec.rhs(x, J.grad)
    if spec.kind == C.PUCCI:
        return C.pucci_residual(H, f, spec.alpha)
    return C.ma_residual(H, f)
