"""Outer least-squares iteration: pointwise projection, then a Deep Ritz solve."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constraints, network, ritz, sampling
from .jet import lift
from .tensor_ad import NumericalError, eval_jet

DEEP_RITZ = "deep_ritz"
PINN_BASELINE = "pinn_baseline"


@dataclass
class ProblemSpec:
    """A boundary value problem for one of the constraint families.

    Callables take points of shape (n, 2).  ``exact`` is a function of the
    two coordinate jets (see :func:`ritzsplit.jet.lift`), so its gradient
    and Hessian come for free.
    """

    kind: str
    domain: object
    lam: float = 100.0
    f: object = None
    phi: object = None
    alpha: float | None = None
    K: object = None
    mu0: object = None
    mu1: object = None
    target: object = None
    mu0_sampler: object = None
    exact: object = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in constraints.KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == constraints.PUCCI and not (self.alpha is not None and self.alpha > 1):
            raise ValueError("Pucci problems need alpha > 1")
        if self.kind == constraints.TRANSPORT:
            if self.target is None or self.mu0 is None or self.mu1 is None:
                raise ValueError("transport problems need target, mu0 and mu1")
        elif self.kind == constraints.MINKOWSKI:
            if self.K is None or self.phi is None:
                raise ValueError("Minkowski problems need K and phi")
        elif self.f is None or self.phi is None:
            raise ValueError("Dirichlet problems need f and phi")

    @property
    def transport(self):
        return self.kind == constraints.TRANSPORT

    def rhs(self, x, grad=None):
        """Pointwise data of the projection; gradient-dependent kinds use ``grad``."""
        if self.kind == constraints.MINKOWSKI:
            return constraints.effective_rhs_minkowski(self.K(x), grad)
        if self.kind == constraints.TRANSPORT:
            return constraints.effective_rhs_transport(self.mu0(x), self.mu1, grad)
        return np.broadcast_to(np.asarray(self.f(x), dtype=float), (len(x),))

    def exact_jets(self, x):
        if self.exact is None:
            raise ValueError(f"problem {self.name!r} has no exact solution")
        return lift(self.exact, x)


@dataclass
class ProjectionField:
    points: np.ndarray
    P: np.ndarray
    grads: np.ndarray | None = None


@dataclass
class ErrorReport:
    rel_L2: float
    rel_H2: float
    grad_err: float  # mean |grad u_NN - grad u_ex| on the grid
    pointwise: np.ndarray = field(repr=False)  # |u_NN - u_ex| on the grid, NaN outside
    iteration: int = 0


# ----------------------------------------------------------------------------
# P-step


def project_step(net, points, spec, backend=None):
    """Project the network Hessian at ``points`` onto the pointwise constraint set."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    jets = eval_jet(net, points, order=2, backend=backend)
    f = np.asarray(spec.rhs(points, jets.grad), dtype=float)
    if spec.kind != constraints.PUCCI:
        bad = ~(f > 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NumericalError(f"projection data must be positive, got {f[i]} at point {i}",
                                 index=i)
    P = constraints.project(spec.kind, jets.hess, f, alpha=spec.alpha, backend=backend)
    return ProjectionField(points, P, jets.grad)


# ----------------------------------------------------------------------------
# initialization


def init_rhs(spec, x):
    """Right-hand side g of the initial Poisson problem ``Lap u0 = g``."""
    if spec.kind == constraints.PUCCI:
        return np.broadcast_to(np.asarray(spec.f(x), dtype=float), (len(x),))
    if spec.kind == constraints.MINKOWSKI:
        # grad u0 = Id inside the curvature factor
        f = constraints.effective_rhs_minkowski(spec.K(x), x)
    else:
        f = np.broadcast_to(np.asarray(spec.f(x), dtype=float), (len(x),))
    if np.any(f < 0):
        i = int(np.flatnonzero(f < 0)[0])
        raise ValueError(f"negative data {f[i]} under the square root at point {i}")
    return 2.0 * np.sqrt(f)


@dataclass
class SolverConfig:
    n_c: int = 3000
    n_b: int = 300
    n_iters: int = 10
    adaptive: bool = False
    seed_fraction: float = sampling.SEED_FRACTION
    resample_every: int = 10
    adam_first: int = 200
    adam_later: int = 50
    lbfgs_init: int = 25
    lbfgs_table: tuple | None = None
    lr: float = 1e-3
    lbfgs_iters: int = 20
    mode: str = DEEP_RITZ
    backend: str | None = None

    def schedule(self, adam, lbfgs, adaptive=None):
        return ritz.TrainSchedule(adam, lbfgs, self.resample_every, self.seed_fraction,
                                  self.adaptive if adaptive is None else adaptive, self.lr,
                                  iters_per_epoch=self.lbfgs_iters)


def initialize(spec, arch, rng, config=None):
    """Random network trained on the initial problem (Poisson, or grad u0 = Id for transport)."""
    cfg = config or SolverConfig()
    net = network.init(arch, rng)
    colloc = sampling.uniform_collocation(spec.domain, cfg.n_c, cfg.n_b, rng)
    if spec.transport:
        obj = ritz.Objective(ritz.IDENTITY_FIT, backend=cfg.backend)
    else:
        obj = ritz.Objective(ritz.POISSON, spec.lam, rhs=lambda x: init_rhs(spec, x),
                             phi=spec.phi, backend=cfg.backend)
    sched = cfg.schedule(cfg.adam_first, cfg.lbfgs_init, adaptive=False)
    net, hist, _ = ritz.train(net, obj, colloc, sched, rng, domain=spec.domain, outer=0)
    return net, hist


# ----------------------------------------------------------------------------
# errors


def eval_grid(domain, n=100):
    """Cell-centred ``n x n`` grid over the bounding box; returns points, mask and cell area."""
    lo, hi = domain.bbox()
    h = (hi - lo) / n
    gx = lo[0] + h[0] * (np.arange(n) + 0.5)
    gy = lo[1] + h[1] * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(gx, gy, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return pts, domain.contains(pts), float(h[0] * h[1])


def h2_sq(val, grad, hess):
    return val ** 2 + (grad ** 2).sum(-1) + hess[..., 0] ** 2 + 2 * hess[..., 1] ** 2 + hess[..., 2] ** 2


def error_report(net, spec, n=100, iteration=0, backend=None):
    """Relative L2 and H2 errors against the exact solution on the evaluation grid.

    For transport problems the potential is only defined up to a constant,
    so the mean offset over the grid is removed first.
    """
    pts, mask, _ = eval_grid(spec.domain, n)
    x = pts[mask]
    ex = spec.exact_jets(x)
    nn = eval_jet(net, x, order=2, backend=backend)
    e_val = nn.val - ex.val
    if spec.transport:
        e_val = e_val - e_val.mean()
    e_grad = nn.grad - ex.grad
    e_hess = nn.hess - ex.hess
    rel_l2 = np.sqrt(np.sum(e_val ** 2) / np.sum(ex.val ** 2))
    rel_h2 = np.sqrt(np.sum(h2_sq(e_val, e_grad, e_hess)) / np.sum(h2_sq(ex.val, ex.grad, ex.hess)))
    pw = np.full(len(pts), np.nan)
    pw[mask] = np.abs(e_val)
    return ErrorReport(float(rel_l2), float(rel_h2), float(np.mean(np.hypot(*e_grad.T))),
                       pw.reshape(n, n), iteration)


# ----------------------------------------------------------------------------
# outer loop


@dataclass
class SolveResult:
    net: network.NetworkParams
    errors: list
    history: list
    nets: list = field(default_factory=list, repr=False)


def _objective(spec, frozen, colloc, cfg, rng):
    field_fn = lambda pts: project_step(frozen, pts, spec, cfg.backend).P  # noqa: E731
    if spec.transport:
        tb = sampling.sample_boundary(spec.target, colloc.n_b, rng)
        return ritz.Objective(ritz.TRANSPORT, spec.lam, field=field_fn, target_boundary=tb,
                              backend=cfg.backend)
    return ritz.Objective(ritz.DIRICHLET, spec.lam, field=field_fn, phi=spec.phi,
                          backend=cfg.backend)


def outer_solve(spec, arch, rng, config=None, net0=None, on_iteration=None):
    """Alternate projection and Deep Ritz solves for ``config.n_iters`` iterations.

    Parameters
    ----------
    net0 : NetworkParams, optional
        Starting network; by default one is built with :func:`initialize`.
    on_iteration : callable, optional
        ``on_iteration(k, net, error_report_or_None, reports)`` after each
        outer iteration (``k = 0`` is the initialization).

    Notes
    -----
    Every iteration draws a fresh uniform collocation set, warm-starts the
    network and resets optimizer state.  If the trained network scores worse
    than the incoming one on the final collocation set, the incoming one is
    kept, so the splitting energy never increases.
    """
    cfg = config or SolverConfig()
    if cfg.n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    if cfg.mode == PINN_BASELINE and spec.kind != constraints.MONGE_AMPERE:
        raise ValueError("the PINN baseline is only defined for Monge-Ampere problems")
    history, errors = [], []
    if net0 is None:
        net, hist = initialize(spec, arch, rng, cfg)
        history += hist
    else:
        net = net0.copy()
    err = error_report(net, spec, backend=cfg.backend) if spec.exact is not None else None
    if err is not None:
        errors.append(err)
    if on_iteration is not None:
        on_iteration(0, net, err, history)

    for k in range(1, cfg.n_iters + 1):
        colloc = sampling.uniform_collocation(spec.domain, cfg.n_c, cfg.n_b, rng)
        sched = cfg.schedule(cfg.adam_later, ritz.lbfgs_epochs(k - 1, table=cfg.lbfgs_table))
        if cfg.mode == PINN_BASELINE:
            obj = ritz.Objective(ritz.PINN, spec.lam, rhs=spec.f, phi=spec.phi,
                                 backend=cfg.backend)
            sched = cfg.schedule(cfg.adam_later, sched.lbfgs_epochs, adaptive=False)
        else:
            obj = _objective(spec, net, colloc, cfg, rng)
        new, hist, last = ritz.train(net, obj, colloc, sched, rng, domain=spec.domain, outer=k)
        loss = obj.bind(last)
        if loss(new).total > loss(net).total:
            new = net
        net = new
        history += hist
        err = None
        if spec.exact is not None:
            err = error_report(net, spec, iteration=k, backend=cfg.backend)
            errors.append(err)
        if on_iteration is not None:
            on_iteration(k, net, err, hist)
    return SolveResult(net, errors, history)
