"""Deep Ritz losses and the inner two-stage (Adam, then L-BFGS) training loop."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from . import kernels, network, optim, sampling
from .tensor_ad import NumericalError, Tape, eval_jet

DIRICHLET = "dirichlet"
TRANSPORT = "transport"
POISSON = "poisson"
IDENTITY_FIT = "identity_fit"
PINN = "pinn"

HISTORY_COLUMNS = ("outer", "epoch", "total", "pde_term", "bc_term", "stage", "resample_flag")


@dataclass
class LossReport:
    total: float
    pde_term: float
    bc_term: float
    lam: float = 0.0
    epoch: int = 0
    wall_time: float = 0.0
    stage: str = ""
    resample: bool = False
    outer: int = 0

    def row(self):
        return (self.outer, self.epoch, repr(self.total), repr(self.pde_term), repr(self.bc_term),
                self.stage, int(self.resample))


@dataclass
class TrainSchedule:
    adam_epochs: int = 200
    lbfgs_epochs: int = 70
    resample_every: int = 10
    seed_fraction: float = sampling.SEED_FRACTION
    adaptive: bool = False
    lr: float = 1e-3
    pool_factor: int = sampling.POOL_FACTOR
    # L-BFGS iterations per epoch (one optimizer call)
    iters_per_epoch: int = 20

    def __post_init__(self):
        if self.iters_per_epoch < 1:
            raise ValueError("iters_per_epoch must be positive")
        if self.adam_epochs < 0 or self.lbfgs_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.resample_every < 1 or not 0 < self.seed_fraction <= 1 or self.lr <= 0:
            raise ValueError("invalid schedule")


def lbfgs_epochs(n, start=70, decay=0.7, floor=4, table=None):
    """L-BFGS epoch budget of outer iteration ``n`` (0-based)."""
    if table is not None:
        return int(table[min(n, len(table) - 1)])
    return max(floor, int(round(start * decay ** n)))


# ----------------------------------------------------------------------------
# losses
#
# Each loss returns a LossReport and, with ``grad=True``, the gradient of the
# total with respect to the flat parameter vector.


def _values(g, pts):
    return np.asarray(g(pts) if callable(g) else g, dtype=float).reshape(len(pts))


def _field(P):
    return np.asarray(getattr(P, "P", P), dtype=float)


def _boundary_penalty(net, xb, phi, lam, backend):
    tape = Tape(net, xb, order=0, backend=backend)
    r = tape.jets.val - _values(phi, xb)
    bc = float(np.mean(r * r))
    return bc, tape, 2.0 * lam * r / len(xb)


def _pde_hessian(net, colloc, P, backend):
    P = _field(P)
    if P.shape != (colloc.n_c, 3):
        raise ValueError(f"projection field has shape {P.shape}, expected ({colloc.n_c}, 3)")
    tape = Tape(net, colloc.points, order=2, backend=backend)
    R = tape.jets.hess - P
    w = colloc.weights
    pde = float(np.mean(w * (R[:, 0] ** 2 + 2 * R[:, 1] ** 2 + R[:, 2] ** 2)))
    adj = (2.0 / colloc.n_c) * w[:, None] * R * np.array([1.0, 2.0, 1.0])
    return pde, tape, adj


def loss_dirichlet(net, colloc, P, phi, lam, grad=False, backend=None):
    """Weighted mean squared Frobenius misfit to ``P`` plus ``lam`` times the boundary misfit."""
    pde, tape, adj = _pde_hessian(net, colloc, P, backend)
    bc, btape, badj = _boundary_penalty(net, colloc.boundary_points, phi, lam, backend)
    rep = LossReport(pde + lam * bc, pde, bc, lam)
    if not grad:
        return rep
    return rep, tape.backward(adj_hess=adj) + btape.backward(adj_val=badj)


def hausdorff_term(G, Y):
    """Bidirectional mean squared nearest distance and its adjoint with respect to ``G``.

    Ties in the nearest-point search go to the smallest index.
    """
    G = np.ascontiguousarray(G, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    if len(G) == 0 or len(Y) == 0:
        raise ValueError("boundary samples must be non-empty")
    near = kernels.get().nearest
    d1, j1 = near(G, Y)
    d2, j2 = near(Y, G)
    val = float(d1.mean() + d2.mean())
    adj = 2.0 * (G - Y[j1]) / len(G)
    np.add.at(adj, j2, 2.0 * (G[j2] - Y) / len(Y))
    return val, adj


def loss_transport(net, colloc, P, source_boundary, target_boundary, lam, grad=False,
                   backend=None):
    """Hessian misfit plus ``lam`` times the discrete Hausdorff-type boundary term."""
    pde, tape, adj = _pde_hessian(net, colloc, P, backend)
    btape = Tape(net, source_boundary, order=1, backend=backend)
    bc, badj = hausdorff_term(btape.jets.grad, target_boundary)
    rep = LossReport(pde + lam * bc, pde, bc, lam)
    if not grad:
        return rep
    return rep, tape.backward(adj_hess=adj) + btape.backward(adj_grad=lam * badj)


def loss_poisson_init(net, colloc, g, phi, lam, grad=False, backend=None):
    """Ritz energy ``mean(w (|grad v|^2 / 2 + g v))`` of ``-Lap v + g = 0`` plus boundary penalty."""
    gv = _values(g, colloc.points)
    if not np.all(np.isfinite(gv)):
        i = int(np.flatnonzero(~np.isfinite(gv))[0])
        raise NumericalError(f"initialization right-hand side is not finite at point {i}", index=i)
    tape = Tape(net, colloc.points, order=1, backend=backend)
    w = colloc.weights
    v, G = tape.jets.val, tape.jets.grad
    pde = float(np.mean(w * (0.5 * (G * G).sum(1) + gv * v)))
    bc, btape, badj = _boundary_penalty(net, colloc.boundary_points, phi, lam, backend)
    rep = LossReport(pde + lam * bc, pde, bc, lam)
    if not grad:
        return rep
    n = colloc.n_c
    gr = tape.backward(adj_val=w * gv / n, adj_grad=(w / n)[:, None] * G)
    return rep, gr + btape.backward(adj_val=badj)


def loss_identity_fit(net, colloc, grad=False, backend=None):
    """Least-squares fit of ``|x|^2 / 2`` in value and gradient (so that grad v = Id)."""
    x = colloc.points
    tape = Tape(net, x, order=1, backend=backend)
    rv = tape.jets.val - 0.5 * (x * x).sum(1)
    rg = tape.jets.grad - x
    w = colloc.weights
    pde = float(np.mean(w * (rv * rv + (rg * rg).sum(1))))
    rep = LossReport(pde, pde, 0.0, 0.0)
    if not grad:
        return rep
    n = colloc.n_c
    return rep, tape.backward(adj_val=2 * w * rv / n, adj_grad=(2 * w / n)[:, None] * rg)


def loss_pinn_baseline(net, colloc, f, phi, lam, grad=False, backend=None):
    """Residual ``mean((det D^2 v - f)^2)`` of the Monge-Ampere equation plus boundary penalty."""
    fv = _values(f, colloc.points)
    tape = Tape(net, colloc.points, order=2, backend=backend)
    H = tape.jets.hess
    r = H[:, 0] * H[:, 2] - H[:, 1] ** 2 - fv
    w = colloc.weights
    pde = float(np.mean(w * r * r))
    bc, btape, badj = _boundary_penalty(net, colloc.boundary_points, phi, lam, backend)
    rep = LossReport(pde + lam * bc, pde, bc, lam)
    if not grad:
        return rep
    c = (2.0 / colloc.n_c) * w * r
    adj = np.stack([c * H[:, 2], -2.0 * c * H[:, 1], c * H[:, 0]], -1)
    return rep, tape.backward(adj_hess=adj) + btape.backward(adj_val=badj)


# ----------------------------------------------------------------------------
# objective bound to a collocation set


@dataclass
class Objective:
    """One Deep Ritz problem: loss kind plus the data needed to evaluate it anywhere.

    ``field`` maps points to the target Hessians P (dirichlet/transport),
    ``rhs`` gives g (poisson) or f (pinn), ``phi`` the Dirichlet data and
    ``target_boundary`` the target sample for transport.
    """

    kind: str
    lam: float = 0.0
    field: object = None
    rhs: object = None
    phi: object = None
    target_boundary: np.ndarray | None = None
    backend: str | None = None

    def bind(self, colloc):
        """Evaluate point data on ``colloc``; returns a callable ``(net, grad) -> ...``."""
        kind = self.kind
        be = self.backend
        if kind in (DIRICHLET, TRANSPORT):
            P = np.asarray(self.field(colloc.points), dtype=float)
        if kind in (DIRICHLET, POISSON, PINN):
            phib = _values(self.phi, colloc.boundary_points)
        if kind in (POISSON, PINN):
            g = _values(self.rhs, colloc.points)

        if kind == DIRICHLET:
            return lambda net, grad=False: loss_dirichlet(net, colloc, P, phib, self.lam, grad, be)
        if kind == TRANSPORT:
            return lambda net, grad=False: loss_transport(
                net, colloc, P, colloc.boundary_points, self.target_boundary, self.lam, grad, be)
        if kind == POISSON:
            return lambda net, grad=False: loss_poisson_init(net, colloc, g, phib, self.lam, grad, be)
        if kind == IDENTITY_FIT:
            return lambda net, grad=False: loss_identity_fit(net, colloc, grad, be)
        if kind == PINN:
            return lambda net, grad=False: loss_pinn_baseline(net, colloc, g, phib, self.lam, grad, be)
        raise ValueError(f"unknown loss kind {kind!r}")

    def indicator(self, net, points):
        """Pointwise distance ``|D^2 v - P|`` driving adaptive resampling."""
        if self.kind not in (DIRICHLET, TRANSPORT):
            raise ValueError(f"adaptive sampling is not defined for loss kind {self.kind!r}")
        H = eval_jet(net, points, order=2, backend=self.backend).hess
        R = H - np.asarray(self.field(points), dtype=float)
        return np.sqrt(R[:, 0] ** 2 + 2 * R[:, 1] ** 2 + R[:, 2] ** 2)


class TrainingAborted(NumericalError):
    """Non-finite loss during training; carries the last good network and history."""

    def __init__(self, message, net, history, epoch=None):
        super().__init__(message)
        self.net = net
        self.history = history
        self.epoch = epoch


def train(net, objective, colloc, schedule, rng, domain=None, outer=0, dump=None):
    """Adam pre-training followed by L-BFGS refinement, with optional adaptive resampling.

    Parameters
    ----------
    net : NetworkParams
        Starting point (not modified).
    objective : Objective
    colloc : CollocationSet
        Initial (uniform) collocation set.
    schedule : TrainSchedule
    rng : numpy Generator
        Drives seeds, pools and resampling draws.
    domain :
        Required when ``schedule.adaptive``; pools and seeds are drawn in it.
    dump : callable, optional
        Called with each ``SeedDensity`` after a resampling event.

    Returns
    -------
    net, list of LossReport, CollocationSet
        Best network of the L-BFGS stage (last Adam iterate if there is none),
        per-epoch reports, and the final collocation set.
    """
    if schedule.adaptive and domain is None:
        raise ValueError("adaptive sampling needs the domain")
    t0 = time.perf_counter()
    icnn = net.arch.kind == network.ICNN
    history = []
    loss = objective.bind(colloc)
    epoch = 0
    good = net.copy()

    def report(rep, stage, resampled):
        return replace(rep, epoch=epoch, wall_time=time.perf_counter() - t0, stage=stage,
                       resample=resampled, outer=outer)

    def maybe_resample(cur):
        nonlocal colloc, loss
        if not schedule.adaptive or epoch == 0 or epoch % schedule.resample_every:
            return False
        M = schedule.pool_factor * colloc.n_c
        S = max(1, int(round(schedule.seed_fraction * colloc.n_c)))
        pool = sampling.sample_interior(domain, M, rng)
        colloc, dens = sampling.adaptive_resample(
            pool, lambda s: objective.indicator(cur, s), S, colloc.n_c, rng, domain=domain,
            boundary_points=colloc.boundary_points)
        if dump is not None:
            dump(dens)
        loss = objective.bind(colloc)
        return True

    # Adam --------------------------------------------------------------
    state = optim.adam_init(net.size, lr=schedule.lr)
    cur = net.copy()
    for _ in range(schedule.adam_epochs):
        resampled = maybe_resample(cur)
        try:
            rep, g = loss(cur, True)
            if not np.isfinite(rep.total):
                raise NumericalError("non-finite loss")
            state, theta = optim.adam_step(state, cur.theta, g, epoch=epoch)
        except NumericalError as e:
            raise TrainingAborted(f"training aborted at epoch {epoch}: {e}", good, history,
                                  epoch) from e
        history.append(report(rep, "adam", resampled))
        good = cur
        cur = network.enforce_nonneg(cur.with_theta(theta))
        epoch += 1

    if schedule.lbfgs_epochs == 0:
        return cur, history, colloc

    # L-BFGS ------------------------------------------------------------
    last = {}

    def fun(theta):
        try:
            rep, g = loss(cur.with_theta(theta), True)
        except NumericalError:
            return np.inf, np.zeros_like(theta)
        last["rep"] = rep
        return rep.total, g

    project = (lambda th: network.enforce_nonneg(cur.with_theta(th)).theta) if icnn else None
    per = schedule.iters_per_epoch
    lstate = optim.LbfgsState()
    best_theta, best_f = None, np.inf
    remaining = schedule.lbfgs_epochs
    pending = False
    while remaining > 0:
        if maybe_resample(cur):
            # curvature pairs stay (as a persistent torch LBFGS would keep them);
            # the cached loss belongs to the old points
            lstate.x = lstate.f = lstate.g = None
            best_theta, best_f = None, np.inf
            pending = True
        # one optimizer call per resampling window
        chunk = remaining
        if schedule.adaptive:
            chunk = min(chunk, schedule.resample_every - epoch % schedule.resample_every)
        count = {"it": 0}

        def cb(it, theta, f):
            nonlocal epoch, pending
            count["it"] += 1
            if count["it"] % per == 0:
                history.append(report(last["rep"], "lbfgs", pending))
                pending = False
                epoch += 1

        start_epoch = epoch
        try:
            res = optim.lbfgs_minimize(fun, cur.theta, lstate, project=project,
                                       max_iter=chunk * per, callback=cb,
                                       nonneg=cur.nonneg_mask if icnn else None)
        except NumericalError as e:
            raise TrainingAborted(f"training aborted at epoch {epoch}: {e}", good, history,
                                  epoch) from e
        cur = cur.with_theta(res.x)
        if res.f < best_f:
            best_theta, best_f = res.x.copy(), res.f
        good = cur
        done = epoch - start_epoch
        if done < chunk:
            # converged or stalled inside an epoch: close it and count the rest
            # without work
            rep = loss(cur, False)
            for _ in range(chunk - done):
                history.append(report(rep, "lbfgs", pending))
                pending = False
                epoch += 1
        remaining -= chunk
    if best_theta is not None:
        cur = cur.with_theta(best_theta)
    return cur, history, colloc


def write_history(path, reports, append=False):
    """CSV rows ``outer, epoch, total, pde_term, bc_term, stage, resample_flag``."""
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not append:
            w.writerow(HISTORY_COLUMNS)
        for r in reports:
            w.writerow(r.row())
