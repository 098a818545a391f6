"""Network jets (value, input gradient, input Hessian) and parameter gradients.

The forward pass pushes second-order jets in ``x`` through the network; the
reverse pass pulls adjoints of those jets back onto the flat parameter
vector.  Hessians use the packed ``(h11, h12, h22)`` convention throughout,
so Frobenius norms weight the off-diagonal entry twice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

_CHANNELS = {0: 1, 1: 3, 2: 6}


class NumericalError(FloatingPointError):
    """A non-finite value appeared; ``index`` names the offending point."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass
class JetBatch:
    val: np.ndarray
    grad: np.ndarray | None = None
    hess: np.ndarray | None = None

    def __len__(self):
        return len(self.val)


def frob2(h):
    """Squared Frobenius norm of packed symmetric matrices (..., 3)."""
    return h[..., 0] ** 2 + 2.0 * h[..., 1] ** 2 + h[..., 2] ** 2


def det(h):
    return h[..., 0] * h[..., 2] - h[..., 1] ** 2


def _split(out):
    C = out.shape[1]
    return JetBatch(
        out[:, 0].copy(),
        out[:, 1:3].copy() if C >= 3 else None,
        out[:, 3:6].copy() if C == 6 else None,
    )


def _check_finite(out):
    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericalError(f"non-finite network jet at point {i}", index=i)


class Tape:
    """Forward record of a batch of jets, reusable for one reverse pass."""

    def __init__(self, net, x, order=2, backend=None):
        self.net = net
        self.x = np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1, 2))
        self.C = _CHANNELS[order]
        self.kern = kernels.get(backend)
        out, self._cache = self.kern.jet_forward(net.theta, net.layout, self.x, self.C)
        _check_finite(out)
        self.jets = _split(out)

    def backward(self, adj_val=None, adj_grad=None, adj_hess=None):
        """Gradient w.r.t. parameters of ``sum(adj . jets)``."""
        n = self.x.shape[0]
        adj = np.zeros((n, self.C))
        if adj_val is not None:
            adj[:, 0] = adj_val
        if adj_grad is not None:
            if self.C < 3:
                raise ValueError("gradient adjoint needs an order >= 1 tape")
            adj[:, 1:3] = adj_grad
        if adj_hess is not None:
            if self.C < 6:
                raise ValueError("Hessian adjoint needs an order-2 tape")
            adj[:, 3:6] = adj_hess
        if not np.all(np.isfinite(adj)):
            i = int(np.flatnonzero(~np.all(np.isfinite(adj), axis=1))[0])
            raise NumericalError(f"non-finite loss adjoint at point {i}", index=i)
        return self.kern.jet_backward(self.net.theta, self.net.layout, self.x, self._cache, adj)


def eval_jet(net, x, order=2, backend=None, chunk=None):
    """Value, gradient and Hessian of the network at ``x`` ((2,) or (n, 2)).

    ``order`` limits the work: 0 gives values only, 1 adds gradients.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.ascontiguousarray(x.reshape(-1, 2))
    kern = kernels.get(backend)
    C = _CHANNELS[order]
    if chunk is None or len(pts) <= chunk:
        out, _ = kern.jet_forward(net.theta, net.layout, pts, C)
    else:
        out = np.concatenate(
            [kern.jet_forward(net.theta, net.layout, pts[s:s + chunk], C)[0]
             for s in range(0, len(pts), chunk)]
        )
    _check_finite(out)
    jets = _split(out)
    if single:
        jets = JetBatch(jets.val[0], None if jets.grad is None else jets.grad[0],
                        None if jets.hess is None else jets.hess[0])
    return jets


def param_gradient(net, x, objective, order=2, backend=None):
    """Evaluate a scalar objective of network jets and its parameter gradient.

    ``objective(jets)`` must return ``(value, adj_val, adj_grad, adj_hess)``:
    the objective value and its partial derivatives with respect to the jet
    entries (any of the adjoints may be ``None``).
    """
    tape = Tape(net, x, order=order, backend=backend)
    value, av, ag, ah = objective(tape.jets)
    return float(value), tape.backward(av, ag, ah)
