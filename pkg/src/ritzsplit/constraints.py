"""Pointwise nonlinear step: Frobenius-nearest symmetric matrix on a constraint set.

Every constraint handled here is rotation invariant, so each projection
diagonalises ``A``, solves a small problem on the eigenvalues and rotates
back.  Matrices are packed symmetric arrays ``(..., 3) = (a11, a12, a22)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

# floor applied to the target density in the transport right-hand side
EPS_RHO = 1e-6

MONGE_AMPERE = "monge_ampere"
PUCCI = "pucci"
SIGMA2 = "sigma2"
MINKOWSKI = "minkowski"
TRANSPORT = "transport"
KINDS = (MONGE_AMPERE, PUCCI, SIGMA2, MINKOWSKI, TRANSPORT)


@dataclass
class Eigen2:
    lambda1: np.ndarray
    lambda2: np.ndarray
    theta: np.ndarray  # angle of the lambda1 eigenvector

    def matrix(self):
        return from_eigen(self.lambda1, self.lambda2, self.theta)


def eigen2(A):
    """Closed-form eigendecomposition of packed symmetric 2x2 matrices."""
    A = np.asarray(A, dtype=np.float64)
    a, b, c = A[..., 0], A[..., 1], A[..., 2]
    m = 0.5 * (a + c)
    r = np.hypot(0.5 * (a - c), b)
    theta = 0.5 * np.arctan2(-2.0 * b, c - a)
    return Eigen2(m - r, m + r, theta)


def from_eigen(l1, l2, theta):
    c = np.cos(theta)
    s = np.sin(theta)
    return np.stack([l1 * c * c + l2 * s * s, (l1 - l2) * c * s, l1 * s * s + l2 * c * c], axis=-1)


def frob(A):
    A = np.asarray(A)
    return np.sqrt(A[..., 0] ** 2 + 2.0 * A[..., 1] ** 2 + A[..., 2] ** 2)


def _check_finite(A):
    if not np.all(np.isfinite(A)):
        i = int(np.flatnonzero(~np.all(np.isfinite(np.reshape(A, (-1, 3))), axis=1))[0])
        raise FloatingPointError(f"non-finite matrix at point {i}")


def project_monge_ampere(A, f, backend=None):
    """Nearest matrix with ``det = f`` and positive eigenvalues."""
    A = np.asarray(A, dtype=np.float64)
    _check_finite(A)
    f = np.broadcast_to(np.asarray(f, dtype=np.float64), A.shape[:-1])
    if np.any(~(f > 0.0)):
        raise ValueError("Monge-Ampere projection needs f > 0")
    e = eigen2(A)
    l1, l2 = kernels.get(backend).project_ma(e.lambda1, e.lambda2, f)
    return from_eigen(l1, l2, e.theta)


def project_sigma2(A, f, backend=None):
    """Nearest matrix with ``lambda1*lambda2 = f``, convex or concave branch.

    In two dimensions sigma_2 is the determinant, so both sign-definite
    branches are candidates; the closer one is returned (convex on ties).
    """
    A = np.asarray(A, dtype=np.float64)
    _check_finite(A)
    f = np.broadcast_to(np.asarray(f, dtype=np.float64), A.shape[:-1])
    if np.any(~(f > 0.0)):
        raise ValueError("sigma_2 projection needs f > 0")
    e = eigen2(A)
    kern = kernels.get(backend)
    p1, p2 = kern.project_ma(e.lambda1, e.lambda2, f)
    m1, m2 = kern.project_ma(-e.lambda2, -e.lambda1, f)
    n1, n2 = -m2, -m1
    dp = (p1 - e.lambda1) ** 2 + (p2 - e.lambda2) ** 2
    dn = (n1 - e.lambda1) ** 2 + (n2 - e.lambda2) ** 2
    neg = dn < dp
    return from_eigen(np.where(neg, n1, p1), np.where(neg, n2, p2), e.theta)


def project_pucci(A, f, alpha, backend=None):
    """Nearest matrix with ``alpha*sum(l+) + sum(l-) = f``.

    The constraint is linear on each sign orthant of the eigenvalue plane;
    each orthant's feasible segment is searched exactly and the best kept.
    """
    if not alpha > 1.0:
        raise ValueError("Pucci projection needs alpha > 1")
    A = np.asarray(A, dtype=np.float64)
    _check_finite(A)
    f = np.broadcast_to(np.asarray(f, dtype=np.float64), A.shape[:-1])
    e = eigen2(A)
    l1, l2 = kernels.get(backend).project_pucci(e.lambda1, e.lambda2, f, alpha)
    return from_eigen(l1, l2, e.theta)


def effective_rhs_minkowski(K, grad):
    """``K (1 + |grad|^2)^2``: the Gauss-curvature right-hand side in 2D."""
    grad = np.asarray(grad, dtype=np.float64)
    return np.asarray(K) * (1.0 + (grad ** 2).sum(axis=-1)) ** 2


def effective_rhs_transport(mu0_at_x, mu1, grad):
    """``mu0(x) / mu1(grad u(x))`` with the target density floored at ``EPS_RHO``."""
    grad = np.asarray(grad, dtype=np.float64)
    return np.asarray(mu0_at_x) / np.maximum(mu1(grad), EPS_RHO)


# residuals F(Q) used for feasibility checks -------------------------------


def ma_residual(Q, f):
    Q = np.asarray(Q)
    return Q[..., 0] * Q[..., 2] - Q[..., 1] ** 2 - f


def pucci_residual(Q, f, alpha):
    e = eigen2(Q)
    lam = np.stack([e.lambda1, e.lambda2], axis=-1)
    return alpha * np.clip(lam, 0, None).sum(-1) + np.clip(lam, None, 0).sum(-1) - f


def project(kind, A, f, alpha=None, backend=None):
    """Dispatch on the constraint family; gradient-dependent kinds take an effective ``f``."""
    if kind in (MONGE_AMPERE, MINKOWSKI, TRANSPORT):
        return project_monge_ampere(A, f, backend=backend)
    if kind == SIGMA2:
        return project_sigma2(A, f, backend=backend)
    if kind == PUCCI:
        return project_pucci(A, f, alpha, backend=backend)
    raise ValueError(f"unknown constraint kind {kind!r}")
