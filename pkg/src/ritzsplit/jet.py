"""Second-order forward-mode dual numbers in two spatial variables.

A :class:`Jet` carries a value together with its gradient and Hessian with
respect to ``x = (x1, x2)``.  All fields are numpy arrays so a single Jet
can represent a whole batch of points.  Hessians are stored as the three
independent entries ``(h11, h12, h22)``.

This is the slow, generic route.  It is used to differentiate closed-form
exact solutions and as an independent oracle for the fused network kernels.
"""

from __future__ import annotations

import numpy as np


def _sym_outer(a, b):
    # symmetrised outer product a b^T + b a^T, packed (11, 12, 22)
    return np.stack(
        [2.0 * a[..., 0] * b[..., 0],
         a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0],
         2.0 * a[..., 1] * b[..., 1]],
        axis=-1,
    )


def _outer(a):
    return np.stack(
        [a[..., 0] * a[..., 0], a[..., 0] * a[..., 1], a[..., 1] * a[..., 1]],
        axis=-1,
    )


class Jet:
    __slots__ = ("val", "grad", "hess")

    def __init__(self, val, grad, hess):
        self.val = np.asarray(val, dtype=np.float64)
        self.grad = np.asarray(grad, dtype=np.float64)
        self.hess = np.asarray(hess, dtype=np.float64)

    @classmethod
    def variables(cls, x):
        """Return the coordinate jets ``(x1, x2)`` for points ``x`` of shape (..., 2)."""
        x = np.asarray(x, dtype=np.float64)
        shape = x.shape[:-1]
        z2 = np.zeros(shape + (2,))
        z3 = np.zeros(shape + (3,))
        g1 = z2.copy()
        g1[..., 0] = 1.0
        g2 = z2.copy()
        g2[..., 1] = 1.0
        return cls(x[..., 0], g1, z3), cls(x[..., 1], g2, z3.copy())

    @classmethod
    def constant(cls, c, shape=()):
        c = np.broadcast_to(np.asarray(c, dtype=np.float64), shape)
        return cls(c.copy(), np.zeros(shape + (2,)), np.zeros(shape + (3,)))

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, np.shape(self.val))

    def apply(self, f0, f1, f2):
        """Chain rule for a scalar function with value/first/second derivative ``f0, f1, f2``."""
        f1e = np.asarray(f1)[..., None]
        f2e = np.asarray(f2)[..., None]
        return Jet(f0, f1e * self.grad, f2e * _outer(self.grad) + f1e * self.hess)

    def __add__(self, other):
        o = self._lift(other)
        return Jet(self.val + o.val, self.grad + o.grad, self.hess + o.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, -self.hess)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=np.float64)
            return Jet(self.val * c, self.grad * c[..., None], self.hess * c[..., None])
        u, v = self, other
        return Jet(
            u.val * v.val,
            u.grad * v.val[..., None] + u.val[..., None] * v.grad,
            u.hess * v.val[..., None] + _sym_outer(u.grad, v.grad) + u.val[..., None] * v.hess,
        )

    __rmul__ = __mul__

    def reciprocal(self):
        r = 1.0 / self.val
        return self.apply(r, -r * r, 2.0 * r * r * r)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=np.float64))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        p = float(p)
        v = self.val
        return self.apply(v ** p, p * v ** (p - 1.0), p * (p - 1.0) * v ** (p - 2.0))

    def __repr__(self):
        return f"Jet(val={self.val!r}, grad={self.grad!r}, hess={self.hess!r})"


def exp(u):
    e = np.exp(u.val)
    return u.apply(e, e, e)


def log(u):
    r = 1.0 / u.val
    return u.apply(np.log(u.val), r, -r * r)


def sqrt(u):
    s = np.sqrt(u.val)
    return u.apply(s, 0.5 / s, -0.25 / (s * u.val))


def softplus(u):
    from .kernels.activation import softplus_derivs

    s0, s1, s2, _ = softplus_derivs(u.val)
    return u.apply(s0, s1, s2)


def lift(f, x):
    """Evaluate ``f(x1, x2)`` on coordinate jets and return the resulting Jet."""
    x1, x2 = Jet.variables(x)
    out = f(x1, x2)
    if not isinstance(out, Jet):
        out = Jet.constant(out, np.shape(x1.val))
    return out
