"""Vectorized numpy kernels.

Jets travel as arrays of shape ``(n, C, width)`` where the channel axis holds
``value`` (C=1), ``value, d1, d2`` (C=3) or ``value, d1, d2, h11, h12, h22``
(C=6).  Every affine layer acts identically on all channels, so one matmul
per layer propagates value, gradient and Hessian together.
"""

import numpy as np

from .activation import softplus_derivs

CHUNK = 8192


# ----------------------------------------------------------------------------
# network jets


def _activate(z):
    C = z.shape[1]
    s0, s1, s2, _ = softplus_derivs(z[:, 0])
    a = np.empty_like(z)
    a[:, 0] = s0
    if C >= 3:
        z1, z2 = z[:, 1], z[:, 2]
        a[:, 1] = s1 * z1
        a[:, 2] = s1 * z2
    if C == 6:
        a[:, 3] = s2 * z1 * z1 + s1 * z[:, 3]
        a[:, 4] = s2 * z1 * z2 + s1 * z[:, 4]
        a[:, 5] = s2 * z2 * z2 + s1 * z[:, 5]
    return a


def _activate_backward(z, da):
    C = z.shape[1]
    _, s1, s2, s3 = softplus_derivs(z[:, 0])
    dz = np.empty_like(z)
    d0 = da[:, 0] * s1
    if C >= 3:
        z1, z2 = z[:, 1], z[:, 2]
        d0 = d0 + (da[:, 1] * z1 + da[:, 2] * z2) * s2
        dz[:, 1] = da[:, 1] * s1
        dz[:, 2] = da[:, 2] * s1
    if C == 6:
        z3, z4, z5 = z[:, 3], z[:, 4], z[:, 5]
        d0 = d0 + (da[:, 3] * z3 + da[:, 4] * z4 + da[:, 5] * z5) * s2
        d0 = d0 + (da[:, 3] * z1 * z1 + da[:, 4] * z1 * z2 + da[:, 5] * z2 * z2) * s3
        dz[:, 1] += (2.0 * da[:, 3] * z1 + da[:, 4] * z2) * s2
        dz[:, 2] += (da[:, 4] * z1 + 2.0 * da[:, 5] * z2) * s2
        dz[:, 3] = da[:, 3] * s1
        dz[:, 4] = da[:, 4] * s1
        dz[:, 5] = da[:, 5] * s1
    dz[:, 0] = d0
    return dz


def _input_affine(z, x, M):
    # adds the jet of x -> M x (M: (nout, 2)) to z
    z[:, 0] += x @ M.T
    if z.shape[1] >= 3:
        z[:, 1] += M[:, 0]
        z[:, 2] += M[:, 1]


def jet_forward(theta, lay, x, C):
    """Propagate C-channel jets; returns ``(out (n, C), cache)``."""
    n = x.shape[0]
    nl = lay.shape[0]
    zs = []
    hs = []
    h = None
    for li in range(nl):
        nin, nout, wo, lo, bo = (int(v) for v in lay[li])
        W = theta[wo:wo + nin * nout].reshape(nout, nin)
        b = theta[bo:bo + nout]
        if li == 0:
            z = np.zeros((n, C, nout))
            _input_affine(z, x, W)
        else:
            z = h @ W.T
            if lo >= 0:
                _input_affine(z, x, theta[lo:lo + 2 * nout].reshape(nout, 2))
        z[:, 0] += b
        if li < nl - 1:
            zs.append(z)
            h = _activate(z)
            hs.append(h)
        else:
            out = z[:, :, 0]
    return out, (zs, hs)


def jet_backward(theta, lay, x, cache, adj):
    """Parameter gradient of ``sum(adj * out)`` given the forward cache."""
    zs, hs = cache
    nl = lay.shape[0]
    grad = np.zeros_like(theta)
    dz = adj[:, :, None]
    for li in range(nl - 1, -1, -1):
        nin, nout, wo, lo, bo = (int(v) for v in lay[li])
        grad[bo:bo + nout] = dz[:, 0].sum(axis=0)
        if li == 0:
            gW = _input_affine_grad(dz, x)
            grad[wo:wo + nin * nout] = gW.ravel()
            break
        h = hs[li - 1]
        gW = dz.reshape(-1, nout).T @ h.reshape(-1, nin)
        grad[wo:wo + nin * nout] = gW.ravel()
        if lo >= 0:
            grad[lo:lo + 2 * nout] = _input_affine_grad(dz, x).ravel()
        W = theta[wo:wo + nin * nout].reshape(nout, nin)
        dh = dz @ W
        dz = _activate_backward(zs[li - 1], dh)
    return grad


def _input_affine_grad(dz, x):
    g = dz[:, 0].T @ x
    if dz.shape[1] >= 3:
        g[:, 0] += dz[:, 1].sum(axis=0)
        g[:, 1] += dz[:, 2].sum(axis=0)
    return g


# ----------------------------------------------------------------------------
# pointwise eigenvalue projections

SCAN = 161
SPAN = 20.0
GOLDEN_ITERS = 48
NEWTON_ITERS = 30
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0
TIE_RTOL = 1e-12


def _ma_obj(s, a1, a2, f):
    t = np.exp(s)
    return (t - a1) ** 2 + (f / t - a2) ** 2


def _golden(lo, hi, a1, a2, f):
    for _ in range(GOLDEN_ITERS):
        c = hi - _INVPHI * (hi - lo)
        d = lo + _INVPHI * (hi - lo)
        left = _ma_obj(c, a1, a2, f) < _ma_obj(d, a1, a2, f)
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
    return 0.5 * (lo + hi)


def _newton(t, tlo, thi, a1, a2, f):
    for _ in range(NEWTON_ITERS):
        q = f / t
        g1 = 2.0 * (t - a1) - 2.0 * (q - a2) * q / t
        g2 = 2.0 + 2.0 * q * q / (t * t) + 4.0 * (q - a2) * q / (t * t)
        ok = g2 > 0.0
        step = np.where(ok, g1 / np.where(ok, g2, 1.0), 0.0)
        tn = t - step
        tn = np.where((tn > tlo) & (tn < thi), tn, t)
        done = np.abs(tn - t) <= 1e-15 * np.maximum(1.0, np.abs(t))
        t = tn
        if np.all(done):
            break
    return t


def project_ma(a1, a2, f):
    """Closest ``(l1, l2)`` with ``l1*l2 = f``, ``0 < l1 <= l2`` to sorted ``(a1, a2)``."""
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    f = np.broadcast_to(np.asarray(f, dtype=np.float64), a1.shape)
    shape = a1.shape
    a1, a2, f = a1.ravel(), a2.ravel(), f.ravel()
    hi = 0.5 * np.log(f)
    lo = hi - SPAN
    grid = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, SCAN)[None, :]
    vals = _ma_obj(grid, a1[:, None], a2[:, None], f[:, None])
    # discrete local minima (endpoints included); keep the two lowest
    padded = np.concatenate([np.full((len(a1), 1), np.inf), vals, np.full((len(a1), 1), np.inf)], axis=1)
    is_min = (vals <= padded[:, :-2]) & (vals <= padded[:, 2:])
    masked = np.where(is_min, vals, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")[:, :2]
    best_t = None
    best_v = None
    h = (hi - lo) / (SCAN - 1)
    for c in range(2):
        k = order[:, c]
        valid = np.isfinite(masked[np.arange(len(a1)), k])
        sl = np.maximum(lo + (k - 1) * h, lo)
        sh = np.minimum(lo + (k + 1) * h, hi)
        s = _golden(sl, sh, a1, a2, f)
        t = _newton(np.exp(s), np.exp(sl) * (1 - 1e-12), np.exp(sh) * (1 + 1e-12), a1, a2, f)
        t = np.minimum(t, np.sqrt(f))
        v = (t - a1) ** 2 + (f / t - a2) ** 2
        v = np.where(valid, v, np.inf)
        if best_t is None:
            best_t, best_v = t, v
        else:
            better = v < best_v
            best_t = np.where(better, t, best_t)
            best_v = np.where(better, v, best_v)
    l1 = best_t
    l2 = f / best_t
    return l1.reshape(shape), l2.reshape(shape)


def project_pucci(a1, a2, f, alpha):
    """Closest ``(l1, l2)`` to ``(a1, a2)`` on ``alpha*sum(l+) + sum(l-) = f``."""
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    f = np.broadcast_to(np.asarray(f, dtype=np.float64), a1.shape)
    best = np.full(a1.shape, np.inf)
    b1 = np.zeros(a1.shape)
    b2 = np.zeros(a1.shape)
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            c1 = alpha if s1 > 0 else 1.0
            c2 = alpha if s2 > 0 else 1.0
            # line c1*l1 + c2*l2 = f parametrised by l1 = tau
            lo = np.where(s1 > 0, 0.0, -np.inf) + np.zeros(a1.shape)
            hi = np.where(s1 > 0, np.inf, 0.0) + np.zeros(a1.shape)
            bound = f / c1
            if s2 > 0:
                hi = np.minimum(hi, bound)
            else:
                lo = np.maximum(lo, bound)
            tau = (c2 * c2 * a1 + c1 * (f - c2 * a2)) / (c1 * c1 + c2 * c2)
            tau = np.clip(tau, lo, hi)
            l1 = tau
            l2 = (f - c1 * tau) / c2
            d = (l1 - a1) ** 2 + (l2 - a2) ** 2
            d = np.where(lo <= hi, d, np.inf)
            with np.errstate(invalid="ignore"):
                tie = np.isfinite(best) & (np.abs(d - best) <= TIE_RTOL * np.maximum(best, 1e-300))
            better = (d < best) & ~tie
            # equidistant optima: keep the one ordered like the input (l1 <= l2)
            better |= tie & (l1 <= l2) & (b1 > b2)
            best = np.where(better, d, best)
            b1 = np.where(better, l1, b1)
            b2 = np.where(better, l2, b2)
    return b1, b2


# ----------------------------------------------------------------------------
# nearest neighbours (brute force, first index wins ties)


def nearest(a, b):
    """For each row of ``a`` return ``(min squared distance, argmin index)`` into ``b``."""
    n = a.shape[0]
    d2 = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    for s in range(0, n, CHUNK):
        blk = a[s:s + CHUNK]
        dd = ((blk[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        j = np.argmin(dd, axis=1)
        idx[s:s + CHUNK] = j
        d2[s:s + CHUNK] = dd[np.arange(len(blk)), j]
    return d2, idx
