"""Numba-compiled per-point kernels, numerically equivalent to ``_numpy``."""

import math

import numpy as np
from numba import njit

from .activation import HI, LO

SCAN = 161
SPAN = 20.0
GOLDEN_ITERS = 48
NEWTON_ITERS = 30
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
TIE_RTOL = 1e-12


@njit(cache=True, inline="always")
def _softplus4(z):
    if z > HI:
        return z, 1.0, 0.0, 0.0
    if z < LO:
        e = math.exp(z)
        return e, e, e, e
    e = math.exp(-abs(z))
    if z >= 0.0:
        p = 1.0 / (1.0 + e)
    else:
        p = e / (1.0 + e)
    q = p * (1.0 - p)
    return max(z, 0.0) + math.log1p(e), p, q, q * (1.0 - 2.0 * p)


@njit(cache=True)
def _forward(theta, lay, x, C, out, zs, hs, ds):
    # zs/hs are point-major with the channel index innermost: [p, layer, unit, c];
    # ds keeps the activation derivatives for the reverse pass
    n = x.shape[0]
    nl = lay.shape[0]
    acc = np.empty(C)
    for p in range(n):
        x0 = x[p, 0]
        x1 = x[p, 1]
        for li in range(nl):
            nin = lay[li, 0]
            nout = lay[li, 1]
            wo = lay[li, 2]
            lo = lay[li, 3]
            bo = lay[li, 4]
            last = li == nl - 1
            for k in range(nout):
                for c in range(C):
                    acc[c] = 0.0
                if li == 0:
                    w0 = theta[wo + 2 * k]
                    w1 = theta[wo + 2 * k + 1]
                    acc[0] = w0 * x0 + w1 * x1
                    if C >= 3:
                        acc[1] = w0
                        acc[2] = w1
                else:
                    base = wo + k * nin
                    h = hs[p, li - 1]
                    if C == 6:
                        a0 = a1 = a2 = a3 = a4 = a5 = 0.0
                        for j in range(nin):
                            w = theta[base + j]
                            a0 += w * h[j, 0]
                            a1 += w * h[j, 1]
                            a2 += w * h[j, 2]
                            a3 += w * h[j, 3]
                            a4 += w * h[j, 4]
                            a5 += w * h[j, 5]
                        acc[0] = a0
                        acc[1] = a1
                        acc[2] = a2
                        acc[3] = a3
                        acc[4] = a4
                        acc[5] = a5
                    else:
                        for j in range(nin):
                            w = theta[base + j]
                            for c in range(C):
                                acc[c] += w * h[j, c]
                    if lo >= 0:
                        l0 = theta[lo + 2 * k]
                        l1 = theta[lo + 2 * k + 1]
                        acc[0] += l0 * x0 + l1 * x1
                        if C >= 3:
                            acc[1] += l0
                            acc[2] += l1
                acc[0] += theta[bo + k]
                if last:
                    for c in range(C):
                        out[p, c] = acc[c]
                    continue
                for c in range(C):
                    zs[p, li, k, c] = acc[c]
                s0, s1, s2, s3 = _softplus4(acc[0])
                ds[p, li, k, 0] = s1
                ds[p, li, k, 1] = s2
                ds[p, li, k, 2] = s3
                hs[p, li, k, 0] = s0
                if C >= 3:
                    z1 = acc[1]
                    z2 = acc[2]
                    hs[p, li, k, 1] = s1 * z1
                    hs[p, li, k, 2] = s1 * z2
                    if C == 6:
                        hs[p, li, k, 3] = s2 * z1 * z1 + s1 * acc[3]
                        hs[p, li, k, 4] = s2 * z1 * z2 + s1 * acc[4]
                        hs[p, li, k, 5] = s2 * z2 * z2 + s1 * acc[5]


@njit(cache=True)
def _backward(theta, lay, x, zs, hs, ds, adj, grad):
    n = x.shape[0]
    nl = lay.shape[0]
    C = adj.shape[1]
    nmax = 1
    for li in range(nl):
        nmax = max(nmax, lay[li, 0], lay[li, 1])
    dz = np.zeros((nmax, C))
    dh = np.zeros((nmax, C))
    for p in range(n):
        x0 = x[p, 0]
        x1 = x[p, 1]
        for c in range(C):
            dz[0, c] = adj[p, c]
        for li in range(nl - 1, -1, -1):
            nin = lay[li, 0]
            nout = lay[li, 1]
            wo = lay[li, 2]
            lo = lay[li, 3]
            bo = lay[li, 4]
            for k in range(nout):
                grad[bo + k] += dz[k, 0]
            if li == 0:
                for k in range(nout):
                    g0 = dz[k, 0] * x0
                    g1 = dz[k, 0] * x1
                    if C >= 3:
                        g0 += dz[k, 1]
                        g1 += dz[k, 2]
                    grad[wo + 2 * k] += g0
                    grad[wo + 2 * k + 1] += g1
                break
            for j in range(nin):
                for c in range(C):
                    dh[j, c] = 0.0
            for k in range(nout):
                base = wo + k * nin
                h = hs[p, li - 1]
                if C == 6:
                    e0 = dz[k, 0]
                    e1 = dz[k, 1]
                    e2 = dz[k, 2]
                    e3 = dz[k, 3]
                    e4 = dz[k, 4]
                    e5 = dz[k, 5]
                    for j in range(nin):
                        grad[base + j] += (e0 * h[j, 0] + e1 * h[j, 1] + e2 * h[j, 2]
                                           + e3 * h[j, 3] + e4 * h[j, 4] + e5 * h[j, 5])
                        w = theta[base + j]
                        dh[j, 0] += e0 * w
                        dh[j, 1] += e1 * w
                        dh[j, 2] += e2 * w
                        dh[j, 3] += e3 * w
                        dh[j, 4] += e4 * w
                        dh[j, 5] += e5 * w
                else:
                    for j in range(nin):
                        acc = 0.0
                        for c in range(C):
                            acc += dz[k, c] * h[j, c]
                        grad[base + j] += acc
                        w = theta[base + j]
                        for c in range(C):
                            dh[j, c] += dz[k, c] * w
                if lo >= 0:
                    g0 = dz[k, 0] * x0
                    g1 = dz[k, 0] * x1
                    if C >= 3:
                        g0 += dz[k, 1]
                        g1 += dz[k, 2]
                    grad[lo + 2 * k] += g0
                    grad[lo + 2 * k + 1] += g1
            # activation adjoint of the previous layer
            for j in range(nin):
                s1 = ds[p, li - 1, j, 0]
                s2 = ds[p, li - 1, j, 1]
                s3 = ds[p, li - 1, j, 2]
                d0 = dh[j, 0] * s1
                if C >= 3:
                    z1 = zs[p, li - 1, j, 1]
                    z2 = zs[p, li - 1, j, 2]
                    d0 += (dh[j, 1] * z1 + dh[j, 2] * z2) * s2
                    d1 = dh[j, 1] * s1
                    d2 = dh[j, 2] * s1
                    if C == 6:
                        z3 = zs[p, li - 1, j, 3]
                        z4 = zs[p, li - 1, j, 4]
                        z5 = zs[p, li - 1, j, 5]
                        d0 += (dh[j, 3] * z3 + dh[j, 4] * z4 + dh[j, 5] * z5) * s2
                        d0 += (dh[j, 3] * z1 * z1 + dh[j, 4] * z1 * z2 + dh[j, 5] * z2 * z2) * s3
                        d1 += (2.0 * dh[j, 3] * z1 + dh[j, 4] * z2) * s2
                        d2 += (dh[j, 4] * z1 + 2.0 * dh[j, 5] * z2) * s2
                        dz[j, 3] = dh[j, 3] * s1
                        dz[j, 4] = dh[j, 4] * s1
                        dz[j, 5] = dh[j, 5] * s1
                    dz[j, 1] = d1
                    dz[j, 2] = d2
                dz[j, 0] = d0


def jet_forward(theta, lay, x, C):
    n = x.shape[0]
    nl = lay.shape[0]
    nmax = int(lay[:, 1].max()) if nl > 1 else 1
    zs = np.empty((n, max(nl - 1, 1), nmax, C))
    hs = np.empty((n, max(nl - 1, 1), nmax, C))
    ds = np.empty((n, max(nl - 1, 1), nmax, 3))
    out = np.empty((n, C))
    _forward(theta, lay, np.ascontiguousarray(x, dtype=np.float64), C, out, zs, hs, ds)
    return out, (zs, hs, ds)


def jet_backward(theta, lay, x, cache, adj):
    zs, hs, ds = cache
    grad = np.zeros_like(theta)
    _backward(theta, lay, np.ascontiguousarray(x, dtype=np.float64), zs, hs, ds,
              np.ascontiguousarray(adj, dtype=np.float64), grad)
    return grad


# ----------------------------------------------------------------------------
# projections


@njit(cache=True, inline="always")
def _ma_obj(s, a1, a2, f):
    t = math.exp(s)
    return (t - a1) ** 2 + (f / t - a2) ** 2


@njit(cache=True)
def _refine(sl, sh, a1, a2, f):
    lo = sl
    hi = sh
    for _ in range(GOLDEN_ITERS):
        c = hi - _INVPHI * (hi - lo)
        d = lo + _INVPHI * (hi - lo)
        if _ma_obj(c, a1, a2, f) < _ma_obj(d, a1, a2, f):
            hi = d
        else:
            lo = c
    t = math.exp(0.5 * (lo + hi))
    tlo = math.exp(sl) * (1 - 1e-12)
    thi = math.exp(sh) * (1 + 1e-12)
    for _ in range(NEWTON_ITERS):
        q = f / t
        g1 = 2.0 * (t - a1) - 2.0 * (q - a2) * q / t
        g2 = 2.0 + 2.0 * q * q / (t * t) + 4.0 * (q - a2) * q / (t * t)
        if g2 <= 0.0:
            break
        tn = t - g1 / g2
        if not (tn > tlo and tn < thi):
            break
        done = abs(tn - t) <= 1e-15 * max(1.0, abs(t))
        t = tn
        if done:
            break
    return min(t, math.sqrt(f))


@njit(cache=True)
def _project_ma(a1, a2, f, l1, l2):
    vals = np.empty(SCAN)
    for i in range(a1.shape[0]):
        hi = 0.5 * math.log(f[i])
        lo = hi - SPAN
        h = (hi - lo) / (SCAN - 1)
        for k in range(SCAN):
            vals[k] = _ma_obj(lo + k * h, a1[i], a2[i], f[i])
        # two lowest discrete local minima
        k1 = -1
        k2 = -1
        for k in range(SCAN):
            left = vals[k - 1] if k > 0 else np.inf
            right = vals[k + 1] if k < SCAN - 1 else np.inf
            if vals[k] <= left and vals[k] <= right:
                if k1 < 0 or vals[k] < vals[k1]:
                    k2 = k1
                    k1 = k
                elif k2 < 0 or vals[k] < vals[k2]:
                    k2 = k
        best_t = 0.0
        best_v = np.inf
        for kk in (k1, k2):
            if kk < 0:
                continue
            sl = max(lo + (kk - 1) * h, lo)
            sh = min(lo + (kk + 1) * h, hi)
            t = _refine(sl, sh, a1[i], a2[i], f[i])
            v = (t - a1[i]) ** 2 + (f[i] / t - a2[i]) ** 2
            if v < best_v:
                best_v = v
                best_t = t
        l1[i] = best_t
        l2[i] = f[i] / best_t


def project_ma(a1, a2, f):
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    shape = a1.shape
    f = np.ascontiguousarray(np.broadcast_to(np.asarray(f, dtype=np.float64), shape)).ravel()
    l1 = np.empty(f.shape[0])
    l2 = np.empty(f.shape[0])
    _project_ma(np.ascontiguousarray(a1).ravel(), np.ascontiguousarray(a2).ravel(), f, l1, l2)
    return l1.reshape(shape), l2.reshape(shape)


@njit(cache=True)
def _project_pucci(a1, a2, f, alpha, l1, l2):
    for i in range(a1.shape[0]):
        best = np.inf
        b1 = 0.0
        b2 = 0.0
        for o in range(4):
            pos1 = o < 2
            pos2 = (o % 2) == 0
            c1 = alpha if pos1 else 1.0
            c2 = alpha if pos2 else 1.0
            lo = 0.0 if pos1 else -np.inf
            hi = np.inf if pos1 else 0.0
            bound = f[i] / c1
            if pos2:
                hi = min(hi, bound)
            else:
                lo = max(lo, bound)
            if lo > hi:
                continue
            tau = (c2 * c2 * a1[i] + c1 * (f[i] - c2 * a2[i])) / (c1 * c1 + c2 * c2)
            tau = min(max(tau, lo), hi)
            m2 = (f[i] - c1 * tau) / c2
            d = (tau - a1[i]) ** 2 + (m2 - a2[i]) ** 2
            tie = best < np.inf and abs(d - best) <= TIE_RTOL * max(best, 1e-300)
            if (d < best and not tie) or (tie and tau <= m2 and b1 > b2):
                best = d
                b1 = tau
                b2 = m2
        l1[i] = b1
        l2[i] = b2


def project_pucci(a1, a2, f, alpha):
    a1 = np.asarray(a1, dtype=np.float64)
    shape = a1.shape
    a2 = np.asarray(a2, dtype=np.float64)
    f = np.ascontiguousarray(np.broadcast_to(np.asarray(f, dtype=np.float64), shape)).ravel()
    l1 = np.empty(f.shape[0])
    l2 = np.empty(f.shape[0])
    _project_pucci(np.ascontiguousarray(a1).ravel(), np.ascontiguousarray(a2).ravel(), f,
                   float(alpha), l1, l2)
    return l1.reshape(shape), l2.reshape(shape)


# ----------------------------------------------------------------------------
# nearest neighbours


@njit(cache=True)
def _nearest(a, b, d2, idx):
    for i in range(a.shape[0]):
        best = np.inf
        bj = 0
        for j in range(b.shape[0]):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            d = dx * dx + dy * dy
            if d < best:
                best = d
                bj = j
        d2[i] = best
        idx[i] = bj


def nearest(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    d2 = np.empty(a.shape[0])
    idx = np.empty(a.shape[0], dtype=np.int64)
    _nearest(a, b, d2, idx)
    return d2, idx
