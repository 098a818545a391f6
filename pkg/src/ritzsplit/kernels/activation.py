"""Softplus and its first three derivatives, branch-stable."""

import numpy as np

# beyond these thresholds softplus is replaced by z (above) or exp(z) (below)
HI = 30.0
LO = -30.0


def softplus_derivs(z):
    """Return ``(s, s', s'', s''')`` elementwise for an array ``z``."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    p = np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    mid = np.maximum(z, 0.0) + np.log1p(e)
    q = p * (1.0 - p)
    r = q * (1.0 - 2.0 * p)
    hi = z > HI
    lo = z < LO
    ez = np.exp(np.minimum(z, LO))
    s0 = np.where(hi, z, np.where(lo, ez, mid))
    s1 = np.where(hi, 1.0, np.where(lo, ez, p))
    s2 = np.where(hi, 0.0, np.where(lo, ez, q))
    s3 = np.where(hi, 0.0, np.where(lo, ez, r))
    return s0, s1, s2, s3
