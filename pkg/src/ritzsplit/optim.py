"""Adam pre-training and L-BFGS with a strong Wolfe line search."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, minimize

from .tensor_ad import NumericalError


class NonFiniteGradient(NumericalError):
    def __init__(self, message, epoch=None, index=None):
        super().__init__(message, index=index)
        self.epoch = epoch


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(n, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, eps)


def adam_step(state, params, grad, epoch=None):
    """One bias-corrected Adam update; returns ``(state', params')``.

    A non-finite gradient leaves everything untouched and raises
    ``NonFiniteGradient`` tagged with ``epoch``.
    """
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.m.shape:
        raise ValueError("gradient layout does not match optimizer state")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient(f"non-finite gradient at epoch {epoch}", epoch=epoch)
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    mhat = m / (1 - state.beta1 ** t)
    vhat = v / (1 - state.beta2 ** t)
    new = params - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps), new


# ----------------------------------------------------------------------------
# L-BFGS


@dataclass
class LbfgsState:
    history: int = 25
    gtol: float = 1e-7
    max_iter: int = 20
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 25
    curvature_eps: float = 1e-12
    pairs: deque = field(default=None)
    # last evaluated iterate, so chained calls do not re-evaluate
    x: np.ndarray | None = None
    f: float | None = None
    g: np.ndarray | None = None

    def __post_init__(self):
        if self.pairs is None:
            self.pairs = deque(maxlen=self.history)

    def reset(self):
        self.pairs.clear()


@dataclass
class StepRecord:
    t: float
    f0: float
    gtd0: float
    f1: float
    gtd1: float


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    n_iter: int
    n_eval: int
    converged: bool
    degraded: bool
    steps: list


def _cubic_min(x1, f1, g1, x2, f2, g2, lo=None, hi=None):
    """Minimiser of the cubic interpolating two points and slopes, clipped to [lo, hi]."""
    if lo is None:
        lo, hi = min(x1, x2), max(x1, x2)
    vals = (x1, f1, g1, x2, f2, g2)
    if not all(np.isfinite(v) for v in vals) or x1 == x2:
        return 0.5 * (lo + hi)
    d1 = g1 + g2 - 3 * (f1 - f2) / (x1 - x2)
    disc = d1 * d1 - g1 * g2
    if disc < 0:
        return 0.5 * (lo + hi)
    d2 = np.sqrt(disc)
    if x1 <= x2:
        den = g2 - g1 + 2 * d2
        t = x2 - (x2 - x1) * ((g2 + d2 - d1) / den) if den != 0 else 0.5 * (lo + hi)
    else:
        den = g1 - g2 + 2 * d2
        t = x1 - (x1 - x2) * ((g1 + d2 - d1) / den) if den != 0 else 0.5 * (lo + hi)
    if not np.isfinite(t):
        return 0.5 * (lo + hi)
    return min(max(t, lo), hi)


def _evaluate(fun, x):
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return np.inf, g, False
    return f, g, True


def strong_wolfe(fun, x, t, d, f, g, gtd, c1=1e-4, c2=0.9, max_ls=25, tol_change=1e-12):
    """Bracketing + zoom line search (cubic interpolation).

    Returns ``(t, f_new, g_new, n_eval, ok)``; ``ok`` is False when no
    strong Wolfe point was found within ``max_ls`` evaluations.
    """
    d_norm = np.max(np.abs(d))
    f_new, g_new, _ = _evaluate(fun, x + t * d)
    gtd_new = float(g_new @ d) if np.isfinite(f_new) else np.inf
    n = 1
    t_prev, f_prev, g_prev, gtd_prev = 0.0, f, g, gtd
    bracket = None
    while n < max_ls:
        if f_new > f + c1 * t * gtd or (n > 1 and f_new >= f_prev):
            bracket = [(t_prev, f_prev, g_prev, gtd_prev), (t, f_new, g_new, gtd_new)]
            break
        if abs(gtd_new) <= -c2 * gtd:
            return t, f_new, g_new, n, True
        if gtd_new >= 0:
            bracket = [(t_prev, f_prev, g_prev, gtd_prev), (t, f_new, g_new, gtd_new)]
            break
        t_next = _cubic_min(t_prev, f_prev, gtd_prev, t, f_new, gtd_new,
                            t + 0.01 * (t - t_prev), 10 * t)
        t_prev, f_prev, g_prev, gtd_prev = t, f_new, g_new, gtd_new
        t = t_next
        f_new, g_new, _ = _evaluate(fun, x + t * d)
        gtd_new = float(g_new @ d) if np.isfinite(f_new) else np.inf
        n += 1
    if bracket is None:
        return t, f_new, g_new, n, False

    # zoom
    insuf = False
    low, high = (0, 1) if bracket[0][1] <= bracket[1][1] else (1, 0)
    while n < max_ls:
        a, b = bracket[0][0], bracket[1][0]
        if abs(b - a) * d_norm < tol_change:
            break
        t = _cubic_min(*bracket[0][:2], bracket[0][3], *bracket[1][:2], bracket[1][3])
        lo_b, hi_b = min(a, b), max(a, b)
        eps = 0.1 * (hi_b - lo_b)
        if min(hi_b - t, t - lo_b) < eps:
            # too close to an end: step back into the interval
            if insuf or t >= hi_b or t <= lo_b:
                t = hi_b - eps if abs(t - hi_b) < abs(t - lo_b) else lo_b + eps
                insuf = False
            else:
                insuf = True
        else:
            insuf = False
        f_new, g_new, _ = _evaluate(fun, x + t * d)
        gtd_new = float(g_new @ d) if np.isfinite(f_new) else np.inf
        n += 1
        if f_new > f + c1 * t * gtd or f_new >= bracket[low][1]:
            bracket[high] = (t, f_new, g_new, gtd_new)
            low, high = (0, 1) if bracket[0][1] <= bracket[1][1] else (1, 0)
        else:
            if abs(gtd_new) <= -c2 * gtd:
                return t, f_new, g_new, n, True
            if gtd_new * (bracket[high][0] - bracket[low][0]) >= 0:
                bracket[high] = bracket[low]
            bracket[low] = (t, f_new, g_new, gtd_new)
    return t, f_new, g_new, n, False


def _direction(g, pairs):
    q = -g.copy()
    if not pairs:
        return q
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    s, y, _ = pairs[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def lbfgs_minimize(fun, x0, state=None, project=None, max_iter=None, callback=None,
                   nonneg=None):
    """Minimise ``fun`` (returning value and gradient) with L-BFGS.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> (f, g)`` on the full batch.
    state : LbfgsState, optional
        Curvature history and cached evaluation; reused across chained calls.
    project : callable, optional
        Feasibility map applied after each accepted step.  If it moves the
        iterate the step's curvature pair is dropped and the history cleared.
    nonneg : bool array, optional
        Entries constrained to stay >= 0.  The bound-constrained problem is
        handed to scipy's L-BFGS-B with the same history size, iteration
        cap and gradient tolerance (its line search also enforces the strong
        Wolfe conditions); ``project`` is then only a safety net.
    callback : callable, optional
        ``callback(iteration, x, f)`` after each accepted step.

    Returns
    -------
    LbfgsResult
        The best iterate seen (never worse than ``x0``).
    """
    st = LbfgsState() if state is None else state
    max_iter = st.max_iter if max_iter is None else max_iter
    if nonneg is not None:
        return _lbfgsb(fun, x0, st, np.asarray(nonneg, dtype=bool), max_iter, project, callback)
    x = np.array(x0, dtype=float)
    if st.x is not None and st.x.shape == x.shape and np.array_equal(st.x, x):
        f, g, n_eval = st.f, st.g, 0
    else:
        f, g, ok = _evaluate(fun, x)
        n_eval = 1
        if not ok:
            raise NumericalError("objective is not finite at the starting point")
    best_x, best_f = x.copy(), f
    steps = []
    converged = bool(np.max(np.abs(g)) <= st.gtol)
    degraded = False
    it = 0
    while not converged and it < max_iter:
        d = _direction(g, st.pairs)
        gtd = float(g @ d)
        if not gtd < 0:
            st.reset()
            d = -g
            gtd = float(g @ d)
        t = 1.0 if st.pairs else min(1.0, 1.0 / np.sum(np.abs(g)))
        t, f_new, g_new, n_ls, ok = strong_wolfe(fun, x, t, d, f, g, gtd, st.c1, st.c2, st.max_ls)
        n_eval += n_ls
        if not ok:
            degraded = True
            st.reset()
            break
        steps.append(StepRecord(t, f, gtd, f_new, float(g_new @ d)))
        s = t * d
        x_new = x + s
        if project is not None:
            xp = project(x_new)
            if not np.array_equal(xp, x_new):
                st.reset()
                x_new = np.array(xp, dtype=float)
                f_new, g_new, ok = _evaluate(fun, x_new)
                n_eval += 1
                if not ok:
                    degraded = True
                    break
                s = None
        if s is not None:
            y = g_new - g
            sy = float(s @ y)
            if sy > st.curvature_eps:
                st.pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        it += 1
        if f < best_f:
            best_x, best_f = x.copy(), f
        if callback is not None:
            callback(it, x, f)
        if np.max(np.abs(g)) <= st.gtol:
            converged = True
        elif np.max(np.abs(s if s is not None else 0.0)) < 1e-14:
            break
    if best_f < f:
        # the last iterate (e.g. after projection) was worse: restart from the best
        st.reset()
        st.x, st.f, st.g = None, None, None
    else:
        st.x, st.f, st.g = x.copy(), f, g.copy()
    return LbfgsResult(best_x, best_f, it, n_eval, converged, degraded, steps)


def _lbfgsb(fun, x0, st, nonneg, max_iter, project, callback):
    x0 = np.array(x0, dtype=float)
    x0[nonneg] = np.maximum(x0[nonneg], 0.0)
    lower = np.where(nonneg, 0.0, -np.inf)
    bounds = Bounds(lower, np.full(x0.shape, np.inf))
    best = {"f": np.inf, "x": x0.copy()}
    count = {"eval": 0, "it": 0}

    def wrapped(x):
        f, g, _ = _evaluate(fun, x)
        count["eval"] += 1
        if f < best["f"]:
            best["f"], best["x"] = f, x.copy()
        return f, g

    def cb(intermediate_result):
        # scipy passes an OptimizeResult only to a parameter of this name
        count["it"] += 1
        if callback is not None:
            callback(count["it"], intermediate_result.x, float(intermediate_result.fun))

    f0, _ = wrapped(x0)
    if not np.isfinite(f0):
        raise NumericalError("objective is not finite at the starting point")
    if max_iter > 0:
        res = minimize(wrapped, x0, jac=True, method="L-BFGS-B", bounds=bounds, callback=cb,
                       options=dict(maxcor=st.history, maxiter=max_iter, gtol=st.gtol, ftol=0.0,
                                    maxls=st.max_ls))
        status = res.status
    else:
        status = 1
    x = best["x"]
    if project is not None:
        xp = project(x)
        if not np.array_equal(xp, x):
            x = np.array(xp, dtype=float)
            best["f"] = _evaluate(fun, x)[0]
    st.reset()
    st.x = st.f = st.g = None
    # status 0: converged; 1: iteration limit; otherwise an abnormal line search stop
    return LbfgsResult(x, float(best["f"]), count["it"], count["eval"], status == 0,
                       status not in (0, 1), [])
