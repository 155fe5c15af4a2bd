"""Couple time-allocation kernels.

Two interchangeable implementations of the same algorithm:

* ``couple_alloc_jit``: per-state scalar loops compiled with numba;
* ``couple_alloc_np``: all states advanced together with numpy array ops.

Algorithm, per state:

1. Split the domestic requirement at the cost-minimising ratio
   ``d_m/d_f = (theta w_m / ((1-theta) w_f))^(1/(xi-1))``. Solve for the
   budget multiplier ``eta`` by bisection in ``log eta``. If both spouses
   work at that split the KKT conditions hold and we are done.
2. Otherwise (a corner with one spouse out of the market), golden-section
   search over ``d_m`` on the requirement frontier, re-solving ``eta`` at
   each trial point. The partially maximised objective is concave in
   ``d_m`` so the search is exact up to tolerance.
"""

import math

import numpy as np

from ._accel import njit

GOLDEN = 0.6180339887498949  # (sqrt(5) - 1) / 2
EDGE = 1e-9  # keep every member's leisure at least this far from zero
BRACKET = 60.0  # initial log-width of the eta bracket


@njit
def golden_iterations(width, tol):
    if width <= tol:
        return 0
    return int(math.ceil(math.log(tol / width) / math.log(GOLDEN)))


# ---------------------------------------------------------------------------
# scalar helpers (compiled when numba is on)


@njit
def _ces(dm, df, theta, xi):
    # power mean in expm1/log1p form stays accurate as xi -> 0
    if xi == 0.0:
        return dm ** (1.0 - theta) * df**theta
    if dm <= 0.0 or df <= 0.0:
        if xi < 0.0:
            return 0.0
        return ((1.0 - theta) * dm**xi + theta * df**xi) ** (1.0 / xi)
    s = (1.0 - theta) * math.expm1(xi * math.log(dm)) + theta * math.expm1(xi * math.log(df))
    return math.exp(math.log1p(s) / xi)


@njit
def _df_on_frontier(dm, psi, theta, xi):
    """Wife's input that, with ``dm``, produces exactly ``psi``."""
    if xi == 0.0:
        return (psi / dm ** (1.0 - theta)) ** (1.0 / theta)
    s = (math.expm1(xi * math.log(psi)) - (1.0 - theta) * math.expm1(xi * math.log(dm))) / theta
    if s <= -1.0:
        # xi > 0: husband alone covers the requirement; xi < 0: below the asymptote
        return 0.0 if xi > 0.0 else np.inf
    return math.exp(math.log1p(s) / xi)


@njit
def _dm_bounds(psi, theta, xi):
    top = 1.0 - EDGE
    if xi == 0.0:
        lo = (psi / top**theta) ** (1.0 / (1.0 - theta))
        hi = top
    else:
        s = (math.expm1(xi * math.log(psi)) - theta * math.expm1(xi * math.log(top))) / (1.0 - theta)
        if xi > 0.0:
            lo = 0.0 if s <= -1.0 else math.exp(math.log1p(s) / xi)
            hi = min(top, math.exp(math.log(psi) - math.log(1.0 - theta) / xi))
        else:
            lo = math.exp(math.log1p(s) / xi)
            hi = top
    return lo, hi


@njit
def _cost_min_split(wm, wf, psi, theta, xi):
    r = (theta * wm / ((1.0 - theta) * wf)) ** (1.0 / (xi - 1.0))
    df = psi / _ces(r, 1.0, theta, xi)
    return r * df, df


@njit
def _leisure(eta, weight, w, cap, al, gl):
    l = (weight * al / (eta * w)) ** (1.0 / gl)
    return cap if l > cap else l


@njit
def _inner(wm, wf, dm, df, lam, gam, gc, gl, al, iters):
    """Leisure pair and consumption given the domestic split."""
    tm = 1.0 - dm
    tf = 1.0 - df
    cmax = wm * tm + wf * tf
    lo = math.log((cmax / gam) ** (-gc) / gam)
    hi = lo + BRACKET
    # widen until the excess marginal utility changes sign
    for _ in range(200):
        eta = math.exp(hi)
        c = wm * (tm - _leisure(eta, 1.0 - lam, wm, tm, al, gl)) + wf * (tf - _leisure(eta, lam, wf, tf, al, gl))
        if c > 0.0 and (c / gam) ** (-gc) / gam < eta:
            break
        lo = hi
        hi = hi + BRACKET
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        eta = math.exp(mid)
        c = wm * (tm - _leisure(eta, 1.0 - lam, wm, tm, al, gl)) + wf * (tf - _leisure(eta, lam, wf, tf, al, gl))
        if c <= 0.0 or (c / gam) ** (-gc) / gam > eta:
            lo = mid
        else:
            hi = mid
    eta = math.exp(0.5 * (lo + hi))
    lm = _leisure(eta, 1.0 - lam, wm, tm, al, gl)
    lf = _leisure(eta, lam, wf, tf, al, gl)
    c = wm * (tm - lm) + wf * (tf - lf)
    return lm, lf, c


@njit
def _objective(lm, lf, c, lam, gam, gc, gl, al):
    x = c / gam
    uc = x ** (1.0 - gc) / (1.0 - gc)
    return uc + al * ((1.0 - lam) * lm ** (1.0 - gl) + lam * lf ** (1.0 - gl)) / (1.0 - gl)


@njit
def _frontier_value(dm, wm, wf, lam, psi, gam, gc, gl, al, theta, xi, iters):
    df = _df_on_frontier(dm, psi, theta, xi)
    if not df < 1.0:
        return -np.inf, df
    lm, lf, c = _inner(wm, wf, dm, df, lam, gam, gc, gl, al, iters)
    if c <= 0.0 or lm <= 0.0 or lf <= 0.0:
        return -np.inf, df
    return _objective(lm, lf, c, lam, gam, gc, gl, al), df


@njit
def couple_alloc_jit(wm, wf, lam, psi, gam, gc, gl, al, theta, xi, iters, tol):
    n = wm.shape[0]
    out = np.empty((n, 5))  # lm, lf, dm, df, corner flag
    for k in range(n):
        lm = 0.0
        lf = 0.0
        if psi[k] <= 0.0:
            dm = 0.0
            df = 0.0
        else:
            dm, df = _cost_min_split(wm[k], wf[k], psi[k], theta, xi)
        corner = 0.0
        if dm < 1.0 and df < 1.0:
            lm, lf, c = _inner(wm[k], wf[k], dm, df, lam[k], gam[k], gc, gl, al, iters)
            if not (lm < 1.0 - dm and lf < 1.0 - df):
                corner = 1.0
        else:
            corner = 1.0
        if corner > 0.0 and psi[k] > 0.0:
            a, b = _dm_bounds(psi[k], theta, xi)
            x1 = b - GOLDEN * (b - a)
            x2 = a + GOLDEN * (b - a)
            f1, _ = _frontier_value(x1, wm[k], wf[k], lam[k], psi[k], gam[k], gc, gl, al, theta, xi, iters)
            f2, _ = _frontier_value(x2, wm[k], wf[k], lam[k], psi[k], gam[k], gc, gl, al, theta, xi, iters)
            for _ in range(golden_iterations(b - a, tol)):
                if f1 >= f2:
                    b = x2
                    x2 = x1
                    f2 = f1
                    x1 = b - GOLDEN * (b - a)
                    f1, _ = _frontier_value(x1, wm[k], wf[k], lam[k], psi[k], gam[k], gc, gl, al, theta, xi, iters)
                else:
                    a = x1
                    x1 = x2
                    f1 = f2
                    x2 = a + GOLDEN * (b - a)
                    f2, _ = _frontier_value(x2, wm[k], wf[k], lam[k], psi[k], gam[k], gc, gl, al, theta, xi, iters)
            dm = 0.5 * (a + b)
            df = _df_on_frontier(dm, psi[k], theta, xi)
            lm, lf, c = _inner(wm[k], wf[k], dm, df, lam[k], gam[k], gc, gl, al, iters)
        out[k, 0] = lm
        out[k, 1] = lf
        out[k, 2] = dm
        out[k, 3] = df
        out[k, 4] = corner
    return out


# ---------------------------------------------------------------------------
# vectorised numpy twin


def _leisure_np(eta, weight, w, cap, al, gl):
    return np.minimum(cap, (weight * al / (eta * w)) ** (1.0 / gl))


def _inner_np(wm, wf, dm, df, lam, gam, gc, gl, al, iters):
    tm = 1.0 - dm
    tf = 1.0 - df
    cmax = wm * tm + wf * tf
    lo = np.log((cmax / gam) ** (-gc) / gam)
    hi = lo + BRACKET

    def excess_positive(logeta):
        eta = np.exp(logeta)
        c = wm * (tm - _leisure_np(eta, 1.0 - lam, wm, tm, al, gl)) + wf * (tf - _leisure_np(eta, lam, wf, tf, al, gl))
        with np.errstate(divide="ignore"):
            return (c <= 0.0) | ((np.maximum(c, 0.0) / gam) ** (-gc) / gam > eta)

    for _ in range(200):
        bad = excess_positive(hi)
        if not bad.any():
            break
        lo = np.where(bad, hi, lo)
        hi = np.where(bad, hi + BRACKET, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = excess_positive(mid)
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    eta = np.exp(0.5 * (lo + hi))
    lm = _leisure_np(eta, 1.0 - lam, wm, tm, al, gl)
    lf = _leisure_np(eta, lam, wf, tf, al, gl)
    return lm, lf, wm * (tm - lm) + wf * (tf - lf)


def _ces_np(dm, df, theta, xi):
    if xi == 0.0:
        return dm ** (1.0 - theta) * df**theta
    s = (1.0 - theta) * np.expm1(xi * np.log(dm)) + theta * np.expm1(xi * np.log(df))
    return np.exp(np.log1p(s) / xi)


def _df_on_frontier_np(dm, psi, theta, xi):
    if xi == 0.0:
        return (psi / dm ** (1.0 - theta)) ** (1.0 / theta)
    s = (np.expm1(xi * np.log(psi)) - (1.0 - theta) * np.expm1(xi * np.log(dm))) / theta
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        df = np.where(s > -1.0, np.exp(np.log1p(np.maximum(s, -1.0 + 1e-300)) / xi), 0.0 if xi > 0.0 else np.inf)
    return df


def _dm_bounds_np(psi, theta, xi):
    top = 1.0 - EDGE
    if xi == 0.0:
        return (psi / top**theta) ** (1.0 / (1.0 - theta)), np.full_like(psi, top)
    s = (np.expm1(xi * np.log(psi)) - theta * np.expm1(xi * np.log(top))) / (1.0 - theta)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        if xi > 0.0:
            lo = np.where(s <= -1.0, 0.0, np.exp(np.log1p(np.maximum(s, -1.0 + 1e-300)) / xi))
            hi = np.minimum(top, np.exp(np.log(psi) - np.log(1.0 - theta) / xi))
        else:
            lo = np.exp(np.log1p(s) / xi)
            hi = np.full_like(psi, top)
    return lo, hi


def _frontier_value_np(dm, wm, wf, lam, psi, gam, gc, gl, al, theta, xi, iters):
    df = _df_on_frontier_np(dm, psi, theta, xi)
    ok = df < 1.0
    dfc = np.where(ok, df, 0.5)
    lm, lf, c = _inner_np(wm, wf, dm, dfc, lam, gam, gc, gl, al, iters)
    ok &= (c > 0.0) & (lm > 0.0) & (lf > 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.maximum(c, 1e-300) / gam
        val = x ** (1.0 - gc) / (1.0 - gc) + al * ((1.0 - lam) * lm ** (1.0 - gl) + lam * lf ** (1.0 - gl)) / (1.0 - gl)
    return np.where(ok, val, -np.inf)


def couple_alloc_np(wm, wf, lam, psi, gam, gc, gl, al, theta, xi, iters, tol):
    n = wm.shape[0]
    pos = psi > 0.0
    dm = np.zeros(n)
    df = np.zeros(n)
    if pos.any():
        r = (theta * wm[pos] / ((1.0 - theta) * wf[pos])) ** (1.0 / (xi - 1.0))
        df[pos] = psi[pos] / _ces_np(r, np.ones_like(r), theta, xi)
        dm[pos] = r * df[pos]
    feasible = (dm < 1.0) & (df < 1.0)
    lm, lf, _ = _inner_np(wm, wf, np.where(feasible, dm, 0.0), np.where(feasible, df, 0.0), lam, gam, gc, gl, al, iters)
    corner = ~feasible | ~((lm < 1.0 - dm) & (lf < 1.0 - df))
    corner &= pos
    if corner.any():
        idx = np.flatnonzero(corner)
        args = (wm[idx], wf[idx], lam[idx], psi[idx], gam[idx], gc, gl, al, theta, xi, iters)
        a, b = _dm_bounds_np(psi[idx], theta, xi)
        x1 = b - GOLDEN * (b - a)
        x2 = a + GOLDEN * (b - a)
        f1 = _frontier_value_np(x1, *args)
        f2 = _frontier_value_np(x2, *args)
        steps = np.array([golden_iterations(w, tol) for w in b - a])
        for it in range(int(steps.max(initial=0))):
            active = it < steps
            left = (f1 >= f2) & active
            right = ~(f1 >= f2) & active
            # left: keep [a, x2]
            b = np.where(left, x2, b)
            a = np.where(right, x1, a)
            nx1 = np.where(left, b - GOLDEN * (b - a), np.where(right, x2, x1))
            nx2 = np.where(right, a + GOLDEN * (b - a), np.where(left, x1, x2))
            nf1 = np.where(right, f2, f1)
            nf2 = np.where(left, f1, f2)
            probe = np.where(left, nx1, nx2)
            fp = _frontier_value_np(probe, *args)
            nf1 = np.where(left, fp, nf1)
            nf2 = np.where(right, fp, nf2)
            x1, x2, f1, f2 = nx1, nx2, nf1, nf2
        dmc = 0.5 * (a + b)
        dm[idx] = dmc
        df[idx] = _df_on_frontier_np(dmc, psi[idx], theta, xi)
        lm_c, lf_c, _ = _inner_np(wm[idx], wf[idx], dm[idx], df[idx], lam[idx], gam[idx], gc, gl, al, iters)
        lm[idx] = lm_c
        lf[idx] = lf_c
    return np.column_stack([lm, lf, dm, df, corner.astype(float)])
