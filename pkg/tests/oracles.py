"""Independent reference computations used by the test suite."""

import numpy as np

from marfert.primitives import bargaining_weight, couple_requirement, equivalence_scale


def _u(c, l, n, prefs):
    return (
        c ** (1 - prefs.gamma_c) / (1 - prefs.gamma_c)
        + prefs.alpha_l * l ** (1 - prefs.gamma_l) / (1 - prefs.gamma_l)
        + prefs.alpha_n * ((1.0 + n) ** (1 - prefs.gamma_n) - 1) / (1 - prefs.gamma_n)
    )


def grid_search_couple(w_m, w_f, n0, n1, params, n=200):
    """Best objective on an n x n x n grid over (d_m, h_m, h_f).

    d_f follows from the domestic constraint; leisure from the time budgets.
    Only strictly feasible points (positive leisure, d_f < 1) are scored.
    """
    hp, prefs = params.home, params.prefs
    th, xi = hp.theta, hp.xi
    psi = float(couple_requirement(n0, n1, hp))
    lam = float(bargaining_weight(w_m, w_f, n0, params.bargaining))
    gam = float(equivalence_scale(n0, n1, params.demo))
    N = n0 + n1
    # d_m range on which 0 < d_f < 1
    lo = ((psi**xi - th) / (1 - th)) ** (1 / xi) if psi**xi > th else 0.0
    dms = lo + (1.0 - lo) * (np.arange(n) + 0.5) / n
    s = np.arange(n) / n  # share of the non-domestic time spent working
    best = -np.inf
    for dm in dms:
        inner = (psi**xi - (1 - th) * dm**xi) / th
        if inner <= 0:
            continue
        df = inner ** (1 / xi)
        if not 0 < df < 1:
            continue
        hm = s[:, None] * (1 - dm)
        hf = s[None, :] * (1 - df)
        lm = 1 - dm - hm
        lf = 1 - df - hf
        c = w_m * hm + w_f * hf
        ok = c > 0
        cg = np.where(ok, c, 1.0) / gam
        obj = (1 - lam) * _u(cg, lm, N, prefs) + lam * _u(cg, lf, N, prefs)
        obj = np.where(ok, obj, -np.inf)
        best = max(best, float(obj.max()))
    return best


def simpson(f, a, b, n=501):
    """Composite Simpson rule with n (odd) nodes on [a, b]."""
    if n % 2 == 0:
        raise ValueError("Simpson rule needs an odd node count")
    x = np.linspace(a, b, n)
    w = np.ones(n)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return (b - a) / (n - 1) / 3 * np.sum(w * f(x), axis=-1)


def _simpson_nodes(a, b, n=501):
    """Nodes and weights of composite Simpson on [a, b], broadcast over arrays a, b."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    t = np.linspace(0.0, 1.0, n)
    w = np.ones(n)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    x = a + (b - a) * t
    return x, (b - a) / (n - 1) / 3 * w


def quadrature_single_values(cv, S_hat, v_single, params, n=501, tol=1e-13, max_iter=20_000):
    """Single values with the bliss expectation done by brute-force quadrature.

    The post-meeting value max-rule (married iff b beats both reservation
    shocks) is integrated against the normal density on [mu-8s, mu+8s], split
    at the mutual threshold so each piece is smooth.
    """
    mu, sig = params.bliss.mu_b, params.bliss.sigma_b
    beta, kappa = params.demo.beta, params.demo.kappa
    lo, hi = mu - 8 * sig, mu + 8 * sig
    pdf = lambda x: np.exp(-0.5 * ((x - mu) / sig) ** 2) / (sig * np.sqrt(2 * np.pi))  # noqa: E731
    W = np.repeat((v_single / (1 - beta * (1 - kappa)))[None], 3, axis=0)
    for _ in range(max_iter):
        E = np.empty((2,) + v_single.shape)
        for k in range(2):
            B = cv.annuity[k]
            vm = cv.vbar[0, k, :, :, 0, 0]
            vf = cv.vbar[1, k, :, :, 0, 0]
            bstar = np.maximum((W[k, 0][:, None] - vm) / B, (W[k, 1][None, :] - vf) / B)
            c = np.clip(bstar, lo, hi)
            xs, ws = _simpson_nodes(lo, c, n)
            p_single = np.sum(ws * pdf(xs), axis=-1)
            xm, wm = _simpson_nodes(c, hi, n)
            p_married = np.sum(wm * pdf(xm), axis=-1)
            b_married = np.sum(wm * xm * pdf(xm), axis=-1)
            post_m = W[k, 0][:, None] * p_single + vm * p_married + B * b_married
            post_f = W[k, 1][None, :] * p_single + vf * p_married + B * b_married
            E[k, 0] = post_m @ S_hat[k, 1]
            E[k, 1] = S_hat[k, 0] @ post_f
        new = np.empty_like(W)
        new[2] = v_single / (1 - beta * (1 - kappa))
        new[1] = v_single + beta * (1 - kappa) * E[1] + beta * kappa * W[2]
        new[0] = v_single + beta * (1 - kappa) * E[0] + beta * kappa * E[1]
        err = np.max(np.abs(new - W))
        W = new
        if err < tol:
            return W
    raise RuntimeError("quadrature single values did not converge")
