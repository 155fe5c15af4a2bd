"""Lifetime values of couples and singles, childbirth policy and the marriage rule.

Couple values are affine in the match-quality shock ``b``:
``V_g^a(state; b) = vbar_g^a(state) + b * B^a`` where ``B^a`` is the expected
discounted number of remaining periods. Thresholds and truncated-normal means
then replace any integration over ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .params import ModelParams, SolverSettings
from .primitives import MAX_CHILDREN, MIDDLE, OLD, YOUNG
from .static import StaticTables


class SolverError(RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, history=None, last=None):
        super().__init__(message)
        self.history = list(history or [])
        self.last = last


def annuity_factors(beta: float, kappa: float) -> tuple[float, float, float]:
    """(B_Y, B_M, B_O): coefficient on a permanent per-period flow, by age stage."""
    r = 1.0 - beta * (1.0 - kappa)
    b_o = 1.0 / r
    b_m = (1.0 + beta * kappa * b_o) / r
    b_y = (1.0 + beta * kappa * b_m) / r
    return b_y, b_m, b_o


@dataclass(frozen=True)
class CoupleValueTable:
    """``vbar[g, age, i_wm, i_wf, n0, n1]`` (g: 0 husband, 1 wife), ``annuity[age]``
    and ``policy[age, i_wm, i_wf, n0, n1]`` (True = try for a child).
    Unreachable cells hold ``nan`` / False."""

    vbar: np.ndarray
    annuity: np.ndarray
    policy: np.ndarray

    def value(self, g, age, i, j, n0, n1, b):
        return self.vbar[g, age, i, j, n0, n1] + b * self.annuity[age]


def _lam_weighted(vm, vf, lam):
    return (1.0 - lam) * vm + lam * vf


def solve_couple_values(static: StaticTables, params: ModelParams, settings: SolverSettings | None = None) -> CoupleValueTable:
    """Backward induction O -> M -> Y, and from three children down to none.

    At each child state the only unknown besides already-solved states is the
    state's own value, which appears on the right because the household may
    fail to conceive. Policy iteration on the two-option choice settles it.
    """
    settings = settings or SolverSettings()
    d = params.demo
    beta, kappa = d.beta, d.kappa
    K = MAX_CHILDREN + 1
    nm, nf = static.n_m, static.n_f
    cpl = static.couple
    v = np.stack([cpl["v_m"], cpl["v_f"]])  # (2, nm, nf, K, K)
    lam = cpl["lam"]
    vbar = np.full((2, 3, nm, nf, K, K), np.nan)
    policy = np.zeros((3, nm, nf, K, K), dtype=bool)
    disc = 1.0 - beta * (1.0 - kappa)

    for n1 in range(K):
        vbar[:, OLD, :, :, 0, n1] = v[:, :, :, 0, n1] / disc

    def solve_state(age, n0, n1, delta, next_same, next_aged_keep, next_aged_birth, can_birth):
        """Value and policy at (age, n0, n1) across all wage pairs.

        next_same(n0') -> vbar at same age with n0', next_aged_* -> vbar after aging.
        """
        flow = v[:, :, :, n0, n1]
        keep = (flow + beta * kappa * next_aged_keep) / disc
        if not can_birth:
            return keep, np.zeros((nm, nf), dtype=bool)
        up = next_same(n0 + 1)
        att = (
            flow
            + beta * (1.0 - kappa) * delta * up
            + beta * kappa * (delta * next_aged_birth + (1.0 - delta) * next_aged_keep)
        ) / (1.0 - beta * (1.0 - kappa) * (1.0 - delta))
        w = lam[:, :, n0, n1]
        q_up = (1.0 - kappa) * _lam_weighted(up[0], up[1], w) + kappa * _lam_weighted(next_aged_birth[0], next_aged_birth[1], w)
        pol = np.zeros((nm, nf), dtype=bool)
        for _ in range(settings.policy_max_iter):
            cur = np.where(pol, att, keep)
            q_keep = (1.0 - kappa) * _lam_weighted(cur[0], cur[1], w) + kappa * _lam_weighted(
                next_aged_keep[0], next_aged_keep[1], w
            )
            new = q_up > q_keep
            if np.array_equal(new, pol):
                break
            pol = new
        else:
            raise SolverError(f"childbirth policy did not settle at age {age}, children ({n0}, {n1})")
        return np.where(pol, att, keep), pol

    for total in range(MAX_CHILDREN, -1, -1):
        for n0 in range(total, -1, -1):
            n1 = total - n0
            val, pol = solve_state(
                MIDDLE, n0, n1, d.delta2,
                lambda k, n1=n1: vbar[:, MIDDLE, :, :, k, n1],
                vbar[:, OLD, :, :, 0, total],
                vbar[:, OLD, :, :, 0, min(total + 1, MAX_CHILDREN)],
                total < MAX_CHILDREN,
            )
            vbar[:, MIDDLE, :, :, n0, n1] = val
            policy[MIDDLE, :, :, n0, n1] = pol

    for n0 in range(MAX_CHILDREN, -1, -1):
        val, pol = solve_state(
            YOUNG, n0, 0, d.delta1,
            lambda k: vbar[:, YOUNG, :, :, k, 0],
            vbar[:, MIDDLE, :, :, 0, n0],
            vbar[:, MIDDLE, :, :, 0, min(n0 + 1, MAX_CHILDREN)],
            n0 < MAX_CHILDREN,
        )
        vbar[:, YOUNG, :, :, n0, 0] = val
        policy[YOUNG, :, :, n0, 0] = pol

    annuity = np.array(annuity_factors(beta, kappa))
    return CoupleValueTable(vbar=vbar, annuity=annuity, policy=policy)


def couple_value_residual(cv: CoupleValueTable, static: StaticTables, params: ModelParams, g, age, i, j, n0, n1, b) -> float:
    """Right side minus left side of the couple recursion at one state and ``b``."""
    d = params.demo
    beta, kappa = d.beta, d.kappa
    V = lambda a, k0, k1: cv.value(g, a, i, j, k0, k1, b)  # noqa: E731
    flow = (static.couple["v_m"] if g == 0 else static.couple["v_f"])[i, j, n0, n1] + b
    if age == OLD:
        rhs = flow + beta * (1 - kappa) * V(OLD, 0, n1)
    else:
        delta = d.delta1 if age == YOUNG else d.delta2
        star = n0 + 1 if cv.policy[age, i, j, n0, n1] else n0
        if age == YOUNG:
            rhs = (
                flow
                + beta * (1 - kappa) * (delta * V(YOUNG, star, 0) + (1 - delta) * V(YOUNG, n0, 0))
                + beta * kappa * (delta * V(MIDDLE, 0, star) + (1 - delta) * V(MIDDLE, 0, n0))
            )
        else:
            rhs = (
                flow
                + beta * (1 - kappa) * (delta * V(MIDDLE, star, n1) + (1 - delta) * V(MIDDLE, n0, n1))
                + beta * kappa * (delta * V(OLD, 0, star + n1) + (1 - delta) * V(OLD, 0, n0 + n1))
            )
    return float(rhs - V(age, n0, n1))


# ---------------------------------------------------------------------------
# singles


@dataclass(frozen=True)
class SingleValueTable:
    """``W[age, g, i_w]``: lifetime value of a single (g: 0 men, 1 women)."""

    W: np.ndarray


@dataclass(frozen=True)
class MarriageRule:
    """Marriage iff ``b > bstar[a, i_wm, i_wf]`` for meeting ages a in (Y, M).

    ``bstar_g`` keeps each side's own reservation shock.
    """

    bstar: np.ndarray
    bstar_g: np.ndarray
    prob: np.ndarray

    @classmethod
    def from_probabilities(cls, prob):
        """A rule with given marriage probabilities (thresholds set to nan)."""
        prob = np.asarray(prob, dtype=float)
        nan = np.full(prob.shape, np.nan)
        return cls(bstar=nan, bstar_g=np.stack([nan, nan]), prob=prob)


def bliss_share_negative(params: ModelParams) -> float:
    """Probability that a match-quality draw is negative."""
    return float(norm.cdf((0.0 - params.bliss.mu_b) / params.bliss.sigma_b))


def _thresholds(W, cv: CoupleValueTable, meet_ages=(YOUNG, MIDDLE)):
    """Per-gender reservation shocks on the (i_wm, i_wf) grid for each meeting age."""
    out = []
    for a in meet_ages:
        B = cv.annuity[a]
        bm = (W[a, 0][:, None] - cv.vbar[0, a, :, :, 0, 0]) / B
        bf = (W[a, 1][None, :] - cv.vbar[1, a, :, :, 0, 0]) / B
        out.append(np.stack([bm, bf]))
    return np.stack(out, axis=1)  # (2 genders, 2 ages, nm, nf)


def expected_meeting_value(W, cv: CoupleValueTable, S_hat, params: ModelParams):
    """E over partner wage and ``b`` of the post-meeting value, per age in (Y, M).

    Returns array (2 ages, 2 genders, n) and the thresholds.
    """
    mu, sig = params.bliss.mu_b, params.bliss.sigma_b
    bg = _thresholds(W, cv)
    bstar = np.maximum(bg[0], bg[1])  # (2 ages, nm, nf)
    z = (bstar - mu) / sig
    surv = norm.sf(z)
    dens = norm.pdf(z)
    out = np.empty((2,) + W[:2].shape[1:])
    for k, a in enumerate((YOUNG, MIDDLE)):
        B = cv.annuity[a]
        # E[(V - W) 1{b > b*}] = (vbar + B mu - W)(1 - Phi(z)) + B sigma phi(z)
        gain_m = (cv.vbar[0, a, :, :, 0, 0] + B * mu - W[a, 0][:, None]) * surv[k] + B * sig * dens[k]
        gain_f = (cv.vbar[1, a, :, :, 0, 0] + B * mu - W[a, 1][None, :]) * surv[k] + B * sig * dens[k]
        gain_m = np.where(surv[k] > 0, gain_m, 0.0)
        gain_f = np.where(surv[k] > 0, gain_f, 0.0)
        out[k, 0] = W[a, 0] + gain_m @ S_hat[k, 1]
        out[k, 1] = W[a, 1] + S_hat[k, 0] @ gain_f
    return out, bg, bstar


def single_bellman(W, v_single, cv, S_hat, params: ModelParams):
    """One application of the singles' recursion. ``v_single`` is (2, n)."""
    beta, kappa = params.demo.beta, params.demo.kappa
    E, _, _ = expected_meeting_value(W, cv, S_hat, params)
    new = np.empty_like(W)
    new[OLD] = v_single / (1.0 - beta * (1.0 - kappa))
    new[MIDDLE] = v_single + beta * (1.0 - kappa) * E[1] + beta * kappa * W[OLD]
    new[YOUNG] = v_single + beta * (1.0 - kappa) * E[0] + beta * kappa * E[1]
    return new


def solve_singles(
    cv: CoupleValueTable,
    S_hat,
    params: ModelParams,
    static: StaticTables,
    settings: SolverSettings | None = None,
    W0=None,
) -> tuple[SingleValueTable, MarriageRule, int]:
    """Joint solve of single values and marriage thresholds.

    ``S_hat[k, g]`` is the normalised partner-pool wage distribution of gender
    g at meeting age k (0 = Y, 1 = M). Returns (values, rule, iterations).
    """
    settings = settings or SolverSettings()
    beta, kappa = params.demo.beta, params.demo.kappa
    v_single = static.single_v
    if W0 is None:
        W = np.empty((3,) + v_single.shape)
        W[:] = v_single / (1.0 - beta * (1.0 - kappa))
        W[YOUNG] = W[MIDDLE] = W[OLD]
    else:
        W = np.array(W0, dtype=float)
    damp = settings.w_damping
    history = []
    for it in range(1, settings.w_max_iter + 1):
        new = single_bellman(W, v_single, cv, S_hat, params)
        err = float(np.max(np.abs(new - W)))
        W = damp * W + (1.0 - damp) * new
        history.append(err)
        if err < settings.w_tol:
            break
    else:
        raise SolverError("single value iteration did not converge", history[-20:], W)
    _, bg, bstar = expected_meeting_value(W, cv, S_hat, params)
    prob = norm.sf((bstar - params.bliss.mu_b) / params.bliss.sigma_b)
    return SingleValueTable(W=W), MarriageRule(bstar=bstar, bstar_g=bg, prob=prob), it
