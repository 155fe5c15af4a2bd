"""Stationary matching equilibrium, married-state distribution and model moments.

Timing within a period: aging / death shocks and realised births first; then
singles of age Y or M (other than this period's new arrivals) meet a random
same-age single of the other gender and marry if the shock clears both
reservation values; then everybody allocates time. ``SingleDist.mass`` holds
singles who live the period single (after the meeting). The meeting pool at
age Y is ``(1-kappa) S^Y`` and at age M is ``kappa S^Y + (1-kappa) S^M``.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import (
    CoupleValueTable,
    MarriageRule,
    SingleValueTable,
    SolverError,
    solve_couple_values,
    solve_singles,
)
from .params import ModelParams, SolverSettings
from .primitives import MAX_CHILDREN, MIDDLE, OLD, YOUNG
from .static import StaticTables, build_static_tables


@dataclass(frozen=True)
class SingleDist:
    """``mass[age, g, i_w]`` of singles (g: 0 men, 1 women)."""

    mass: np.ndarray

    def pools(self, kappa: float) -> np.ndarray:
        """Meeting-pool masses ``[k, g, i]`` for k = 0 (Y), 1 (M)."""
        S = self.mass
        return np.stack([(1.0 - kappa) * S[YOUNG], kappa * S[YOUNG] + (1.0 - kappa) * S[MIDDLE]])

    def normalized_pools(self, kappa: float) -> np.ndarray:
        return normalize(self.pools(kappa))


@dataclass(frozen=True)
class MarriedDist:
    """``mass[age, i_wm, i_wf, n0, n1]`` of married couples."""

    mass: np.ndarray


def normalize(pools):
    tot = pools.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(tot > 0, pools / np.where(tot > 0, tot, 1.0), 1.0 / pools.shape[-1])
    return out


def meeting_marriage_prob(rule: MarriageRule, S_hat) -> np.ndarray:
    """``m[k, g, i]``: chance a single of gender g, wage i marries at meeting age k."""
    prob = rule.prob
    m = np.empty_like(S_hat)
    for k in range(2):
        m[k, 0] = prob[k] @ S_hat[k, 1]
        m[k, 1] = S_hat[k, 0] @ prob[k]
    return m


def update_single_dist(prev: SingleDist, rule: MarriageRule, F, kappa: float) -> SingleDist:
    """One period of the singles' flow equations.

    ``F[g]`` is the wage law of new arrivals. Partner pools are taken from
    ``prev``.
    """
    S = prev.mass
    pools = prev.pools(kappa)
    m = meeting_marriage_prob(rule, normalize(pools))
    new = np.empty_like(S)
    new[YOUNG] = pools[0] * (1.0 - m[0]) + kappa / 3.0 * F
    new[MIDDLE] = pools[1] * (1.0 - m[1])
    new[OLD] = kappa * S[MIDDLE] + (1.0 - kappa) * S[OLD]
    return SingleDist(new)


def stationary_single_dist(rule: MarriageRule, S_hat, F, kappa: float) -> SingleDist:
    """Fixed point of ``update_single_dist`` when partner pools are held at ``S_hat``."""
    m = meeting_marriage_prob(rule, S_hat)
    S = np.empty((3,) + F.shape)
    S[YOUNG] = kappa / 3.0 * F / (1.0 - (1.0 - kappa) * (1.0 - m[0]))
    S[MIDDLE] = kappa * S[YOUNG] * (1.0 - m[1]) / (1.0 - (1.0 - kappa) * (1.0 - m[1]))
    S[OLD] = S[MIDDLE]
    return SingleDist(S)


# ---------------------------------------------------------------------------
# married distribution

_K = MAX_CHILDREN + 1


def married_states():
    """(age, n0, n1) triples reachable by a couple."""
    out = [(YOUNG, n0, 0) for n0 in range(_K)]
    out += [(MIDDLE, n0, n1) for n0 in range(_K) for n1 in range(_K - n0)]
    out += [(OLD, 0, n1) for n1 in range(_K)]
    return out


def married_transition(policy_ij, params: ModelParams) -> np.ndarray:
    """Column-stochastic (minus deaths) transition among married states for one wage pair.

    ``policy_ij[age, n0, n1]`` is the childbirth policy of that pair.
    """
    states = married_states()
    idx = {s: k for k, s in enumerate(states)}
    kappa = params.demo.kappa
    T = np.zeros((len(states), len(states)))
    for k, (a, n0, n1) in enumerate(states):
        if a == OLD:
            T[idx[(OLD, 0, n1)], k] += 1.0 - kappa
            continue
        delta = params.demo.delta1 if a == YOUNG else params.demo.delta2
        tries = bool(policy_ij[a, n0, n1]) and n0 + n1 < MAX_CHILDREN
        p_birth = delta if tries else 0.0
        for born, pb in ((1, p_birth), (0, 1.0 - p_birth)):
            if pb == 0.0:
                continue
            stay = (a, n0 + born, n1)
            aged = (MIDDLE, 0, n0 + born) if a == YOUNG else (OLD, 0, n0 + n1 + born)
            T[idx[stay], k] += (1.0 - kappa) * pb
            T[idx[aged], k] += kappa * pb
    return T


def solve_married_dist(rule: MarriageRule, single_dist: SingleDist, policy, params: ModelParams) -> MarriedDist:
    """Stationary couple masses: ``(I - T) x = inflow`` for every wage pair."""
    kappa = params.demo.kappa
    pools = single_dist.pools(kappa)
    S_hat = normalize(pools)
    states = married_states()
    nm, nf = rule.prob.shape[1:]
    mass = np.zeros((3, nm, nf, _K, _K))
    iy = states.index((YOUNG, 0, 0))
    im = states.index((MIDDLE, 0, 0))
    # matches counted from the husbands' side of the pool
    new_y = pools[0, 0][:, None] * S_hat[0, 1][None, :] * rule.prob[0]
    new_m = pools[1, 0][:, None] * S_hat[1, 1][None, :] * rule.prob[1]
    n = len(states)
    cache = {}
    for i in range(nm):
        for j in range(nf):
            key = policy[:, i, j].tobytes()
            A = cache.get(key)
            if A is None:
                A = np.eye(n) - married_transition(policy[:, i, j], params)
                cache[key] = A
            rhs = np.zeros(n)
            rhs[iy] = new_y[i, j]
            rhs[im] = new_m[i, j]
            x = np.linalg.solve(A, rhs)
            for k, (a, n0, n1) in enumerate(states):
                mass[a, i, j, n0, n1] = x[k]
    return MarriedDist(np.maximum(mass, 0.0))


# ---------------------------------------------------------------------------
# moments

MOMENT_LABELS = {
    "single_l_m": "Single l_m",
    "single_l_f": "Single l_f",
    "married_l_m_none": "Married l_m, without children",
    "married_l_f_none": "Married l_f, without children",
    "married_l_m_small": "Married l_m, with small children",
    "married_l_f_small": "Married l_f, with small children",
    "married_l_m_older": "Married l_m, with older children",
    "married_l_f_older": "Married l_f, with older children",
    "married_d_m_none": "Married d_m, without children",
    "married_d_f_none": "Married d_f, without children",
    "married_d_m_small": "Married d_m, with small children",
    "married_d_f_small": "Married d_f, with small children",
    "married_d_m_older": "Married d_m, with older children",
    "married_d_f_older": "Married d_f, with older children",
    "share_one_child": "Share of women with one child",
    "share_two_children": "Share of women with two children",
    "share_three_children": "Share of women with three or more children",
    "single_logw_gap": "Mean difference in single's log w_m and log w_f",
    "single_logw_sd_f": "S.D. of single's log w_f",
    "never_married_f": "Share of never-married women",
    "marriage_rate": "Marriage rate (ever married, age O women)",
    "cfr": "Completed fertility of ever-married age O women",
    "wife_domestic_share": "Wife's share of couple domestic labor",
}

# the twenty moments of the baseline fit
FIT_MOMENTS = tuple(list(MOMENT_LABELS)[:20])


@dataclass(frozen=True)
class MomentVector:
    single_l_m: float
    single_l_f: float
    married_l_m_none: float
    married_l_f_none: float
    married_l_m_small: float
    married_l_f_small: float
    married_l_m_older: float
    married_l_f_older: float
    married_d_m_none: float
    married_d_f_none: float
    married_d_m_small: float
    married_d_f_small: float
    married_d_m_older: float
    married_d_f_older: float
    share_one_child: float
    share_two_children: float
    share_three_children: float
    single_logw_gap: float
    single_logw_sd_f: float
    never_married_f: float
    marriage_rate: float
    cfr: float
    wife_domestic_share: float

    def as_dict(self) -> dict:
        return asdict(self)

    def __getitem__(self, name):
        return getattr(self, name)


def _wmean(x, w):
    tot = w.sum()
    return float(np.sum(np.where(w > 0, x, 0.0) * w) / tot) if tot > 0 else float("nan")


def compute_moments(static: StaticTables, single_dist: SingleDist, married_dist: MarriedDist, params: ModelParams) -> MomentVector:
    S = single_dist.mass
    mu = married_dist.mass.sum(axis=0)  # pooled over ages: (nm, nf, K, K)
    cpl = static.couple
    out = {}
    out["single_l_m"] = _wmean(static.single_l[0], S[:, 0].sum(axis=0))
    out["single_l_f"] = _wmean(static.single_l[1], S[:, 1].sum(axis=0))
    n0 = np.arange(_K)[:, None]
    n1 = np.arange(_K)[None, :]
    groups = {
        "none": (n0 + n1 == 0),
        "small": (n0 > 0) & (n0 + n1 <= MAX_CHILDREN),
        "older": (n0 == 0) & (n1 > 0),
    }
    for gname, mask in groups.items():
        w = mu * mask[None, None]
        for var in ("l", "d"):
            for g in ("m", "f"):
                out[f"married_{var}_{g}_{gname}"] = _wmean(cpl[f"{var}_{g}"], w)
    third = 1.0 / 3.0
    old = married_dist.mass[OLD, :, :, 0, :].sum(axis=(0, 1))  # by n1
    old_married = old.sum()
    out["share_one_child"] = float(old[1] / third)
    out["share_two_children"] = float(old[2] / third)
    out["share_three_children"] = float(old[3:].sum() / third)
    logm, logf = static.grid_m.log_levels, static.grid_f.log_levels
    wm = S[YOUNG, 0] + S[MIDDLE, 0]
    wf = S[YOUNG, 1] + S[MIDDLE, 1]
    mean_f = _wmean(logf, wf)
    out["single_logw_gap"] = _wmean(logm, wm) - mean_f
    out["single_logw_sd_f"] = float(np.sqrt(_wmean((logf - mean_f) ** 2, wf)))
    out["never_married_f"] = float(S[OLD, 1].sum() / third)
    out["marriage_rate"] = 1.0 - out["never_married_f"]
    kids = np.arange(_K)
    out["cfr"] = float(np.sum(old * kids) / old_married) if old_married > 0 else 0.0
    dm = np.nansum(np.where(mu > 0, cpl["d_m"], 0.0) * mu)
    df = np.nansum(np.where(mu > 0, cpl["d_f"], 0.0) * mu)
    out["wife_domestic_share"] = float(df / (dm + df)) if dm + df > 0 else float("nan")
    return MomentVector(**out)


# ---------------------------------------------------------------------------
# marriage rate by earnings decile


def decile_rates(earnings, mass, married) -> np.ndarray:
    """Marriage rate by earnings decile from weighted observations.

    Builds the cumulative mass of everyone and of the married along sorted
    earnings, joins the points linearly (through the origin), and differences
    the married curve at the population deciles.
    """
    earnings = np.asarray(earnings, dtype=float)
    mass = np.asarray(mass, dtype=float)
    married = np.asarray(married, dtype=bool)
    keep = mass > 0
    earnings, mass, married = earnings[keep], mass[keep], married[keep]
    total = mass.sum()
    if total <= 0:
        raise ValueError("no observations to build the earnings distribution")
    order = np.argsort(earnings, kind="stable")
    e = earnings[order]
    w = mass[order] / total
    mw = np.where(married[order], w, 0.0)
    uniq, start = np.unique(e, return_index=True)
    H = np.concatenate([[0.0], np.cumsum(np.add.reduceat(w, start))])
    M = np.concatenate([[0.0], np.cumsum(np.add.reduceat(mw, start))])
    H[-1] = 1.0
    q = np.linspace(0.0, 1.0, 11)
    Mq = np.interp(q, H, M)
    return np.diff(Mq) / 0.1


def marriage_rate_by_decile(eq: "EquilibriumSolution") -> dict:
    """Share married among age-O individuals in each earnings decile, by gender."""
    st = eq.static
    S = eq.single_dist.mass[OLD]
    mu_old = eq.married_dist.mass[OLD, :, :, 0, :]  # (nm, nf, K)
    cpl = st.couple
    out = {}
    for g, (levels, h_single, key_h) in enumerate(
        ((st.grid_m.levels, st.single_h[0], "h_m"), (st.grid_f.levels, st.single_h[1], "h_f"))
    ):
        e_s = levels * h_single
        h = cpl[key_h][:, :, 0, :]
        own = levels[:, None, None] if g == 0 else levels[None, :, None]
        e_m = (own * np.where(mu_old > 0, h, 0.0)).ravel()
        earnings = np.concatenate([e_s, e_m])
        mass = np.concatenate([S[g], mu_old.ravel()])
        married = np.concatenate([np.zeros(len(e_s), bool), np.ones(e_m.size, bool)])
        out["m" if g == 0 else "f"] = decile_rates(earnings, mass, married)
    return out


# ---------------------------------------------------------------------------
# equilibrium


@dataclass
class RunReport:
    outer_iterations: int = 0
    inner_iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    seconds: float = 0.0


@dataclass(frozen=True)
class EquilibriumSolution:
    params: ModelParams
    settings: SolverSettings
    static: StaticTables
    couple_values: CoupleValueTable
    single_values: SingleValueTable
    rule: MarriageRule
    S_hat: np.ndarray
    single_dist: SingleDist
    married_dist: MarriedDist
    moments: MomentVector
    report: RunReport


class EquilibriumError(SolverError):
    pass


def solve_equilibrium(params: ModelParams, settings: SolverSettings | None = None, backend=None, static=None) -> EquilibriumSolution:
    """Damped fixed point on the partner-pool distributions."""
    t0 = time.perf_counter()
    settings = settings or SolverSettings()
    if static is None:
        static = build_static_tables(params, settings, backend)
    cv = solve_couple_values(static, params, settings)
    kappa = params.demo.kappa
    F = np.vstack([static.grid_m.probs, static.grid_f.probs])
    S_hat = np.stack([F, F])
    W = None
    report = RunReport()
    for it in range(1, settings.dist_max_iter + 1):
        sv, rule, n_inner = solve_singles(cv, S_hat, params, static, settings, W0=W)
        W = sv.W
        dist = stationary_single_dist(rule, S_hat, F, kappa)
        new_hat = dist.normalized_pools(kappa)
        err = float(np.max(np.abs(new_hat - S_hat)))
        report.inner_iterations.append(n_inner)
        report.residuals.append(err)
        if err < settings.dist_tol:
            S_hat = new_hat
            break
        d = settings.dist_damping
        S_hat = d * S_hat + (1.0 - d) * new_hat
    else:
        raise EquilibriumError("matching equilibrium did not converge", report.residuals[-20:], S_hat)
    sv, rule, _ = solve_singles(cv, S_hat, params, static, settings, W0=W)
    dist = stationary_single_dist(rule, S_hat, F, kappa)
    mdist = solve_married_dist(rule, dist, cv.policy, params)
    moments = compute_moments(static, dist, mdist, params)
    report.outer_iterations = it
    report.seconds = time.perf_counter() - t0
    return EquilibriumSolution(params, settings, static, cv, sv, rule, S_hat, dist, mdist, moments, report)
