"""Within-period allocations of singles and couples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from ._kernels import couple_alloc_jit, couple_alloc_np
from .params import ModelParams, SolverSettings
from .primitives import (
    MAX_CHILDREN,
    ChildState,
    WageGrid,
    bargaining_weight,
    couple_requirement,
    discretize_lognormal,
    domestic_aggregate,
    equivalence_scale,
    utility,
)


class InfeasibleError(ValueError):
    """The domestic requirement cannot be met with positive leisure."""


@dataclass(frozen=True)
class Allocation:
    """Household consumption and per-member time use (fractions of the endowment).

    Singles carry only their own gender's entries; the spouse's are ``nan``.
    """

    c: float
    h_m: float = float("nan")
    l_m: float = float("nan")
    d_m: float = float("nan")
    h_f: float = float("nan")
    l_f: float = float("nan")
    d_f: float = float("nan")


@dataclass(frozen=True)
class IndirectUtility:
    v_m: float = float("nan")
    v_f: float = float("nan")


def _backend(name):
    if name is None:
        name = "numba" if _accel.USE_NUMBA else "numpy"
    if name == "numba":
        return couple_alloc_jit
    if name == "numpy":
        return couple_alloc_np
    raise ValueError(f"unknown backend {name!r}")


# ---------------------------------------------------------------------------
# singles


def single_leisure(w, psi, prefs, iters=80):
    """Optimal leisure of a single with wage(s) ``w`` and requirement ``psi``.

    Solves ``w (w h)^-gc = al l^-gl`` with ``h + l = 1 - psi`` by bisection on
    ``h``; the left side blows up as ``h -> 0`` so ``h > 0`` always.
    """
    w = np.asarray(w, dtype=float)
    T = 1.0 - psi
    gc, gl, al = prefs.gamma_c, prefs.gamma_l, prefs.alpha_l
    lo = np.zeros_like(w)
    hi = np.full_like(w, T)
    for _ in range(iters):
        h = 0.5 * (lo + hi)
        with np.errstate(divide="ignore"):
            excess = w ** (1 - gc) * h ** (-gc) - al * (T - h) ** (-gl)
        lo = np.where(excess > 0, h, lo)
        hi = np.where(excess > 0, hi, h)
    h = 0.5 * (lo + hi)
    return T - h


def solve_single(w: float, gender: str, params: ModelParams):
    if w <= 0:
        raise ValueError("wage must be positive")
    psi = params.home.psi_single_m if gender == "m" else params.home.psi_single_f
    if gender not in ("m", "f"):
        raise ValueError(f"unknown gender {gender!r}")
    l = float(single_leisure(w, psi, params.prefs))
    h = 1.0 - psi - l
    c = w * h
    v = float(utility(c, l, 0, params.prefs))
    if gender == "m":
        return Allocation(c=c, h_m=h, l_m=l, d_m=psi), IndirectUtility(v_m=v)
    return Allocation(c=c, h_f=h, l_f=l, d_f=psi), IndirectUtility(v_f=v)


# ---------------------------------------------------------------------------
# couples


def couple_arrays(w_m, w_f, n0, n1, params: ModelParams, settings: SolverSettings | None = None, backend=None):
    """Vectorised couple solve over matching arrays of states.

    Returns a dict of arrays: lam, l_m, l_f, d_m, d_f, h_m, h_f, c, v_m, v_f, corner.
    """
    settings = settings or SolverSettings()
    w_m, w_f, n0, n1 = np.broadcast_arrays(
        np.asarray(w_m, float), np.asarray(w_f, float), np.asarray(n0, int), np.asarray(n1, int)
    )
    shape = w_m.shape
    wm, wf, a0, a1 = (x.ravel() for x in (w_m, w_f, n0, n1))
    p = params
    lam = bargaining_weight(wm, wf, a0, p.bargaining)
    psi = couple_requirement(a0, a1, p.home).astype(float)
    gam = equivalence_scale(a0, a1, p.demo).astype(float)
    _check_feasible(psi, p)
    kernel = _backend(backend)
    out = kernel(
        np.ascontiguousarray(wm), np.ascontiguousarray(wf), lam, psi, gam,
        p.prefs.gamma_c, p.prefs.gamma_l, p.prefs.alpha_l, p.home.theta, p.home.xi,
        settings.eta_iters, settings.golden_tol,
    )
    lm, lf, dm, df, corner = out.T
    hm = np.maximum(1.0 - dm - lm, 0.0)
    hf = np.maximum(1.0 - df - lf, 0.0)
    c = wm * hm + wf * hf
    if np.any(~np.isfinite(out[:, :4])) or np.any(c <= 0):
        raise RuntimeError("couple allocation solver failed to converge")
    n = a0 + a1
    vm = utility(c / gam, lm, n, p.prefs)
    vf = utility(c / gam, lf, n, p.prefs)
    res = dict(lam=lam, l_m=lm, l_f=lf, d_m=dm, d_f=df, h_m=hm, h_f=hf, c=c, v_m=vm, v_f=vf, corner=corner > 0)
    return {k: np.asarray(v).reshape(shape) for k, v in res.items()}


def _check_feasible(psi, params):
    # the requirement is producible with both inputs below one iff D(1, 1) = 1 > psi
    if np.any(psi >= 1.0):
        raise InfeasibleError(f"domestic requirement {float(np.max(psi))} exceeds the time endowment")


def solve_couple(w_m: float, w_f: float, cs: ChildState, params: ModelParams, settings=None, backend=None):
    """Optimal allocation of one couple: returns (Allocation, IndirectUtility, lambda)."""
    if w_m <= 0 or w_f <= 0:
        raise ValueError("wages must be positive")
    r = couple_arrays(w_m, w_f, cs.n0, cs.n1, params, settings, backend)
    alloc = Allocation(
        c=float(r["c"]), h_m=float(r["h_m"]), l_m=float(r["l_m"]), d_m=float(r["d_m"]),
        h_f=float(r["h_f"]), l_f=float(r["l_f"]), d_f=float(r["d_f"]),
    )
    return alloc, IndirectUtility(v_m=float(r["v_m"]), v_f=float(r["v_f"])), float(r["lam"])


def couple_objective(alloc: Allocation, lam: float, cs: ChildState, params: ModelParams) -> float:
    gam = float(equivalence_scale(cs.n0, cs.n1, params.demo))
    n = cs.total
    return float(
        (1 - lam) * utility(alloc.c / gam, alloc.l_m, n, params.prefs)
        + lam * utility(alloc.c / gam, alloc.l_f, n, params.prefs)
    )


def theta_from_allocation(w_m, w_f, d_m, d_f, xi):
    """Wife's productivity share implied by a cost-minimising domestic split."""
    d_m = np.asarray(d_m, dtype=float)
    d_f = np.asarray(d_f, dtype=float)
    if np.any(d_m <= 0) or np.any(d_f <= 0):
        raise ValueError("domestic inputs must be positive")
    num = w_f * d_f ** (1 - xi)
    return num / (w_m * d_m ** (1 - xi) + num)


def allocation_residuals(alloc: Allocation, w_m, w_f, cs: ChildState, params: ModelParams) -> dict:
    """Constraint violations of a couple allocation (all should be ~0)."""
    psi = float(couple_requirement(cs.n0, cs.n1, params.home))
    return {
        "time_m": alloc.h_m + alloc.l_m + alloc.d_m - 1.0,
        "time_f": alloc.h_f + alloc.l_f + alloc.d_f - 1.0,
        "budget": (alloc.c - (w_m * alloc.h_m + w_f * alloc.h_f)) / alloc.c,
        "domestic": float(domestic_aggregate(alloc.d_m, alloc.d_f, params.home)) - psi,
    }


# ---------------------------------------------------------------------------
# full-grid tables


@dataclass(frozen=True)
class StaticTables:
    """Optimal static choices on the whole state grid.

    Single arrays are indexed ``[gender, i_w]`` (0 = men, 1 = women). Couple
    arrays are indexed ``[i_wm, i_wf, n0, n1]`` with ``nan`` where
    ``n0 + n1 > 3``.
    """

    grid_m: WageGrid
    grid_f: WageGrid
    single_l: np.ndarray
    single_h: np.ndarray
    single_d: np.ndarray
    single_v: np.ndarray
    couple: dict

    @property
    def n_m(self):
        return len(self.grid_m)

    @property
    def n_f(self):
        return len(self.grid_f)


def wage_grids(params: ModelParams) -> tuple[WageGrid, WageGrid]:
    w = params.wages
    return discretize_lognormal(w.mu_m, w.sigma_m, w.n_grid), discretize_lognormal(w.mu_f, w.sigma_f, w.n_grid)


def build_static_tables(params: ModelParams, settings: SolverSettings | None = None, backend=None) -> StaticTables:
    gm, gf = wage_grids(params)
    hp = params.home
    single_l = np.vstack([
        single_leisure(gm.levels, hp.psi_single_m, params.prefs),
        single_leisure(gf.levels, hp.psi_single_f, params.prefs),
    ])
    single_d = np.array([[hp.psi_single_m] * len(gm), [hp.psi_single_f] * len(gf)])
    single_h = 1.0 - single_d - single_l
    levels = np.vstack([gm.levels, gf.levels])
    single_v = utility(levels * single_h, single_l, 0, params.prefs)

    K = MAX_CHILDREN + 1
    WM, WF, N0, N1 = np.meshgrid(gm.levels, gf.levels, np.arange(K), np.arange(K), indexing="ij")
    valid = N0 + N1 <= MAX_CHILDREN
    res = couple_arrays(WM[valid], WF[valid], N0[valid], N1[valid], params, settings, backend)
    couple = {}
    for key, vals in res.items():
        arr = np.full(WM.shape, np.nan if key != "corner" else False, dtype=vals.dtype)
        arr[valid] = vals
        couple[key] = arr
    return StaticTables(gm, gf, single_l, single_h, single_d, single_v, couple)
