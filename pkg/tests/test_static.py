import copy

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from marfert.params import SolverSettings
from marfert.primitives import ChildState, child_states
from marfert.static import (
    InfeasibleError,
    allocation_residuals,
    build_static_tables,
    couple_arrays,
    couple_objective,
    single_leisure,
    solve_couple,
    solve_single,
    theta_from_allocation,
)

from oracles import grid_search_couple


def random_states(params, n, seed):
    rng = np.random.default_rng(seed)
    w = params.wages
    wm = np.exp(rng.normal(w.mu_m, w.sigma_m, n))
    wf = np.exp(rng.normal(w.mu_f, w.sigma_f, n))
    css = child_states()
    cs = [css[k] for k in rng.integers(0, len(css), n)]
    return wm, wf, cs


def test_single_symmetric_foc(base):
    p = base.with_values(gamma_c=2.0, gamma_l=2.0, alpha_l=1.0, psi_single_m=0.0)
    alloc, v = solve_single(1.0, "m", p)
    assert alloc.h_m == pytest.approx(0.5, abs=1e-12)
    assert alloc.l_m == pytest.approx(0.5, abs=1e-12)
    assert alloc.c == pytest.approx(0.5, abs=1e-12)


def test_single_against_dense_grid(base):
    # 10^6-point grid over hours
    p = base
    h = np.linspace(1e-6, 1 - p.home.psi_single_f - 1e-6, 1_000_000)
    w = 1.3
    l = 1 - p.home.psi_single_f - h
    u = (w * h) ** (1 - p.prefs.gamma_c) / (1 - p.prefs.gamma_c) + p.prefs.alpha_l * l ** (1 - p.prefs.gamma_l) / (1 - p.prefs.gamma_l)
    alloc, _ = solve_single(w, "f", p)
    assert alloc.l_f == pytest.approx(l[np.argmax(u)], abs=2e-6)


def test_single_tiny_leisure_weight(base):
    p = base.with_values(alpha_l=1e-12)
    assert single_leisure(1.0, 0.0, p.prefs) < 1e-6


def test_single_errors(base):
    with pytest.raises(ValueError):
        solve_single(0.0, "m", base)
    with pytest.raises(ValueError):
        solve_single(1.0, "x", base)


def test_symmetric_couple(base):
    p = base.with_values(rho0=0.0, rho1=0.0, rho2=0.0, theta=0.5)
    a, v, lam = solve_couple(1.0, 1.0, ChildState(), p)
    assert lam == 0.5
    assert a.h_m == pytest.approx(a.h_f, abs=1e-9)
    assert a.l_m == pytest.approx(a.l_f, abs=1e-9)
    assert a.d_m == pytest.approx(a.d_f, abs=1e-9)


def test_grid_oracle_dominance(base):
    """Solver objective beats a 200^3 grid search at 50 seeded states."""
    wm, wf, cs = random_states(base, 50, seed=11)
    for k in range(50):
        a, _, lam = solve_couple(wm[k], wf[k], cs[k], base)
        ours = couple_objective(a, lam, cs[k], base)
        grid = grid_search_couple(wm[k], wf[k], cs[k].n0, cs[k].n1, base, n=200)
        assert ours >= grid - 1e-9, (k, ours, grid)


def _interior(r):
    return (r["h_m"] > 1e-6) & (r["h_f"] > 1e-6) & ~r["corner"]


def test_leisure_gap_identity(base):
    """log l_m - log l_f is linear in the log wage gap at interior optima."""
    wm, wf, cs = random_states(base, 400, seed=5)
    n0 = np.array([c.n0 for c in cs])
    n1 = np.array([c.n1 for c in cs])
    r = couple_arrays(wm, wf, n0, n1, base)
    ok = _interior(r)
    assert ok.sum() >= 200
    b, gl = base.bargaining, base.prefs.gamma_l
    lhs = np.log(r["l_m"]) - np.log(r["l_f"])
    rhs = b.rho0 / gl + (b.rho1 - 1) / gl * (np.log(wm) - np.log(wf)) + b.rho2 / gl * (n0 > 0)
    idx = np.flatnonzero(ok)[:200]
    assert np.max(np.abs(lhs[idx] - rhs[idx])) < 1e-6


def test_theta_round_trip(base):
    wm, wf, cs = random_states(base, 400, seed=6)
    n0 = np.array([c.n0 for c in cs])
    n1 = np.array([c.n1 for c in cs])
    r = couple_arrays(wm, wf, n0, n1, base)
    idx = np.flatnonzero(_interior(r))[:200]
    assert len(idx) == 200
    est = theta_from_allocation(wm[idx], wf[idx], r["d_m"][idx], r["d_f"][idx], base.home.xi)
    assert np.max(np.abs(est - base.home.theta)) < 1e-8


def test_theta_from_allocation_trivial():
    assert theta_from_allocation(1.0, 1.0, 0.2, 0.2, -0.3) == pytest.approx(0.5)
    assert theta_from_allocation(2.0, 1.0, 0.1, 0.2, 0.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        theta_from_allocation(1.0, 1.0, 0.0, 0.2, -0.3)


def test_constraints_hold(base):
    wm, wf, cs = random_states(base, 60, seed=9)
    for k in range(60):
        a, _, _ = solve_couple(wm[k], wf[k], cs[k], base)
        res = allocation_residuals(a, wm[k], wf[k], cs[k], base)
        assert max(abs(x) for x in res.values()) < 1e-9, res


def test_corner_wife_not_working(base):
    # very low female wage with small children: the wife stays home
    a, _, _ = solve_couple(5.0, 0.05, ChildState(1, 0), base)
    assert a.h_f == 0.0
    assert a.l_f == pytest.approx(1 - a.d_f)
    res = allocation_residuals(a, 5.0, 0.05, ChildState(1, 0), base)
    assert max(abs(x) for x in res.values()) < 1e-9


def test_infeasible_requirement(base):
    p = base.with_values(psi0=0.5, psi1=0.3, psi2=0.19)
    # construction validates, so force the infeasible value in afterwards
    home = copy.copy(p.home)
    object.__setattr__(home, "psi0", 0.7)
    p2 = copy.copy(p)
    object.__setattr__(p2, "home", home)
    with pytest.raises(InfeasibleError):
        solve_couple(1.0, 1.0, ChildState(1, 0), p2)


def test_leisure_rises_with_alpha(base):
    a0, _, _ = solve_couple(1.1, 0.8, ChildState(1, 0), base)
    a1, _, _ = solve_couple(1.1, 0.8, ChildState(1, 0), base.with_values(alpha_l=2.6))
    assert a1.l_m >= a0.l_m and a1.l_f >= a0.l_f


def test_backends_agree(base):
    t1 = build_static_tables(base, backend="numba")
    t2 = build_static_tables(base, backend="numpy")
    lam = t1.couple["lam"]
    obj = [(1 - lam) * t.couple["v_m"] + lam * t.couple["v_f"] for t in (t1, t2)]
    assert np.nanmax(np.abs(obj[0] - obj[1])) < 1e-10
    # at corners the optimum is flat along the frontier, so the argmax only agrees to ~sqrt(eps)
    for k in ("l_m", "l_f", "d_m", "d_f"):
        assert np.nanmax(np.abs(t1.couple[k] - t2.couple[k])) < 1e-6


def test_table_shapes(static, base):
    n = base.wages.n_grid
    assert static.couple["l_m"].shape == (n, n, 4, 4)
    assert np.isnan(static.couple["l_m"][0, 0, 2, 2])
    assert np.all(np.isfinite(static.couple["l_m"][:, :, 1, 2]))
    assert static.single_l.shape == (2, n)


@hsettings(max_examples=40, deadline=None)
@given(
    wm=st.floats(0.05, 8.0), wf=st.floats(0.05, 8.0),
    k=st.integers(0, 9),
    gc=st.floats(1.1, 3.0), gl=st.floats(1.1, 3.0), al=st.floats(0.2, 4.0),
    theta=st.floats(0.1, 0.95), xi=st.floats(-1.5, 0.8),
)
def test_adding_up_random_params(base, wm, wf, k, gc, gl, al, theta, xi):
    p = base.with_values(gamma_c=gc, gamma_l=gl, alpha_l=al, theta=theta, xi=xi)
    cs = child_states()[k]
    a, _, _ = solve_couple(wm, wf, cs, p, SolverSettings())
    res = allocation_residuals(a, wm, wf, cs, p)
    assert max(abs(x) for x in res.values()) < 1e-9
    assert min(a.h_m, a.h_f, a.d_m, a.d_f) >= 0 and a.l_m > 0 and a.l_f > 0
