"""Agent panels from a solved equilibrium and the child-penalty event study.

Men and women live in two fixed-size arrays of slots; a slot is refilled by a
new young single when its occupant dies. Each period runs the same phases as
the equilibrium flows: shocks (aging, death, realised births), then meetings
among same-age singles who did not arrive this period, then time use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .equilibrium import EquilibriumSolution, decile_rates
from .primitives import HOURS_PER_WEEK, MAX_CHILDREN, MIDDLE, OLD, YOUNG

PANEL_COLUMNS = (
    "agent_id", "period", "gender", "age_stage", "wage", "wage_index", "married",
    "spouse_id", "n0", "n1", "event_time", "h", "l", "d",
)
AGE_LABELS = np.array(["Y", "M", "O"])
GENDERS = ("m", "f")

# RNG phases inside a period
_SHOCKS, _MEET, _ARRIVALS = 0, 1, 2


def _rng(seed, t, phase):
    return np.random.default_rng([seed, t, phase])


class _Population:
    """Slot arrays for one simulation run."""

    def __init__(self, n, probs_m, probs_f, rng):
        self.n = n
        self.probs = (probs_m, probs_f)
        self.next_id = 0
        self.agent_id = np.zeros((2, n), dtype=np.int64)
        self.age = np.zeros((2, n), dtype=np.int8)
        self.wage = np.zeros((2, n), dtype=np.int64)
        self.spouse = np.full((2, n), -1, dtype=np.int64)
        self.n0 = np.zeros((2, n), dtype=np.int64)
        self.n1 = np.zeros((2, n), dtype=np.int64)
        self.first_birth = np.full((2, n), -1, dtype=np.int64)
        self.arrived = np.zeros((2, n), dtype=bool)
        for g in range(2):
            self.refill(g, np.arange(n), rng)

    def refill(self, g, slots, rng):
        k = len(slots)
        if k == 0:
            return
        self.agent_id[g, slots] = self.next_id + np.arange(k)
        self.next_id += k
        p = self.probs[g]
        self.wage[g, slots] = rng.choice(len(p), size=k, p=p)
        self.age[g, slots] = YOUNG
        self.spouse[g, slots] = -1
        self.n0[g, slots] = 0
        self.n1[g, slots] = 0
        self.first_birth[g, slots] = -1
        self.arrived[g, slots] = True


def simulate_panel(eq: EquilibriumSolution, n_agents: int, n_periods: int, seed: int, burn_in: int = 0) -> pd.DataFrame:
    """Simulate ``n_agents`` slots per gender and record ``n_periods`` periods.

    All agents start as young singles with grid wages drawn from the wage law.
    With ``burn_in = 0`` the panel follows that initial cohort (plus
    replacements); a long burn-in gives a stationary cross-section.
    """
    if n_agents < 1 or n_periods < 1 or burn_in < 0:
        raise ValueError("n_agents and n_periods must be positive, burn_in nonnegative")
    p = eq.params
    kappa, d1, d2 = p.demo.kappa, p.demo.delta1, p.demo.delta2
    st = eq.static
    pop = _Population(n_agents, st.grid_m.probs, st.grid_f.probs, _rng(seed, 0, _ARRIVALS))
    levels = (st.grid_m.levels, st.grid_f.levels)
    frames = []
    for t in range(burn_in + n_periods):
        if t > 0:
            _shocks(pop, eq, kappa, d1, d2, t, _rng(seed, t, _SHOCKS), _rng(seed, t, _ARRIVALS))
            _meet(pop, eq, _rng(seed, t, _MEET))
        if t >= burn_in:
            frames.append(_record(pop, st, levels, t, burn_in))
        pop.arrived[:] = False
    panel = fill_event_times(pd.concat(frames, ignore_index=True))
    return panel.loc[:, list(PANEL_COLUMNS)]


def _shocks(pop, eq, kappa, d1, d2, t, rng, rng_new):
    n = pop.n
    u = rng.random((3, n))  # per man-slot: aging/death, birth, single woman aging/death
    men_single = pop.spouse[0] < 0
    women_single = pop.spouse[1] < 0
    dead_m, dead_f = [], []

    # couples, indexed by the husband's slot
    hus = np.flatnonzero(~men_single)
    wif = pop.spouse[0, hus]
    age = pop.age[0, hus]
    n0, n1 = pop.n0[0, hus], pop.n1[0, hus]
    pol = eq.couple_values.policy[age, pop.wage[0, hus], pop.wage[1, wif], n0, n1]
    delta = np.where(age == YOUNG, d1, np.where(age == MIDDLE, d2, 0.0))
    tries = pol & (age < OLD) & (n0 + n1 < MAX_CHILDREN)
    born = (tries & (u[1, hus] < delta)).astype(np.int64)
    shock = u[0, hus] < kappa
    first = born.astype(bool) & (n0 + n1 == 0)
    pop.first_birth[0, hus[first]] = t
    pop.first_birth[1, wif[first]] = t
    new_n0 = n0 + born
    new_n1 = n1.copy()
    aged_y = shock & (age == YOUNG)
    aged_m = shock & (age == MIDDLE)
    dies = shock & (age == OLD)
    new_n1 = np.where(aged_y, new_n0, np.where(aged_m, new_n0 + n1, new_n1))
    new_n0 = np.where(aged_y | aged_m, 0, new_n0)
    new_age = age + (aged_y | aged_m)
    for g, slots in ((0, hus), (1, wif)):
        pop.n0[g, slots] = new_n0
        pop.n1[g, slots] = new_n1
        pop.age[g, slots] = new_age
    dead_m.append(hus[dies])
    dead_f.append(wif[dies])

    # singles
    for g, single, draws in ((0, men_single, u[0]), (1, women_single, u[2])):
        s = np.flatnonzero(single)
        hit = draws[s] < kappa
        old = pop.age[g, s] == OLD
        (dead_m if g == 0 else dead_f).append(s[hit & old])
        grow = s[hit & ~old]
        pop.age[g, grow] += 1
    for g, dead in ((0, np.concatenate(dead_m)), (1, np.concatenate(dead_f))):
        pop.refill(g, np.sort(dead), rng_new)


def _meet(pop, eq, rng):
    rule = eq.rule
    mu_b, sigma_b = eq.params.bliss.mu_b, eq.params.bliss.sigma_b
    for k, a in enumerate((YOUNG, MIDDLE)):
        pools = [
            np.flatnonzero((pop.spouse[g] < 0) & (pop.age[g] == a) & ~pop.arrived[g]) for g in range(2)
        ]
        men = rng.permutation(pools[0])
        women = rng.permutation(pools[1])
        m = min(len(men), len(women))
        men, women = men[:m], women[:m]
        b = mu_b + sigma_b * rng.standard_normal(m)
        marry = b > rule.bstar[k, pop.wage[0, men], pop.wage[1, women]]
        men, women = men[marry], women[marry]
        pop.spouse[0, men] = women
        pop.spouse[1, women] = men


def _record(pop, st, levels, t, burn_in):
    cpl = st.couple
    out = []
    for g in range(2):
        married = pop.spouse[g] >= 0
        if g == 0:
            wm, wf = pop.wage[0], np.where(married, pop.wage[1, np.maximum(pop.spouse[0], 0)], 0)
        else:
            wf, wm = pop.wage[1], np.where(married, pop.wage[0, np.maximum(pop.spouse[1], 0)], 0)
        n0, n1 = pop.n0[g], pop.n1[g]
        key = "m" if g == 0 else "f"
        own = pop.wage[g]
        l = np.where(married, cpl[f"l_{key}"][wm, wf, n0, n1], st.single_l[g, own])
        d = np.where(married, cpl[f"d_{key}"][wm, wf, n0, n1], st.single_d[g, own])
        h = 1.0 - l - d
        spouse_id = np.where(married, pop.agent_id[1 - g, np.maximum(pop.spouse[g], 0)], -1)
        fb = pop.first_birth[g]
        event = np.where(fb >= burn_in, t - fb, np.nan)
        # event time is only defined once the first birth has happened
        event = np.where(fb >= 0, event, np.nan)
        out.append(pd.DataFrame({
            "agent_id": pop.agent_id[g],
            "period": t - burn_in,
            "gender": GENDERS[g],
            "age_stage": AGE_LABELS[pop.age[g]],
            "wage": levels[g][own],
            "wage_index": own,
            "married": married.astype(np.int64),
            "spouse_id": spouse_id,
            "n0": n0,
            "n1": n1,
            "event_time": event,
            "h": h * HOURS_PER_WEEK,
            "l": l * HOURS_PER_WEEK,
            "d": d * HOURS_PER_WEEK,
        }))
    return pd.concat(out, ignore_index=True)


def fill_event_times(panel: pd.DataFrame) -> pd.DataFrame:
    """Back-fill ``event_time`` to the periods before an observed first birth."""
    out = panel.copy()
    fb = (out["period"] - out["event_time"]).groupby(out["agent_id"]).transform("min")
    out["event_time"] = out["period"] - fb
    return out


def write_panel(panel: pd.DataFrame, path) -> None:
    panel.loc[:, list(PANEL_COLUMNS)].to_csv(path, index=False)


def read_panel(path) -> pd.DataFrame:
    panel = pd.read_csv(path)
    missing = [c for c in PANEL_COLUMNS if c not in panel.columns]
    if missing:
        raise ValueError(f"panel file lacks columns: {', '.join(missing)}")
    return panel


# ---------------------------------------------------------------------------
# panel moments


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n == 0:
        return float("nan"), float("nan"), 0
    se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return float(x.mean()), se, n


def _ratio_se(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    r = x.mean() / y.mean()
    se = float(np.sqrt(np.var(x - r * y, ddof=1) / n) / abs(y.mean())) if n > 1 else float("nan")
    return float(r), se, n


def panel_moments(panel: pd.DataFrame, period=None) -> pd.DataFrame:
    """Model moments from one simulated cross-section, with standard errors.

    Uses the last period unless ``period`` is given.
    """
    if period is None:
        period = int(panel["period"].max())
    cs = panel[panel["period"] == period]
    men, women = cs[cs["gender"] == "m"], cs[cs["gender"] == "f"]
    rows = {}
    hours = float(HOURS_PER_WEEK)
    for key, sub in (("m", men), ("f", women)):
        s = sub[sub["married"] == 0]
        rows[f"single_l_{key}"] = _mean_se(s["l"] / hours)
    groups = {
        "none": lambda df: (df["n0"] + df["n1"]) == 0,
        "small": lambda df: df["n0"] > 0,
        "older": lambda df: (df["n0"] == 0) & (df["n1"] > 0),
    }
    for gname, sel in groups.items():
        for var in ("l", "d"):
            for key, sub in (("m", men), ("f", women)):
                m = sub[(sub["married"] == 1) & sel(sub)]
                rows[f"married_{var}_{key}_{gname}"] = _mean_se(m[var] / hours)
    old = women[women["age_stage"] == "O"]
    kids = (old["n0"] + old["n1"]).to_numpy()
    for k, name in ((1, "share_one_child"), (2, "share_two_children")):
        rows[name] = _mean_se(kids == k)
    rows["share_three_children"] = _mean_se(kids >= 3)
    sm = men[(men["married"] == 0) & (men["age_stage"] != "O")]
    sf = women[(women["married"] == 0) & (women["age_stage"] != "O")]
    lm, lf = np.log(sm["wage"].to_numpy()), np.log(sf["wage"].to_numpy())
    gap = lm.mean() - lf.mean()
    rows["single_logw_gap"] = (float(gap), float(np.sqrt(lm.var(ddof=1) / len(lm) + lf.var(ddof=1) / len(lf))), len(lm) + len(lf))
    sd = lf.std()
    mu4 = np.mean((lf - lf.mean()) ** 4)
    rows["single_logw_sd_f"] = (float(sd), float(np.sqrt(max(mu4 - sd**4, 0.0) / (4 * sd**2 * len(lf)))), len(lf))
    never = (old["married"] == 0).to_numpy()
    rows["never_married_f"] = _mean_se(never)
    rows["marriage_rate"] = _mean_se(~never)
    rows["cfr"] = _mean_se(kids[~never])
    wives = women[women["married"] == 1]
    hd = men.set_index("agent_id")["d"]
    rows["wife_domestic_share"] = _ratio_se(wives["d"].to_numpy(), wives["d"].to_numpy() + hd.loc[wives["spouse_id"]].to_numpy())
    return pd.DataFrame(
        [(k, v[0], v[1], v[2]) for k, v in rows.items()], columns=["moment", "value", "se", "n"]
    )


def decile_rates_from_panel(panel: pd.DataFrame, period=None) -> dict:
    """Marriage rate by earnings decile among age-O agents of one cross-section."""
    if period is None:
        period = int(panel["period"].max())
    cs = panel[(panel["period"] == period) & (panel["age_stage"] == "O")]
    out = {}
    for g in GENDERS:
        sub = cs[cs["gender"] == g]
        if len(sub) < 10:
            raise ValueError(f"too few age-O observations for gender {g!r} to fill ten deciles")
        earnings = sub["wage"].to_numpy() * sub["h"].to_numpy() / HOURS_PER_WEEK
        out[g] = decile_rates(earnings, np.ones(len(sub)), sub["married"].to_numpy() == 1)
    return out


# ---------------------------------------------------------------------------
# event study


class EventStudyError(ValueError):
    pass


@dataclass(frozen=True)
class EventStudyResult:
    """``table`` has columns outcome, gender, q, beta; ``reference`` is pinned at 0."""

    table: pd.DataFrame
    window: tuple
    reference: int = -2

    def beta(self, outcome, gender, q) -> float:
        t = self.table
        row = t[(t["outcome"] == outcome) & (t["gender"] == gender) & (t["q"] == q)]
        if row.empty:
            raise KeyError((outcome, gender, q))
        return float(row["beta"].iloc[0])


def _demean(x, codes, n_groups):
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    if x.ndim == 1:
        return x - (np.bincount(codes, weights=x, minlength=n_groups) / counts)[codes]
    sums = np.zeros((n_groups, x.shape[1]))
    np.add.at(sums, codes, x)
    return x - (sums / counts[:, None])[codes]


def event_study(panel: pd.DataFrame, window=(-5, 10), outcomes=("h", "d", "l"), reference=-2) -> EventStudyResult:
    """Two-way fixed-effects event study around the first birth, by gender.

    Agents enter if their first birth is observed in the panel or if they have
    no children throughout. Observations with event time outside ``window``
    keep zero event dummies.
    """
    q_min, q_max = int(window[0]), int(window[1])
    if not q_min <= reference <= q_max:
        raise ValueError("reference period must lie inside the window")
    qs = [q for q in range(q_min, q_max + 1) if q != reference]
    panel = fill_event_times(panel)
    kids = (panel["n0"] + panel["n1"]).groupby(panel["agent_id"]).transform("max")
    keep = panel["event_time"].notna() | (kids == 0)
    panel = panel[keep]
    rows = []
    for g in GENDERS:
        sub = panel[panel["gender"] == g]
        if sub.empty:
            raise EventStudyError(f"no observations for gender {g!r}")
        codes, uniq = pd.factorize(sub["agent_id"], sort=True)
        periods = np.sort(sub["period"].unique())
        et = sub["event_time"].to_numpy()
        cols, names = [], []
        for q in qs:
            cols.append((et == q).astype(float))
            names.append(f"event[q={q}]")
        per = sub["period"].to_numpy()
        for t in periods[1:]:
            cols.append((per == t).astype(float))
            names.append(f"period[{t}]")
        X = _demean(np.column_stack(cols), codes, len(uniq))
        XtX = X.T @ X
        _check_rank(X, XtX, names)
        for y_name in outcomes:
            y = _demean(sub[y_name].to_numpy(dtype=float), codes, len(uniq))
            beta = np.linalg.solve(XtX, X.T @ y)
            coef = dict(zip(qs, beta[: len(qs)]))
            coef[reference] = 0.0
            for q in range(q_min, q_max + 1):
                rows.append((y_name, g, q, float(coef[q])))
    table = pd.DataFrame(rows, columns=["outcome", "gender", "q", "beta"])
    return EventStudyResult(table, (q_min, q_max), reference)


def _check_rank(X, XtX, names):
    from scipy.linalg import qr

    _, r, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(X.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        bad = sorted(names[k] for k in piv[rank:])
        raise EventStudyError("singular event-study design; collinear columns: " + ", ".join(bad))


def write_event_study(result: EventStudyResult, path) -> None:
    result.table.to_csv(path, index=False)
