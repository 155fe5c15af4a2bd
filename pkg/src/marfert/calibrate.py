"""Minimum-distance estimation and the counterfactual decomposition."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.stats import qmc

from .dynamics import SolverError
from .equilibrium import MOMENT_LABELS, solve_equilibrium
from .params import DATA_DIR, PARAM_KEYS, ConfigError, ModelParams, SolverSettings, load_params, parse_flat
from .static import InfeasibleError

PENALTY = 1e6
SCALE_FLOOR = 0.01

# failures that make a parameter point "infeasible" rather than a bug
_SOFT_ERRORS = (SolverError, InfeasibleError, RuntimeError, FloatingPointError, np.linalg.LinAlgError)


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MomentTarget:
    name: str
    value: float
    weight: float = 1.0
    source: str = ""

    def __post_init__(self):
        if self.name not in MOMENT_LABELS:
            raise ConfigError(f"unknown moment {self.name!r}")
        if not self.weight > 0:
            raise ConfigError(f"weight of {self.name!r} must be positive")

    @property
    def scale(self):
        return max(abs(self.value), SCALE_FLOOR)


def parse_targets(values: dict) -> list[MomentTarget]:
    """Targets from flat keys: ``name = value``, optional ``name.weight`` and ``name.source``."""
    base = {k: v for k, v in values.items() if "." not in k}
    extra = {k: v for k, v in values.items() if "." in k}
    for k in extra:
        name, attr = k.rsplit(".", 1)
        if name not in base or attr not in ("weight", "source"):
            raise ConfigError(f"unexpected target key {k!r}")
    out = []
    for name, val in base.items():
        if isinstance(val, str):
            raise ConfigError(f"target {name!r} is not a number")
        out.append(MomentTarget(
            name, float(val), float(extra.get(f"{name}.weight", 1.0)), str(extra.get(f"{name}.source", ""))
        ))
    return out


def load_targets(path) -> list[MomentTarget]:
    path = Path(path)
    return parse_targets(parse_flat(path.read_text(), str(path)))


def baseline_targets() -> list[MomentTarget]:
    """Data column of the 2019-2023 fit."""
    return load_targets(DATA_DIR / "targets_2019_2023.txt")


def past_targets() -> list[MomentTarget]:
    """The three 2005-2009 re-calibration targets."""
    return load_targets(DATA_DIR / "targets_2005_2009.txt")


def distance_from_moments(moments, targets) -> float:
    get = moments.__getitem__ if not isinstance(moments, dict) else moments.get
    return float(sum(t.weight * ((get(t.name) - t.value) / t.scale) ** 2 for t in targets))


def moment_residuals(moments, targets) -> pd.DataFrame:
    get = moments.__getitem__ if not isinstance(moments, dict) else moments.get
    rows = []
    for t in targets:
        m = float(get(t.name))
        rows.append((t.name, t.value, m, m - t.value, (m - t.value) / t.scale, t.weight))
    return pd.DataFrame(rows, columns=["moment", "data", "model", "gap", "scaled_gap", "weight"])


def _evaluate(params: ModelParams, targets, settings):
    """(loss, moments or None)."""
    try:
        with np.errstate(all="ignore"):
            eq = solve_equilibrium(params, settings)
    except _SOFT_ERRORS:
        return PENALTY, None
    loss = distance_from_moments(eq.moments, targets)
    if not np.isfinite(loss):
        return PENALTY, None
    return loss, eq.moments


def moment_distance(params: ModelParams, targets, settings: SolverSettings | None = None) -> float:
    """Relative-scale weighted squared distance; solver failure gives ``PENALTY``."""
    if not isinstance(params, ModelParams):
        raise TypeError("params must be ModelParams")
    return _evaluate(params, targets, settings)[0]


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class EstimationSpec:
    base: ModelParams
    free: dict  # name -> (lo, hi)
    targets: tuple
    budget: int = 200
    starts: int = 4
    seed: int = 0
    xatol: float = 1e-5
    fatol: float = 1e-12

    def __post_init__(self):
        for k, (lo, hi) in self.free.items():
            if k not in PARAM_KEYS or k == "n_wage_grid":
                raise ConfigError(f"cannot estimate {k!r}")
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"bounds of {k!r} must be finite and ordered")
        if self.budget < 1 or self.starts < 1:
            raise ConfigError("budget and starts must be positive")


def _parse_bounds(key, val):
    parts = str(val).replace(",", " ").replace(":", " ").split()
    try:
        lo, hi = (float(x) for x in parts)
    except ValueError:
        raise ConfigError(f"{key}: expected 'lo, hi', got {val!r}") from None
    return lo, hi


def load_spec(path, targets_path=None, params_path=None) -> EstimationSpec:
    """Read an estimation spec.

    Keys: ``params`` and ``targets`` (paths relative to the spec file),
    ``free.<param> = lo, hi``, and optional ``budget``, ``starts``, ``seed``,
    ``xatol``, ``fatol``.
    """
    path = Path(path)
    values = parse_flat(path.read_text(), str(path))
    here = path.parent
    known = {"params", "targets", "budget", "starts", "seed", "xatol", "fatol"}
    for k in values:
        if not k.startswith("free.") and k not in known:
            raise ConfigError(f"{path}: unknown key {k!r}")
    p_path = params_path or (here / str(values["params"]) if "params" in values else None)
    t_path = targets_path or (here / str(values["targets"]) if "targets" in values else None)
    if p_path is None or t_path is None:
        raise ConfigError(f"{path}: both 'params' and 'targets' are required")
    free = {k[5:]: _parse_bounds(k, v) for k, v in values.items() if k.startswith("free.")}
    opts = {k: values[k] for k in ("budget", "starts", "seed") if k in values}
    opts.update({k: float(values[k]) for k in ("xatol", "fatol") if k in values})
    return EstimationSpec(load_params(p_path), free, tuple(load_targets(t_path)), **{k: int(v) if k in ("budget", "starts", "seed") else v for k, v in opts.items()})


@dataclass
class EstimationResult:
    params: ModelParams
    loss: float
    residuals: pd.DataFrame
    trace: pd.DataFrame
    n_evals: int
    seconds: float
    converged: bool = True
    notes: list = field(default_factory=list)


def _worker(args):
    flat, targets, settings = args
    return _evaluate(ModelParams.from_flat(flat), targets, settings)


def estimate(spec: EstimationSpec, settings: SolverSettings | None = None, threads: int = 1) -> EstimationResult:
    """Latin-hypercube starts, then a bounded Nelder-Mead polish from the best start."""
    t0 = time.perf_counter()
    names = list(spec.free)
    lo = np.array([spec.free[k][0] for k in names])
    hi = np.array([spec.free[k][1] for k in names])
    targets = list(spec.targets)
    trace = []

    def to_params(x):
        x = np.clip(np.asarray(x, float), 0.0, 1.0)
        return spec.base.with_values(**{k: float(v) for k, v in zip(names, lo + x * (hi - lo))})

    def record(params, loss):
        row = {"eval": len(trace)}
        row.update({k: params.to_flat()[k] for k in names})
        row["loss"] = loss
        trace.append(row)

    def objective(x):
        try:
            params = to_params(x)
        except ValueError:
            return PENALTY
        loss = _evaluate(params, targets, settings)[0]
        record(params, loss)
        return loss

    if not names:
        loss = moment_distance(spec.base, targets, settings)
        record(spec.base, loss)
    else:
        k = len(names)
        n_starts = min(spec.starts, spec.budget)
        starts = qmc.LatinHypercube(d=k, seed=spec.seed).random(n_starts)
        # the base point, if inside the box, is always a candidate start
        x_base = (np.array([spec.base.to_flat()[n] for n in names]) - lo) / (hi - lo)
        if np.all((x_base >= 0) & (x_base <= 1)):
            starts = np.vstack([x_base, starts])[: max(n_starts, 1)]
        cands = [to_params(x) for x in starts]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(_worker, [(p.to_flat(), targets, settings) for p in cands]))
        else:
            results = [_evaluate(p, targets, settings) for p in cands]
        for p, (loss, _) in zip(cands, results):
            record(p, loss)
        losses = np.array([r[0] for r in results])
        best = int(np.argmin(losses))
        remaining = spec.budget - len(trace)
        if remaining > 0:
            minimize(
                objective, starts[best], method="Nelder-Mead", bounds=[(0.0, 1.0)] * k,
                options={"maxfev": remaining, "xatol": spec.xatol, "fatol": spec.fatol, "initial_simplex": _simplex(starts[best])},
            )
    tr = pd.DataFrame(trace)
    feasible = tr[tr["loss"] < PENALTY]
    if feasible.empty:
        raise EstimationError(f"no feasible evaluation in {len(tr)} tries")
    row = feasible.loc[feasible["loss"].idxmin()]
    best_params = spec.base.with_values(**{k: float(row[k]) for k in names})
    # re-evaluate rather than trust the trace
    loss, moments = _evaluate(best_params, targets, settings)
    if moments is None:
        raise EstimationError("best point failed on re-evaluation")
    return EstimationResult(
        best_params, loss, moment_residuals(moments, targets), tr, len(tr), time.perf_counter() - t0,
    )


def _simplex(x0, step=0.05):
    """Initial simplex inside the unit box."""
    k = len(x0)
    pts = [np.asarray(x0, float)]
    for i in range(k):
        p = pts[0].copy()
        p[i] = p[i] + step if p[i] + step <= 1.0 else p[i] - step
        pts.append(p)
    return np.array(pts)


# ---------------------------------------------------------------------------
# decomposition

DEFAULT_FACTORS = {
    "leisure": ("alpha_l",),
    "female_wage": ("mu_wf",),
    "norms": ("theta",),
}


@dataclass(frozen=True)
class DataEndpoints:
    """Observed marriage rate and CFR in the counterfactual and baseline periods."""

    marriage_past: float = 0.928
    marriage_base: float = 0.836
    cfr_past: float = 1.709
    cfr_base: float = 1.454


@dataclass
class Decomposition:
    table: pd.DataFrame
    explained_marriage: float
    explained_cfr: float


class DecompositionError(RuntimeError):
    pass


def _row_outcome(args):
    label, flat, settings = args
    try:
        eq = solve_equilibrium(ModelParams.from_flat(flat), settings)
    except _SOFT_ERRORS as exc:
        raise DecompositionError(f"equilibrium failed in row {label!r}: {exc}") from exc
    return eq.moments.marriage_rate, eq.moments.cfr


def decompose(base: ModelParams, other: ModelParams, factors=None, data: DataEndpoints | None = None,
              settings: SolverSettings | None = None, threads: int = 1) -> Decomposition:
    """Baseline, one row per factor swapped in from ``other``, and all factors together."""
    factors = dict(factors or DEFAULT_FACTORS)
    data = data or DataEndpoints()
    swapped = {k for keys in factors.values() for k in keys}
    stray = sorted(set(base.diff(other)) - swapped)
    if stray:
        raise ConfigError(f"counterfactual differs in keys outside the factors: {', '.join(stray)}")
    of = other.to_flat()
    rows = [("baseline", base)]
    for label, keys in factors.items():
        p = base.with_values(**{k: of[k] for k in keys})
        if set(p.diff(base)) != {k for k in keys if k in base.diff(other)}:
            raise ConfigError(f"row {label!r} must change exactly its own keys {keys}")
        rows.append((label, p))
    rows.append(("all", base.with_values(**{k: of[k] for k in swapped})))
    jobs = [(label, p.to_flat(), settings) for label, p in rows]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            outs = list(ex.map(_row_outcome, jobs))
    else:
        outs = [_row_outcome(j) for j in jobs]
    recs = []
    for (label, p), (mr, cfr) in zip(rows, outs):
        rec = {"row": label}
        changed = set(p.diff(base))
        for keys in factors.values():
            for k in keys:
                rec[k] = int(k in changed)
        rec["marriage_rate"] = mr
        rec["cfr"] = cfr
        recs.append(rec)
    table = pd.DataFrame(recs)
    base_row, all_row = table.iloc[0], table.iloc[-1]
    em = (all_row["marriage_rate"] - base_row["marriage_rate"]) / (data.marriage_past - data.marriage_base)
    ec = (all_row["cfr"] - base_row["cfr"]) / (data.cfr_past - data.cfr_base)
    return Decomposition(table, float(em), float(ec))


def write_decomposition(dec: Decomposition, path) -> None:
    t = dec.table.copy()
    flags = [c for c in t.columns if c not in ("row", "marriage_rate", "cfr")]
    t[flags] = t[flags].astype(int).astype(str)
    extra = pd.DataFrame([
        {"row": "explained_share", **{c: "" for c in flags}, "marriage_rate": dec.explained_marriage, "cfr": dec.explained_cfr}
    ])
    pd.concat([t, extra], ignore_index=True).to_csv(path, index=False)
