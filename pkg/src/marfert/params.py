"""Model parameters and the flat ``key = value`` parameter file format."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed or incomplete parameter files."""


@dataclass(frozen=True)
class Preferences:
    gamma_c: float
    gamma_l: float
    gamma_n: float
    alpha_l: float
    alpha_n: float

    def __post_init__(self):
        for name in ("gamma_c", "gamma_l", "gamma_n"):
            g = getattr(self, name)
            if not g > 0:
                raise ValueError(f"{name} must be positive, got {g}")
            if g == 1.0:
                raise ValueError(f"{name} = 1 (log utility) is not supported")
        if self.alpha_l < 0 or self.alpha_n < 0:
            raise ValueError("utility weights must be nonnegative")


@dataclass(frozen=True)
class BargainingParams:
    rho0: float
    rho1: float
    rho2: float

    def __post_init__(self):
        if not all(math.isfinite(r) for r in (self.rho0, self.rho1, self.rho2)):
            raise ValueError("bargaining coefficients must be finite")


@dataclass(frozen=True)
class HomeProduction:
    theta: float
    xi: float
    psi0: float
    psi1: float
    psi2: float
    psi_single_m: float
    psi_single_f: float

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.xi < 1:
            raise ValueError(f"xi must be < 1, got {self.xi}")
        psis = (self.psi0, self.psi1, self.psi2, self.psi_single_m, self.psi_single_f)
        if min(psis) < 0:
            raise ValueError("domestic requirements must be nonnegative")
        if self.psi0 + self.psi1 + self.psi2 >= 1 or max(self.psi_single_m, self.psi_single_f) >= 1:
            raise ValueError("domestic requirements must leave time for leisure")


@dataclass(frozen=True)
class WageDistParams:
    mu_m: float
    sigma_m: float
    mu_f: float
    sigma_f: float
    n_grid: int = 15

    def __post_init__(self):
        if self.sigma_m <= 0 or self.sigma_f <= 0:
            raise ValueError("log-wage standard deviations must be positive")
        if self.n_grid < 2:
            raise ValueError("wage grid needs at least two points")


@dataclass(frozen=True)
class BlissParams:
    mu_b: float
    sigma_b: float

    def __post_init__(self):
        if self.sigma_b <= 0:
            raise ValueError("sigma_b must be positive")


@dataclass(frozen=True)
class Demography:
    beta: float
    kappa: float
    delta1: float
    delta2: float
    chi0: float
    chi1: float

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
        if not (0 <= self.delta1 <= 1 and 0 <= self.delta2 <= 1):
            raise ValueError("birth probabilities must lie in [0, 1]")


# flat key -> (group attribute, field name)
_KEYMAP = {
    "gamma_c": ("prefs", "gamma_c"),
    "gamma_l": ("prefs", "gamma_l"),
    "gamma_n": ("prefs", "gamma_n"),
    "alpha_l": ("prefs", "alpha_l"),
    "alpha_n": ("prefs", "alpha_n"),
    "rho0": ("bargaining", "rho0"),
    "rho1": ("bargaining", "rho1"),
    "rho2": ("bargaining", "rho2"),
    "mu_wm": ("wages", "mu_m"),
    "sigma_wm": ("wages", "sigma_m"),
    "mu_wf": ("wages", "mu_f"),
    "sigma_wf": ("wages", "sigma_f"),
    "n_wage_grid": ("wages", "n_grid"),
    "mu_b": ("bliss", "mu_b"),
    "sigma_b": ("bliss", "sigma_b"),
    "theta": ("home", "theta"),
    "xi": ("home", "xi"),
    "psi0": ("home", "psi0"),
    "psi1": ("home", "psi1"),
    "psi2": ("home", "psi2"),
    "psi_single_m": ("home", "psi_single_m"),
    "psi_single_f": ("home", "psi_single_f"),
    "beta": ("demo", "beta"),
    "kappa": ("demo", "kappa"),
    "delta1": ("demo", "delta1"),
    "delta2": ("demo", "delta2"),
    "chi0": ("demo", "chi0"),
    "chi1": ("demo", "chi1"),
}

PARAM_KEYS = tuple(_KEYMAP)

_GROUPS = {
    "prefs": Preferences,
    "bargaining": BargainingParams,
    "home": HomeProduction,
    "wages": WageDistParams,
    "bliss": BlissParams,
    "demo": Demography,
}


@dataclass(frozen=True)
class ModelParams:
    """Every structural parameter of the model, grouped as in the model text."""

    prefs: Preferences
    bargaining: BargainingParams
    home: HomeProduction
    wages: WageDistParams
    bliss: BlissParams
    demo: Demography

    @classmethod
    def from_flat(cls, values: dict) -> "ModelParams":
        missing = [k for k in PARAM_KEYS if k not in values]
        if missing:
            raise ConfigError(f"missing parameter key(s): {', '.join(missing)}")
        unknown = [k for k in values if k not in _KEYMAP]
        if unknown:
            raise ConfigError(f"unknown parameter key(s): {', '.join(unknown)}")
        grouped: dict[str, dict] = {g: {} for g in _GROUPS}
        for key, (group, name) in _KEYMAP.items():
            val = values[key]
            grouped[group][name] = int(val) if key == "n_wage_grid" else float(val)
        return cls(**{g: _GROUPS[g](**kw) for g, kw in grouped.items()})

    def to_flat(self) -> dict:
        return {key: getattr(getattr(self, group), name) for key, (group, name) in _KEYMAP.items()}

    def with_values(self, **updates) -> "ModelParams":
        """Copy with some flat keys replaced, e.g. ``p.with_values(alpha_l=1.9)``."""
        flat = self.to_flat()
        for k in updates:
            if k not in _KEYMAP:
                raise KeyError(k)
        flat.update(updates)
        return ModelParams.from_flat(flat)

    def diff(self, other: "ModelParams") -> dict:
        a, b = self.to_flat(), other.to_flat()
        return {k: (a[k], b[k]) for k in PARAM_KEYS if a[k] != b[k]}


@dataclass(frozen=True)
class SolverSettings:
    """Numerical knobs. None of these are economic parameters."""

    eta_iters: int = 64
    golden_tol: float = 1e-10
    w_damping: float = 0.5
    w_tol: float = 1e-10
    w_max_iter: int = 10_000
    dist_damping: float = 0.5
    dist_tol: float = 1e-9
    dist_max_iter: int = 5_000
    policy_max_iter: int = 50

    def with_overrides(self, **kw) -> "SolverSettings":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


# ----------------------------------------------------------------------------
# flat text format


def parse_flat(text: str, source: str = "<string>") -> dict:
    """Parse ``key = value`` lines. ``#`` starts a comment; blank lines are skipped.

    Values are returned as floats, except integers written without a decimal
    point, which stay ints. Anything that does not parse as a number is kept
    as a stripped string (used by estimation specs).
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = _coerce(val)
    return out


def _coerce(val: str):
    try:
        return int(val)
    except ValueError:
        pass
    try:
        return float(val)
    except ValueError:
        return val


def format_flat(values: dict, header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    for k, v in values.items():
        lines.append(f"{k} = {repr(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def load_params(path) -> ModelParams:
    path = Path(path)
    values = parse_flat(path.read_text(), str(path))
    try:
        return ModelParams.from_flat(values)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save_params(params: ModelParams, path, header: str | None = None) -> None:
    Path(path).write_text(format_flat(params.to_flat(), header))


DATA_DIR = Path(__file__).parent / "data"


def baseline_params() -> ModelParams:
    """Parameters for the 2019-2023 economy."""
    return load_params(DATA_DIR / "baseline_2019_2023.txt")


def past_params() -> ModelParams:
    """Baseline with the three 2005-2009 values swapped in."""
    return load_params(DATA_DIR / "past_2005_2009.txt")
