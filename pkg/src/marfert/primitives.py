"""Utility, bargaining weight, equivalence scale, home production and the wage grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .params import BargainingParams, Demography, HomeProduction, Preferences

MAX_CHILDREN = 3
HOURS_PER_WEEK = 112.0  # 16 waking hours x 7 days

# age stages
YOUNG, MIDDLE, OLD = 0, 1, 2
AGES = ("Y", "M", "O")


@dataclass(frozen=True)
class ChildState:
    n0: int = 0
    n1: int = 0

    def __post_init__(self):
        if self.n0 < 0 or self.n1 < 0 or self.n0 + self.n1 > MAX_CHILDREN:
            raise ValueError(f"invalid child counts ({self.n0}, {self.n1})")

    @property
    def total(self) -> int:
        return self.n0 + self.n1

    def valid_at(self, age: int) -> bool:
        if age == YOUNG:
            return self.n1 == 0
        if age == OLD:
            return self.n0 == 0
        return True


def child_states(age: int | None = None) -> list[ChildState]:
    """All child states, optionally restricted to those reachable at ``age``."""
    out = [ChildState(a, b) for a in range(MAX_CHILDREN + 1) for b in range(MAX_CHILDREN + 1 - a)]
    if age is None:
        return out
    return [cs for cs in out if cs.valid_at(age)]


def utility(c, l, n, prefs: Preferences):
    """Period utility of consumption ``c``, leisure ``l`` and ``n`` children."""
    c = np.asarray(c, dtype=float)
    l = np.asarray(l, dtype=float)
    if np.any(c <= 0) or np.any(l <= 0):
        raise ValueError("utility requires positive consumption and leisure")
    p = prefs
    return (
        c ** (1 - p.gamma_c) / (1 - p.gamma_c)
        + p.alpha_l * l ** (1 - p.gamma_l) / (1 - p.gamma_l)
        + p.alpha_n * ((1.0 + np.asarray(n, dtype=float)) ** (1 - p.gamma_n) - 1) / (1 - p.gamma_n)
    )


def bargaining_weight(w_m, w_f, n0, b: BargainingParams):
    """Wife's Pareto weight, a logistic function of the log wage gap."""
    w_m = np.asarray(w_m, dtype=float)
    w_f = np.asarray(w_f, dtype=float)
    if np.any(w_m <= 0) or np.any(w_f <= 0):
        raise ValueError("wages must be positive")
    small = (np.asarray(n0) > 0).astype(float)
    x = b.rho0 + b.rho1 * (np.log(w_m) - np.log(w_f)) + b.rho2 * small
    return 1.0 / (1.0 + np.exp(x))


def equivalence_scale(n0, n1, d: Demography):
    return 1.0 + d.chi0 + d.chi1 * (np.asarray(n0) + np.asarray(n1))


def domestic_requirement(marital: str, gender: str, cs: ChildState, hp: HomeProduction) -> float:
    if marital == "single":
        if gender == "m":
            return hp.psi_single_m
        if gender == "f":
            return hp.psi_single_f
        raise ValueError(f"unknown gender {gender!r}")
    if marital != "married":
        raise ValueError(f"unknown marital status {marital!r}")
    return hp.psi0 + hp.psi1 * (cs.n0 > 0) + hp.psi2 * (cs.n0 + cs.n1 > 0)


def couple_requirement(n0, n1, hp: HomeProduction):
    """Vectorised couple requirement over child-count arrays."""
    n0 = np.asarray(n0)
    n1 = np.asarray(n1)
    return hp.psi0 + hp.psi1 * (n0 > 0) + hp.psi2 * (n0 + n1 > 0)


def domestic_aggregate(d_m, d_f, hp: HomeProduction):
    """CES combination of the spouses' domestic hours.

    With a complementary technology (xi <= 0) a zero input gives zero output.
    xi == 0 is the Cobb-Douglas limit.
    """
    d_m = np.asarray(d_m, dtype=float)
    d_f = np.asarray(d_f, dtype=float)
    th, xi = hp.theta, hp.xi
    with np.errstate(divide="ignore", invalid="ignore"):
        if xi == 0.0:
            out = d_m ** (1 - th) * d_f**th
        else:
            zero = (d_m <= 0) | (d_f <= 0)
            dm = np.where(zero, 1.0, d_m)
            df = np.where(zero, 1.0, d_f)
            # expm1/log1p form keeps precision for xi near zero
            s = (1 - th) * np.expm1(xi * np.log(dm)) + th * np.expm1(xi * np.log(df))
            inner = np.exp(np.log1p(s) / xi)
            if xi < 0:
                edge = 0.0
            else:
                edge = ((1 - th) * np.maximum(d_m, 0) ** xi + th * np.maximum(d_f, 0) ** xi) ** (1 / xi)
            out = np.where(zero, edge, inner)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class WageGrid:
    levels: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.levels) <= 0) or np.any(self.levels <= 0):
            raise ValueError("wage levels must be positive and strictly increasing")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1) > 1e-12:
            raise ValueError("wage probabilities must be a distribution")

    def __len__(self):
        return len(self.levels)

    @property
    def log_levels(self):
        return np.log(self.levels)


def discretize_lognormal(mu: float, sigma: float, n: int) -> WageGrid:
    """Equiprobable discretisation of ``log w ~ N(mu, sigma)``.

    The normal is cut into ``n`` equal-mass bins; each level is the exponential
    of the conditional mean of the log wage inside its bin.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n < 1:
        raise ValueError("need at least one grid point")
    edges = norm.ppf(np.linspace(0.0, 1.0, n + 1))
    pdf = norm.pdf(edges)
    # E[z | a < z < b] = (phi(a) - phi(b)) / (1/n)
    zbar = n * (pdf[:-1] - pdf[1:])
    probs = np.full(n, 1.0 / n)
    return WageGrid(levels=np.exp(mu + sigma * zbar), probs=probs)
