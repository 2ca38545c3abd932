"""Cashflows, fair spreads and risk statistics of CDX tranches.

Returns are seen from the protection seller (risk buyer) of a funded
tranche held to maturity.  Per unit of time t = 1..T the buyer earns
``N_t (S + i_t)`` on the remaining tranche notional and ``i_t`` on the
recovered part of the written-down notional; at maturity the remaining
notional and the recovery on the written-down notional are paid back::

    R = -N0 + u N0 + sum_t r_t [N_t (S + i_t) + rec (N0 - N_t) i_t]
                   + r_T [N_T + rec (N0 - N_T)]

``i_t`` is the decimal risk-free rate of period t, ``r_t`` the discount
factor to time 0 and ``u`` an optional upfront fraction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CurveTooShort, DataError, NoBracket
from .simulation import ScenarioSet, default_counts


@dataclass(frozen=True)
class CdxTranche:
    attach: float
    detach: float
    spread: float = 0.0
    maturity: int = 5
    recovery: float = 0.4
    notional0: float = 1.0
    members: Optional[tuple] = None  # None: every firm of the scenario set
    upfront: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not (0.0 <= self.attach < self.detach <= 1.0):
            raise ValueError(f"need 0 <= attach < detach <= 1, got [{self.attach}, {self.detach}]")
        if not 0.0 <= self.recovery <= 1.0:
            raise ValueError("recovery must lie in [0, 1]")
        if self.notional0 <= 0 or self.maturity < 1:
            raise ValueError("notional0 > 0 and maturity >= 1 required")
        if self.members is not None:
            if len(self.members) == 0:
                raise ValueError("tranche needs at least one member")
            object.__setattr__(self, "members", tuple(self.members))

    def with_spread(self, spread: float) -> "CdxTranche":
        from dataclasses import replace
        return replace(self, spread=float(spread))

    @classmethod
    def from_dict(cls, d: dict) -> "CdxTranche":
        keys = {"attach", "detach", "spread", "maturity", "recovery", "notional0", "members", "upfront", "name"}
        unknown = set(d) - keys
        if unknown:
            raise ValueError(f"unknown tranche fields {sorted(unknown)}")
        d = dict(d)
        if d.get("members") == "all":
            d["members"] = None
        return cls(**d)


@dataclass(frozen=True, eq=False)
class RateCurve:
    risk_free: np.ndarray
    discount: np.ndarray

    def __post_init__(self):
        i = np.array(self.risk_free, dtype=float)
        r = np.array(self.discount, dtype=float)
        if i.shape != r.shape or i.ndim != 1:
            raise ValueError("risk_free and discount must be 1-D of equal length")
        if np.any(i <= -1) or np.any(r <= 0) or np.any(r > 1) or np.any(np.diff(r) > 0):
            raise ValueError("rates must exceed -1; discount factors in (0,1] and nonincreasing")
        for a in (i, r):
            a.setflags(write=False)
        object.__setattr__(self, "risk_free", i)
        object.__setattr__(self, "discount", r)

    def __len__(self):
        return len(self.risk_free)

    @classmethod
    def flat(cls, rate: float, horizon: int, discount_rate: Optional[float] = None) -> "RateCurve":
        d = rate if discount_rate is None else discount_rate
        t = np.arange(1, horizon + 1)
        return cls(np.full(horizon, float(rate)), (1.0 + d) ** -t)

    @classmethod
    def from_rates(cls, rates) -> "RateCurve":
        """Discount factors compounded from the period rates themselves."""
        rates = np.asarray(rates, dtype=float)
        return cls(rates, np.cumprod(1.0 / (1.0 + rates)))


@dataclass(frozen=True, eq=False)
class ReturnDistribution:
    values: np.ndarray
    name: str = ""

    @property
    def losses(self) -> np.ndarray:
        return -np.asarray(self.values)


def loss_fraction(defaults, tranche_or_size):
    """Fraction of the index notional lost: defaults / |members|."""
    if isinstance(tranche_or_size, (int, np.integer)):
        size = int(tranche_or_size)
    elif tranche_or_size.members is None:
        raise ValueError("tranche has no explicit member list; pass the index size instead")
    else:
        size = len(tranche_or_size.members)
    return np.asarray(defaults, dtype=float) / size if np.ndim(defaults) else float(defaults) / size


def tranche_notional(tranche: CdxTranche, loss):
    """Remaining tranche notional for index loss fraction ``loss``."""
    a, b = tranche.attach, tranche.detach
    out = tranche.notional0 * np.clip((b - np.asarray(loss, dtype=float)) / (b - a), 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def _defaults_for(tranche: CdxTranche, scenarios: ScenarioSet):
    d = default_counts(scenarios, tranche.members)
    size = scenarios.n_firms if tranche.members is None else len(tranche.members)
    return d, size


def discounted_return(tranche: CdxTranche, defaults, curve: RateCurve, n_members: Optional[int] = None):
    """Discounted return for cumulative default-count paths.

    ``defaults`` has trailing axis t = 0..T' with T' >= maturity (one path
    or a batch of scenarios).  ``n_members`` defaults to ``len(tranche.members)``.
    """
    t_mat = tranche.maturity
    if len(curve) < t_mat:
        raise CurveTooShort(f"curve covers {len(curve)} periods, maturity is {t_mat}")
    d = np.asarray(defaults, dtype=float)
    if d.shape[-1] < t_mat + 1:
        raise DataError(f"default path covers {d.shape[-1] - 1} periods, maturity is {t_mat}")
    size = n_members if n_members is not None else len(tranche.members)
    n0 = tranche.notional0
    notional = tranche_notional(tranche, d[..., 1:t_mat + 1] / size)
    i = curve.risk_free[:t_mat]
    r = curve.discount[:t_mat]
    rec = tranche.recovery
    coupons = (r * (notional * (tranche.spread + i) + rec * (n0 - notional) * i)).sum(axis=-1)
    n_t = notional[..., -1]
    final = r[-1] * (n_t + rec * (n0 - n_t))
    return -n0 + tranche.upfront * n0 + coupons + final


def scenario_returns(tranche: CdxTranche, scenarios: ScenarioSet, curve: RateCurve) -> ReturnDistribution:
    d, size = _defaults_for(tranche, scenarios)
    return ReturnDistribution(discounted_return(tranche, d, curve, size), tranche.name)


def expected_return(tranche: CdxTranche, scenarios: ScenarioSet, curve: RateCurve) -> float:
    return float(np.mean(scenario_returns(tranche, scenarios, curve).values))


def fair_spread(tranche: CdxTranche, scenarios: ScenarioSet, curve: RateCurve, tol: float = 1e-8) -> float:
    """Spread with zero expected discounted return, by bracketed bisection."""
    d, size = _defaults_for(tranche, scenarios)

    def f(s):
        return float(np.mean(discounted_return(tranche.with_spread(s), d, curve, size)))

    t_mat = tranche.maturity
    annuity = tranche_notional(tranche, d[:, 1:t_mat + 1] / size) @ curve.discount[:t_mat]
    if not np.any(annuity > 0):
        raise NoBracket("tranche is wiped out in every scenario; spread undefined")
    lo, hi = -1.0, 1.0
    f_lo, f_hi = f(lo), f(hi)
    while f_lo > 0:
        lo *= 2.0
        if lo < -1e9:
            raise NoBracket("no sign change below -1e9")
        f_lo = f(lo)
    while f_hi < 0:
        hi *= 2.0
        if hi > 1e9:
            raise NoBracket("no sign change above 1e9")
        f_hi = f(hi)
    target = tol * tranche.notional0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if abs(f_mid) <= target or mid in (lo, hi):
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return mid


@dataclass
class RiskStats:
    alpha: float
    mean: float
    var: float
    cvar: float
    bin_edges: np.ndarray
    counts: np.ndarray

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "mean_loss": self.mean, "VaR": self.var, "CVaR": self.cvar}


def value_at_risk(losses, alpha: float) -> float:
    """Left-closed empirical quantile inf{x : F(x) >= alpha}."""
    x = np.sort(np.asarray(losses, dtype=float))
    k = max(1, math.ceil(round(alpha * len(x), 9)))
    return float(x[k - 1])


def conditional_value_at_risk(losses, alpha: float) -> float:
    """Rockafellar-Uryasev CVaR of equally weighted losses, evaluated at a = VaR."""
    x = np.asarray(losses, dtype=float)
    a = value_at_risk(x, alpha)
    return float(a + np.maximum(x - a, 0.0).sum() / ((1.0 - alpha) * len(x)))


def risk_stats(dist, alpha: float, bins: int = 50) -> RiskStats:
    """Mean, VaR and CVaR of the loss (negated return) plus a histogram."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    values = dist.values if isinstance(dist, ReturnDistribution) else np.asarray(dist, dtype=float)
    if len(values) == 0:
        raise ValueError("empty distribution")
    losses = -np.asarray(values, dtype=float)
    counts, edges = np.histogram(losses, bins=bins)
    return RiskStats(
        alpha=alpha,
        mean=float(losses.mean()),
        var=value_at_risk(losses, alpha),
        cvar=conditional_value_at_risk(losses, alpha),
        bin_edges=edges,
        counts=counts,
    )


def write_histogram_csv(stats: RiskStats, path, comment: Optional[str] = None) -> None:
    """Histogram of losses; an optional leading ``# comment`` line carries provenance."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "count"])
        for lo, hi, c in zip(stats.bin_edges[:-1], stats.bin_edges[1:], stats.counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def write_stats_json(stats_by_level: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(stats_by_level, fh, indent=1, sort_keys=True)
        fh.write("\n")
