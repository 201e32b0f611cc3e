"""Shared domain types: model parameters, contract specs, simulation config.

All rates and variances are per-year. Day-count conversion (365-day year)
happens only at the data-ingestion boundary, never inside pricing code.
Every type here is an immutable value object and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class HestonParams:
    """The five parameters of the square-root stochastic-variance model.

    v0   : initial variance (per year)
    vbar : long-run variance the process reverts to (per year)
    lam  : mean-reversion speed (1/year)
    eta  : volatility of volatility (per sqrt-year)
    rho  : correlation between the price and variance Brownian drivers
    """

    v0: float
    vbar: float
    lam: float
    eta: float
    rho: float

    @property
    def feller_ratio(self) -> float:
        """2*lam*vbar/eta^2; > 1 keeps the variance strictly positive.

        Informational only: market-calibrated parameter sets routinely
        violate it, so nothing here enforces the condition.
        """
        if self.eta == 0.0:
            return math.inf
        return 2.0 * self.lam * self.vbar / self.eta**2

    def replace(self, **kw) -> "HestonParams":
        d = dict(v0=self.v0, vbar=self.vbar, lam=self.lam, eta=self.eta, rho=self.rho)
        d.update(kw)
        return HestonParams(**d)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.v0, self.vbar, self.lam, self.eta, self.rho)


@dataclass(frozen=True)
class MarketSpec:
    """Contract and market context for one European option.

    s0 stores the spot level. For futures-style quotes the futures level
    F0 = s0*exp(r*t) is always derived, never stored, so the two can
    never disagree.
    """

    s0: float
    k: float
    r: float
    t: float
    style: str = "call"  # "call" | "put"
    underlying_kind: str = "spot"  # "spot" | "future"

    def __post_init__(self):
        if self.style not in ("call", "put"):
            raise ValueError(f"style must be 'call' or 'put', got {self.style!r}")
        if self.underlying_kind not in ("spot", "future"):
            raise ValueError(
                f"underlying_kind must be 'spot' or 'future', got {self.underlying_kind!r}"
            )

    @property
    def f0(self) -> float:
        """Futures level implied by the spot: F0 = s0*exp(r*t)."""
        return self.s0 * math.exp(self.r * self.t)

    @classmethod
    def from_future(cls, f0: float, k: float, r: float, t: float,
                    style: str = "call") -> "MarketSpec":
        """Build a futures-quoted contract holding F0 fixed (s0 = F0*e^{-rt})."""
        return cls(s0=f0 * math.exp(-r * t), k=k, r=r, t=t,
                   style=style, underlying_kind="future")

    def replace(self, **kw) -> "MarketSpec":
        d = dict(s0=self.s0, k=self.k, r=self.r, t=self.t,
                 style=self.style, underlying_kind=self.underlying_kind)
        d.update(kw)
        return MarketSpec(**d)


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo discretization: n_t time steps, n_p paths, seed, scheme.

    The step h = t/n_t is always derived from the contract maturity.
    """

    n_t: int
    n_p: int
    seed: int = 0
    scheme: str = "mixing"  # "crude" | "mixing"

    def __post_init__(self):
        if self.scheme not in ("crude", "mixing"):
            raise ValueError(f"scheme must be 'crude' or 'mixing', got {self.scheme!r}")
        if self.n_t < 1 or self.n_p < 1:
            raise ValueError("n_t and n_p must both be >= 1")

    def step(self, t: float) -> float:
        return t / self.n_t


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_params: the violated invariants, if any, plus
    the Feller ratio as informational context."""

    violations: tuple[str, ...] = ()
    feller_ratio: float = math.inf

    @property
    def valid(self) -> bool:
        return not self.violations

    @property
    def feller_satisfied(self) -> bool:
        return self.feller_ratio >= 1.0


def validate_params(p: HestonParams) -> ValidationReport:
    """Check the parameter invariants, reporting rather than raising.

    The Feller ratio is computed and returned but never treated as a
    violation; calibrated parameter sets commonly break it.
    """
    bad = []
    if not (p.v0 >= 0.0):
        bad.append(f"v0 must be >= 0, got {p.v0}")
    if not (p.vbar >= 0.0):
        bad.append(f"vbar must be >= 0, got {p.vbar}")
    if not (p.eta >= 0.0):
        bad.append(f"eta must be >= 0, got {p.eta}")
    if not (-1.0 < p.rho < 1.0):
        bad.append(f"rho must lie in (-1, 1), got {p.rho}")
    if math.isnan(p.lam):
        bad.append("lam must be a finite number")
    return ValidationReport(violations=tuple(bad), feller_ratio=p.feller_ratio)


def validate_market(m: MarketSpec) -> ValidationReport:
    """Check contract invariants: s0 > 0, k >= 0, t > 0."""
    bad = []
    if not (m.s0 > 0.0):
        bad.append(f"s0 must be > 0, got {m.s0}")
    if not (m.k >= 0.0):
        bad.append(f"k must be >= 0, got {m.k}")
    if not (m.t > 0.0):
        bad.append(f"t must be > 0, got {m.t}")
    return ValidationReport(violations=tuple(bad))
