"""Black-76 implied volatility and Heston smile generation.

Implied vol is the sigma that makes the Black futures formula reproduce a
given premium. Inversion is a bracketing root-find on sigma in [1e-6, 5]:
monotonicity of the Black price in sigma makes the bracket airtight, and
the bisection/secant hybrid never needs a vega, which matters for
deep-ITM/OTM strikes where vega underflows.

Smiles follow the futures convention: the curve for a parameter set is
produced by pricing every strike analytically and inverting against the
forward F0 = S0*e^{rT}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .analytic import black76_price, call_values_on_strikes
from .types import HestonParams, MarketSpec, validate_params

__all__ = [
    "OutOfBandError",
    "SmileCurve",
    "SweepDiagnostics",
    "implied_vol",
    "smile",
    "parameter_sweep",
    "SIGMA_LO",
    "SIGMA_HI",
]

SIGMA_LO = 1e-6
SIGMA_HI = 5.0
PRICE_TOL = 1e-10


class OutOfBandError(ValueError):
    """Premium violates the no-arbitrage band (or exceeds the sigma cap).

    Carries the offending price and the band so callers (the calibration
    loss) can decide how to penalize instead of silently clamping.
    """

    def __init__(self, message: str, price: float, lower: float, upper: float,
                 edge_sigma: float):
        super().__init__(message)
        self.price = price
        self.lower = lower
        self.upper = upper
        self.edge_sigma = edge_sigma


def implied_vol(price: float, f: float, k: float, r: float, t: float) -> float:
    """Invert the Black-76 call premium to a flat volatility.

    Requires e^{-rt}(f-k)^+ < price < e^{-rt} f strictly; outside that
    band no volatility reproduces the price and OutOfBandError is raised.
    """
    if not (f > 0 and k > 0 and t > 0):
        raise ValueError("implied_vol needs f, k, t all > 0")
    disc = math.exp(-r * t)
    lower = disc * max(f - k, 0.0)
    upper = disc * f
    if not (price > lower):
        raise OutOfBandError(
            f"price {price} at or below intrinsic bound {lower}",
            price, lower, upper, edge_sigma=SIGMA_LO)
    if not (price < upper):
        raise OutOfBandError(
            f"price {price} at or above forward bound {upper}",
            price, lower, upper, edge_sigma=SIGMA_HI)

    def gap(sig: float) -> float:
        return black76_price(f, k, r, t, sig) - price

    g_lo, g_hi = gap(SIGMA_LO), gap(SIGMA_HI)
    if g_lo > 0.0:
        # price below the sigma floor's value (possible only within PRICE_TOL
        # of the intrinsic bound); the floor is the honest answer
        return SIGMA_LO
    if g_hi < 0.0:
        raise OutOfBandError(
            f"price {price} needs sigma above the cap {SIGMA_HI}",
            price, lower, upper, edge_sigma=SIGMA_HI)
    sig = brentq(gap, SIGMA_LO, SIGMA_HI, xtol=1e-14, rtol=8.9e-16)
    return float(sig)


@dataclass
class SmileCurve:
    """One implied-vol curve: ascending strikes, their IVs, and provenance."""

    strikes: np.ndarray
    ivs: np.ndarray
    params: HestonParams
    f0: float

    def argmin_strike(self) -> float:
        return float(self.strikes[int(np.argmin(self.ivs))])


@dataclass(frozen=True)
class SweepDiagnostics:
    """Shape summary of one smile: level at the forward, argmin strike,
    a fixed-stencil curvature proxy, and the wing-to-wing skew sign."""

    level: float
    argmin_strike: float
    curvature: float
    skew: float


def smile(p: HestonParams, m: MarketSpec, strikes) -> SmileCurve:
    """Analytic Heston prices -> per-strike implied vols, futures convention."""
    strikes = np.asarray(strikes, dtype=float)
    if strikes.ndim != 1 or len(strikes) < 1:
        raise ValueError("strikes must be a non-empty 1-d grid")
    if np.any(np.diff(strikes) <= 0):
        raise ValueError("strikes must be strictly ascending")
    f0 = m.f0
    values = call_values_on_strikes(m.s0, strikes, m.r, m.t, p)
    ivs = np.empty_like(values)
    for i, (k, c) in enumerate(zip(strikes, values)):
        try:
            ivs[i] = implied_vol(float(c), f0, float(k), m.r, m.t)
        except OutOfBandError as exc:
            raise OutOfBandError(
                f"strike {k}: {exc}", exc.price, exc.lower, exc.upper,
                exc.edge_sigma) from exc
    return SmileCurve(strikes=strikes, ivs=ivs, params=p, f0=f0)


def _diagnostics(p: HestonParams, m: MarketSpec, curve: SmileCurve) -> SweepDiagnostics:
    f0 = m.f0
    stencil = np.array([0.95 * f0, f0, 1.05 * f0])
    s = smile(p, m, stencil)
    level = float(s.ivs[1])
    curvature = float(s.ivs[0] - 2.0 * s.ivs[1] + s.ivs[2])
    skew = float(np.sign(curve.ivs[-1] - curve.ivs[0]))
    return SweepDiagnostics(level=level, argmin_strike=curve.argmin_strike(),
                            curvature=curvature, skew=skew)


def parameter_sweep(which: str, values, base: HestonParams, m: MarketSpec,
                    strikes) -> list[tuple[float, SmileCurve, SweepDiagnostics]]:
    """Smile curves varying one parameter with the other four fixed.

    which is one of v0, vbar, lam, eta, rho. Every swept value must keep
    the parameter set valid.
    """
    if which not in ("v0", "vbar", "lam", "eta", "rho"):
        raise ValueError(f"unknown sweep parameter {which!r}")
    out = []
    for val in values:
        p = base.replace(**{which: float(val)})
        rep = validate_params(p)
        if not rep.valid:
            raise ValueError(
                f"sweep value {which}={val} breaks invariants: "
                + "; ".join(rep.violations))
        curve = smile(p, m, strikes)
        out.append((float(val), curve, _diagnostics(p, m, curve)))
    return out
