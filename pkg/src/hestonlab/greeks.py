"""Greeks for futures options: pathwise mixing estimators and oracles.

The mixing representation prices each path with the Black formula at an
effective forward F_eff = F0*e^{Y(T)} and effective volatility sigma_eff,
so differentiating through the formula gives per-path estimators:

    Delta: mean Delta_B(theta_eff) e^{Y}
    Gamma: mean Gamma_B(theta_eff) e^{2Y}
    Vega : 2 sqrt(v0) * mean [ Delta_B F_eff dY/dv0 + Vega_B dsigma_eff/dv0 ]
    Theta: mean [ -(1/n_T)(Delta_B F_eff dY/dh + Vega_B dsigma_eff/dh) + Theta_B ]
    Rho  : mean Rho_B(theta_eff)

with the dv/dv0, dY/dv0, dv/dh, dY/dh ledgers co-evolved during path
simulation (normals held fixed as unit variates Z' under d/dh, since
Z = sqrt(h) Z'). Theta_B and Rho_B use the spot-fixed convention, so the
estimators target derivatives of the price with the spot S0 = F0 e^{-rT}
held fixed; the finite-difference oracle bumps accordingly.

A flat-volatility single-step world hosts the pathwise/likelihood-ratio
estimator families (pw, lr, and the two mixed gammas) as an independent
methodology cross-check; they are not a Heston Greek path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .analytic import price
from .mc import mixing_terminals
from .rng import RandomSource
from .types import HestonParams, MarketSpec, SimConfig

__all__ = [
    "GreekValue",
    "GreekSet",
    "pathwise_greeks",
    "fd_greeks",
    "pw_lr_estimators",
    "correlation_sensitivity",
]


@dataclass(frozen=True)
class GreekValue:
    value: float
    std_error: float = 0.0


@dataclass(frozen=True)
class GreekSet:
    method: str
    delta: Optional[GreekValue] = None
    gamma: Optional[GreekValue] = None
    vega: Optional[GreekValue] = None
    theta: Optional[GreekValue] = None
    rho_rate: Optional[GreekValue] = None
    notes: tuple[str, ...] = ()


def _stat(per_path: np.ndarray) -> GreekValue:
    n = per_path.size
    se = per_path.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
    return GreekValue(value=float(per_path.mean()), std_error=float(se))


def _black_pieces(f_eff: np.ndarray, k: float, r: float, t: float,
                  sig_eff: np.ndarray) -> dict:
    """Per-path Black call pieces, with zero-volatility rows degraded to
    their intrinsic limits (Phi -> indicator, densities -> 0)."""
    disc = math.exp(-r * t)
    sq = sig_eff * math.sqrt(t)
    live = sq > 0.0
    safe_sq = np.where(live, sq, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_plus = np.where(live, np.log(f_eff / k) / safe_sq + 0.5 * safe_sq, 0.0)
    d_minus = d_plus - sq
    itm = (f_eff > k).astype(float)
    Phi_p = np.where(live, ndtr(d_plus), itm)
    Phi_m = np.where(live, ndtr(d_minus), itm)
    phi_p = np.where(live, np.exp(-0.5 * d_plus**2) / math.sqrt(2 * math.pi), 0.0)
    return {
        "delta": disc * Phi_p,
        "gamma": np.where(live, disc * phi_p / (f_eff * safe_sq), 0.0),
        "vega": f_eff * disc * phi_p * math.sqrt(t),
        "theta": -disc * (f_eff * phi_p * np.where(live, sig_eff, 0.0)
                          / (2.0 * math.sqrt(t)) + r * k * Phi_m),
        "rho": k * t * disc * Phi_m,
    }


def pathwise_greeks(m: MarketSpec, p: HestonParams, cfg: SimConfig) -> GreekSet:
    """All five mixing-scheme Greeks from one shared path batch.

    Requires the futures form of the contract and the mixing scheme. The
    shared batch (common random numbers) keeps the five estimators
    mutually consistent.
    """
    if cfg.scheme != "mixing":
        raise ValueError("pathwise greeks are defined on the mixing scheme")
    if m.style != "call":
        raise ValueError("pathwise greeks cover calls; differentiate parity for puts")
    term = mixing_terminals(m, p, cfg, want_ledgers=True)
    h = term["h"]
    f0 = m.f0
    one_m_rho2 = 1.0 - p.rho**2

    e_y = np.exp(term["y_T"])
    f_eff = f0 * e_y
    a_sum = term["a_sum"]
    sig_eff = np.sqrt(one_m_rho2 * h * a_sum / m.t)
    B = _black_pieces(f_eff, m.k, m.r, m.t, sig_eff)

    live = a_sum > 0.0
    safe_a = np.where(live, a_sum, 1.0)
    dsig_dv0 = np.where(live, 0.5 * np.sqrt(one_m_rho2 * h / (m.t * safe_a)) * term["sum_dv"], 0.0)
    dsig_dh = np.where(live, 0.5 * np.sqrt(one_m_rho2 * h / (m.t * safe_a)) * term["sum_dvh"], 0.0)

    df_dv0 = f_eff * term["dy_T"]
    delta_pp = B["delta"] * e_y
    gamma_pp = B["gamma"] * e_y**2
    vega_pp = 2.0 * math.sqrt(p.v0) * (B["delta"] * df_dv0 + B["vega"] * dsig_dv0)
    theta_pp = (-(1.0 / cfg.n_t) * (B["delta"] * f_eff * term["dyh_T"]
                                    + B["vega"] * dsig_dh) + B["theta"])
    rho_pp = B["rho"]

    return GreekSet(
        method="pathwise-mixing",
        delta=_stat(delta_pp),
        gamma=_stat(gamma_pp),
        vega=_stat(vega_pp),
        theta=_stat(theta_pp),
        rho_rate=_stat(rho_pp),
    )


_DEFAULT_STEPS = {"f": None, "v0": 1e-4, "t": 1e-4, "r": 1e-5}


def fd_greeks(m: MarketSpec, p: HestonParams, steps: dict | None = None) -> GreekSet:
    """Central finite differences of the analytic price, futures form.

    Delta/Gamma bump the forward F0 (spot re-derived as F0 e^{-rt});
    Theta and Rho bump t and r with the spot held fixed, matching the
    spot-fixed convention of the pathwise estimators. Steps small enough
    to chase quadrature noise get flagged in notes rather than silently
    trusted.
    """
    st = dict(_DEFAULT_STEPS)
    if steps:
        st.update(steps)
    f0 = m.f0
    df = st["f"] if st["f"] is not None else 0.01 * f0

    def at_f(f: float) -> float:
        return price(m.replace(s0=f * math.exp(-m.r * m.t)), p).value

    def at_v0(v0: float) -> float:
        return price(m, p.replace(v0=v0)).value

    def at_t(t: float) -> float:
        return price(m.replace(t=t), p).value

    def at_r(r: float) -> float:
        return price(m.replace(r=r), p).value

    base = price(m, p)
    q = base.quadrature_error + 1e-13
    notes = []

    c_up, c_dn = at_f(f0 + df), at_f(f0 - df)
    delta = (c_up - c_dn) / (2 * df)
    gamma = (c_up - 2 * base.value + c_dn) / df**2
    if 4 * q / df**2 > 0.01 * abs(gamma) + 1e-12:
        notes.append(f"gamma step {df} too small for quadrature error {q:.1e}")

    dv = st["v0"]
    vega = 2.0 * math.sqrt(p.v0) * (at_v0(p.v0 + dv) - at_v0(p.v0 - dv)) / (2 * dv)
    dt_ = st["t"]
    theta = -(at_t(m.t + dt_) - at_t(m.t - dt_)) / (2 * dt_)
    dr = st["r"]
    rho = (at_r(m.r + dr) - at_r(m.r - dr)) / (2 * dr)
    for nm, stp, val in (("delta", df, delta), ("vega", dv, vega),
                         ("theta", dt_, theta), ("rho", dr, rho)):
        if q / stp > 0.01 * abs(val) + 1e-12:
            notes.append(f"{nm} step {stp} too small for quadrature error {q:.1e}")

    return GreekSet(
        method="finite-difference",
        delta=GreekValue(delta), gamma=GreekValue(gamma), vega=GreekValue(vega),
        theta=GreekValue(theta), rho_rate=GreekValue(rho), notes=tuple(notes),
    )


def pw_lr_estimators(m: MarketSpec, sigma: float, cfg: SimConfig) -> dict[str, GreekSet]:
    """Flat-volatility pathwise / likelihood-ratio / mixed estimators.

    The terminal level is sampled in one step,
    S_T = S0 exp((r - sigma^2/2) t + sigma sqrt(t) Z), so the likelihood
    score d equals the driving normal Z. Estimators:

        pw    : Delta = e^{-rt} 1{S_T >= K} S_T/S0,  Rho = e^{-rt} 1{S_T >= K} K t
        lr    : Delta = e^{-rt} payoff d/(S0 sigma sqrt t)
                Gamma = e^{-rt} payoff (d^2 - d sigma sqrt t - 1)/(S0^2 sigma^2 t)
                Rho   = e^{-rt} payoff (-t + d sqrt t / sigma)
        lr-pw : Gamma = e^{-rt} 1{S_T >= K} K d/(S0^2 sigma sqrt t)
        pw-lr : Gamma = e^{-rt} 1{S_T >= K} (S_T/S0^2)(d/(sigma sqrt t) - 1)
    """
    if sigma <= 0:
        raise ValueError("flat-vol estimators need sigma > 0")
    s0, k, r, t = m.s0, m.k, m.r, m.t
    z = RandomSource(cfg.seed, 0).normals(cfg.n_p)
    sqt = sigma * math.sqrt(t)
    s_T = s0 * np.exp((r - 0.5 * sigma**2) * t + sqt * z)
    disc = math.exp(-r * t)
    ind = (s_T >= k).astype(float)
    payoff = np.maximum(s_T - k, 0.0)
    d = z

    pw_delta = disc * ind * s_T / s0
    pw_rho = disc * ind * k * t
    lr_delta = disc * payoff * d / (s0 * sqt)
    lr_gamma = disc * payoff * (d**2 - d * sqt - 1.0) / (s0**2 * sigma**2 * t)
    lr_rho = disc * payoff * (-t + d * math.sqrt(t) / sigma)
    lrpw_gamma = disc * ind * k * d / (s0**2 * sqt)
    pwlr_gamma = disc * ind * (s_T / s0**2) * (d / sqt - 1.0)

    return {
        "pw": GreekSet(method="pw", delta=_stat(pw_delta), rho_rate=_stat(pw_rho)),
        "lr": GreekSet(method="lr", delta=_stat(lr_delta), gamma=_stat(lr_gamma),
                       rho_rate=_stat(lr_rho)),
        "lr-pw": GreekSet(method="lr-pw", gamma=_stat(lrpw_gamma)),
        "pw-lr": GreekSet(method="pw-lr", gamma=_stat(pwlr_gamma)),
    }


def correlation_sensitivity(m: MarketSpec, p: HestonParams, cfg: SimConfig) -> GreekValue:
    """Sensitivity of the call value to the Brownian correlation rho.

    Two contributions per mixing path: a vega part from
    dsigma_eff/drho = -rho/(1-rho^2) sigma_eff, and a delta part through
    the effective forward with dY(T)/drho = -rho Int v dt + Int sqrt(v) dW1
    accumulated along the path. Rejected near |rho| = 1 where the
    1 - rho^2 denominator degenerates.
    """
    if abs(p.rho) >= 0.999:
        raise ValueError("correlation sensitivity is singular as |rho| -> 1")
    if cfg.scheme != "mixing":
        raise ValueError("correlation sensitivity needs the mixing scheme")
    term = mixing_terminals(m, p, cfg, want_ledgers=False)
    h = term["h"]
    one_m_rho2 = 1.0 - p.rho**2
    f0 = m.f0
    f_eff = f0 * np.exp(term["y_T"])
    sig_eff = np.sqrt(one_m_rho2 * h * term["a_sum"] / m.t)
    B = _black_pieces(f_eff, m.k, m.r, m.t, sig_eff)
    dy_drho = -p.rho * h * term["a_sum"] + term["iw_sum"]
    per_path = (-(p.rho / one_m_rho2) * sig_eff * B["vega"]
                + B["delta"] * f_eff * dy_drho)
    return _stat(per_path)
