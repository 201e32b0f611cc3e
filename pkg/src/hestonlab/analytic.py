"""Semi-closed-form European pricing under stochastic variance.

The log-forward transform x = ln(S*e^{r*tau}/K) reduces pricing to two
probability-like integrals

    P_j = 1/2 + (1/pi) * Int_0^inf Re[ exp(C_j*vbar + D_j*v) * e^{iux} / (iu) ] du

(puts use -1/2 in place of +1/2) with exponential-affine coefficients

    D = r_- (1 - e^{-d tau}) / (1 - g e^{-d tau})
    C = lam * [ r_- tau - (2/eta^2) ln((1 - g e^{-d tau})/(1 - g)) ]

where alpha = -u^2/2 - iu/2 + i j u, beta = lam - rho*eta*j - i rho eta u,
gamma = eta^2/2, d = sqrt(beta^2 - 4 alpha gamma), r_+- = (beta +- d)/eta^2
and g = r_-/r_+. The call assembles as S0*P1 - K e^{-r tau} P0.

Numerical notes: r_- is evaluated as 2*alpha/(beta + d), which is exact
and free of the catastrophic cancellation the (beta - d)/eta^2 form
suffers for small eta; the ratio log uses a complex log1p so the whole
coefficient pipeline stays accurate down to eta ~ 1e-8. The principal
branch is taken throughout; with g = r_-/r_+ and the decaying e^{-d tau}
the ratio never wraps the branch cut for the parameter ranges used here.

Black-Scholes / Black-76 closed forms and the deterministic-variance
(eta = 0) limit live here as well, since the Monte Carlo and smile
modules all lean on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .types import HestonParams, MarketSpec, validate_market, validate_params

__all__ = [
    "CfCoefficients",
    "PriceQuote",
    "QuadratureError",
    "cf_coefficients",
    "heston_prob",
    "price",
    "price_deterministic_vol",
    "sigma_star",
    "black_scholes_call",
    "black_scholes_put",
    "black76_price",
    "black76_greeks",
    "call_values_on_strikes",
]

PROB_TOL = 1e-9  # required absolute accuracy of each P_j integral
TAIL_TOL = 1e-12  # truncation: extend u_max until the tail adds less than this
U_MAX_START = 200.0
U_MAX_CAP = 6400.0
# The integrand's real part has a finite u->0 limit (the 1/(iu) pole is purely
# imaginary), so the open Gauss-Legendre panel may start at 0 exactly: nodes
# never touch the endpoint and no O(u_lo) omission bias is introduced.
U_LO = 0.0
PANEL_WIDTH = 5.0


class QuadratureError(RuntimeError):
    """Fourier integral failed to reach the requested accuracy."""

    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class CfCoefficients:
    """Exponential-affine coefficients C(u,tau), D(u,tau) for one (u, j)."""

    c: complex
    d: complex


@dataclass(frozen=True)
class PriceQuote:
    value: float
    probs: tuple[float, float]  # (P0, P1) as assembled
    quadrature_error: float


def _clog1p(z: np.ndarray) -> np.ndarray:
    """Principal-branch log(1+z) for complex arrays, accurate for tiny |z|."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    series = z * (1 - z * (0.5 - z * (1 / 3 - 0.25 * z)))
    full = np.log(np.where(small, 1.0, 1.0 + z))
    return np.where(small, series, full)


def _cf_cd(u, tau: float, p: HestonParams, j: int):
    """Vectorized C(u,tau), D(u,tau); u may be a complex/real array."""
    if p.eta == 0.0:
        raise ValueError(
            "eta = 0 degenerates the Riccati coefficients; "
            "use the deterministic-variance pricer instead"
        )
    u = np.asarray(u, dtype=complex)
    alpha = -0.5 * u * u - 0.5j * u + 1j * j * u
    beta = p.lam - p.rho * p.eta * j - 1j * p.rho * p.eta * u
    d = np.sqrt(beta * beta - 2.0 * alpha * p.eta**2)
    r_minus = 2.0 * alpha / (beta + d)
    g = r_minus * p.eta**2 / (beta + d)
    dt = d * tau
    # 1 - e^{-d tau} by series when the exponent is tiny (d -> 0 degeneracy)
    edt = np.exp(-dt)
    one_m_edt = np.where(
        np.abs(dt) < 1e-6,
        dt * (1 - dt * (0.5 - dt * (1 / 6 - dt / 24))),
        1.0 - edt,
    )
    denom = 1.0 - g * edt
    D = r_minus * one_m_edt / denom
    w = g * one_m_edt / (1.0 - g)
    C = p.lam * (r_minus * tau - (2.0 / p.eta**2) * _clog1p(w))
    return C, D


def cf_coefficients(u: complex, tau: float, p: HestonParams, j: int) -> CfCoefficients:
    """C(u,tau) and D(u,tau) for parity index j in {0, 1}.

    Satisfies C(u,0) = D(u,0) = 0 and the Riccati system
    dD/dtau = alpha - beta*D + gamma*D^2, dC/dtau = lam*D.
    """
    if j not in (0, 1):
        raise ValueError(f"parity index j must be 0 or 1, got {j}")
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    C, D = _cf_cd(np.asarray([u]), tau, p, j)
    return CfCoefficients(c=complex(C[0]), d=complex(D[0]))


@lru_cache(maxsize=64)
def _panel_grid(n: int, u_lo: float, u_hi: float):
    """Composite Gauss-Legendre rule: n nodes per PANEL_WIDTH-wide panel."""
    xg, wg = np.polynomial.legendre.leggauss(n)
    edges = np.arange(u_lo, u_hi, PANEL_WIDTH)
    edges = np.append(edges, u_hi)
    us, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        us.append(0.5 * (b - a) * xg + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * wg)
    return np.concatenate(us), np.concatenate(ws)


def _integrate_panel(xs: np.ndarray, v: float, vbar: float, tau: float,
                     p: HestonParams, j: int, n: int, u_lo: float, u_hi: float):
    u, w = _panel_grid(n, u_lo, u_hi)
    C, D = _cf_cd(u, tau, p, j)
    base = np.exp(C * vbar + D * v) / (1j * u)
    phase = np.exp(1j * np.outer(xs, u))
    return (phase * base).real @ w


def _prob_integrals(xs, v: float, vbar: float, tau: float, p: HestonParams, j: int):
    """Integral part of P_j for every x in xs over one shared u-grid.

    Node count doubles until two successive levels agree; u_max starts at
    200 and doubles until the next octave contributes less than TAIL_TOL.
    Returns (integrals, worst-case absolute error estimate).
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    xmax = float(np.max(np.abs(xs))) if xs.size else 0.0
    n = max(24, int(0.75 * PANEL_WIDTH * xmax) + 8)

    def eval_n(k, lo, hi):
        return _integrate_panel(xs, v, vbar, tau, p, j, k, lo, hi)

    cur, nxt = eval_n(n, U_LO, U_MAX_START), eval_n(2 * n, U_LO, U_MAX_START)
    while np.max(np.abs(nxt - cur)) > 1e-11 and 2 * n < 768:
        n *= 2
        cur, nxt = nxt, eval_n(2 * n, U_LO, U_MAX_START)
    err = float(np.max(np.abs(nxt - cur)))
    total = nxt

    u_max = U_MAX_START
    while u_max < U_MAX_CAP:
        tail = eval_n(2 * n, u_max, 2 * u_max)
        tmag = float(np.max(np.abs(tail)))
        if tmag < TAIL_TOL:
            err += tmag
            break
        total = total + tail
        u_max *= 2
    else:
        err += TAIL_TOL
    return total, err


def heston_prob(x: float, v0: float, tau: float, p: HestonParams, j: int,
                style: str = "call") -> float:
    """The probability-like P_j at log-forward-moneyness x and variance v0.

    Calls: 1/2 + integral/pi. Puts: -1/2 + the same integral.
    Raises QuadratureError if the integral cannot be resolved to PROB_TOL.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    I, err = _prob_integrals(np.asarray([x]), v0, p.vbar, tau, p, j)
    if err / math.pi > PROB_TOL:
        raise QuadratureError(
            f"P_{j} integral converged only to {err / math.pi:.3e} "
            f"(required {PROB_TOL:.0e})",
            achieved=err / math.pi,
        )
    half = 0.5 if style == "call" else -0.5
    return half + float(I[0]) / math.pi


def price(m: MarketSpec, p: HestonParams) -> PriceQuote:
    """European option premium by Fourier inversion.

    K = 0 is rejected (x = ln(S e^{r tau}/K) is undefined there; price a
    tiny strike like 0.001 instead). eta = 0 is routed to the
    deterministic-variance closed form.
    """
    rep_m = validate_market(m)
    if not rep_m.valid:
        raise ValueError("invalid market spec: " + "; ".join(rep_m.violations))
    rep_p = validate_params(p)
    if not rep_p.valid:
        raise ValueError("invalid Heston parameters: " + "; ".join(rep_p.violations))
    if m.k <= 0.0:
        raise ValueError(
            "zero strike is outside the transform's domain "
            "(x = ln(S e^{r tau}/K)); use a small positive strike"
        )
    if p.eta == 0.0:
        return price_deterministic_vol(m, p)

    x = math.log(m.s0 * math.exp(m.r * m.t) / m.k)
    xs = np.asarray([x])
    I1, e1 = _prob_integrals(xs, p.v0, p.vbar, m.t, p, 1)
    I0, e0 = _prob_integrals(xs, p.v0, p.vbar, m.t, p, 0)
    half = 0.5 if m.style == "call" else -0.5
    p1 = half + float(I1[0]) / math.pi
    p0 = half + float(I0[0]) / math.pi
    value = m.s0 * p1 - m.k * math.exp(-m.r * m.t) * p0
    q_err = (e1 * m.s0 + e0 * m.k * math.exp(-m.r * m.t)) / math.pi
    return PriceQuote(value=max(value, 0.0), probs=(p0, p1), quadrature_error=q_err)


def call_values_on_strikes(s0: float, strikes, r: float, t: float,
                           p: HestonParams) -> np.ndarray:
    """Vectorized call premiums for many strikes of one contract.

    Shares a single u-grid across strikes, so a whole smile costs barely
    more than one price. Identical to price() per strike to ~1e-11.
    """
    strikes = np.asarray(strikes, dtype=float)
    if np.any(strikes <= 0.0):
        raise ValueError("all strikes must be positive")
    if p.eta == 0.0:
        sig = sigma_star(p, t)
        return np.array([black_scholes_call(s0, k, r, t, sig) for k in strikes])
    xs = np.log(s0 * math.exp(r * t) / strikes)
    I1, _ = _prob_integrals(xs, p.v0, p.vbar, t, p, 1)
    I0, _ = _prob_integrals(xs, p.v0, p.vbar, t, p, 0)
    values = s0 * (0.5 + I1 / math.pi) - strikes * math.exp(-r * t) * (0.5 + I0 / math.pi)
    return np.maximum(values, 0.0)


# ---------------------------------------------------------------------------
# Deterministic-variance limit and Black closed forms
# ---------------------------------------------------------------------------

def sigma_star(p: HestonParams, t: float) -> float:
    """Equivalent flat volatility when eta = 0.

    sigma* = sqrt(vbar + (1 - e^{-lam t})/(lam t) * (v0 - vbar)), with the
    lam -> 0 limit (weight -> 1, sigma* -> sqrt(v0)) taken analytically.
    """
    x = p.lam * t
    if abs(x) < 1e-8:
        weight = 1.0 - x / 2.0 + x * x / 6.0
    else:
        weight = (1.0 - math.exp(-x)) / x
    var = p.vbar + weight * (p.v0 - p.vbar)
    return math.sqrt(max(var, 0.0))


def price_deterministic_vol(m: MarketSpec, p: HestonParams) -> PriceQuote:
    """Closed-form price for the eta = 0 model: Black-Scholes at sigma*."""
    if p.eta != 0.0:
        raise ValueError(f"deterministic-variance pricer requires eta = 0, got {p.eta}")
    rep = validate_market(m)
    if not rep.valid:
        raise ValueError("invalid market spec: " + "; ".join(rep.violations))
    sig = sigma_star(p, m.t)
    if m.style == "call":
        value = black_scholes_call(m.s0, m.k, m.r, m.t, sig)
    else:
        value = black_scholes_put(m.s0, m.k, m.r, m.t, sig)
    return PriceQuote(value=value, probs=(math.nan, math.nan), quadrature_error=0.0)


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _Phi(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def black_scholes_call(s: float, k: float, r: float, t: float, sigma: float) -> float:
    """c = S Phi(d+) - K e^{-rt} Phi(d-); sigma = 0 collapses to the
    discounted forward intrinsic (S - K e^{-rt})^+."""
    if s <= 0 or t <= 0:
        raise ValueError("black_scholes_call needs s > 0 and t > 0")
    if k <= 0.0:
        return s
    sq = sigma * math.sqrt(t)
    if sq <= 0.0:
        return max(s - k * math.exp(-r * t), 0.0)
    d_plus = (math.log(s / k) + (r + 0.5 * sigma**2) * t) / sq
    return s * _Phi(d_plus) - k * math.exp(-r * t) * _Phi(d_plus - sq)


def black_scholes_put(s: float, k: float, r: float, t: float, sigma: float) -> float:
    if s <= 0 or t <= 0:
        raise ValueError("black_scholes_put needs s > 0 and t > 0")
    if k <= 0.0:
        return 0.0
    sq = sigma * math.sqrt(t)
    if sq <= 0.0:
        return max(k * math.exp(-r * t) - s, 0.0)
    d_plus = (math.log(s / k) + (r + 0.5 * sigma**2) * t) / sq
    return k * math.exp(-r * t) * _Phi(sq - d_plus) - s * _Phi(-d_plus)


def bs_call_vec(s, k: float, r: float, t: float, sigma) -> np.ndarray:
    """Vectorized Black-Scholes call over per-path (s, sigma) arrays.

    Rows with sigma = 0 fall back to the discounted forward intrinsic,
    which is the correct conditional value for a zero-variance path.
    """
    s = np.asarray(s, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    sq = sigma * math.sqrt(t)
    disc_k = k * math.exp(-r * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_plus = (np.log(s / k) + (r + 0.5 * sigma**2) * t) / sq
    live = sq > 0.0
    vals = np.where(
        live,
        s * ndtr(np.where(live, d_plus, 0.0)) - disc_k * ndtr(np.where(live, d_plus - sq, 0.0)),
        np.maximum(s - disc_k, 0.0),
    )
    return vals


def bs_put_vec(s, k: float, r: float, t: float, sigma) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    sq = sigma * math.sqrt(t)
    disc_k = k * math.exp(-r * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_plus = (np.log(s / k) + (r + 0.5 * sigma**2) * t) / sq
    live = sq > 0.0
    vals = np.where(
        live,
        disc_k * ndtr(np.where(live, sq - d_plus, 0.0)) - s * ndtr(np.where(live, -d_plus, 0.0)),
        np.maximum(disc_k - s, 0.0),
    )
    return vals


def black76_price(f: float, k: float, r: float, t: float, sigma: float,
                  style: str = "call") -> float:
    """Black futures-option premium e^{-rt}(F Phi(d+) - K Phi(d-))."""
    s = f * math.exp(-r * t)
    if style == "call":
        return black_scholes_call(s, k, r, t, sigma)
    return black_scholes_put(s, k, r, t, sigma)


def black76_greeks(f: float, k: float, r: float, t: float, sigma: float) -> dict:
    """Closed-form call sensitivities of the Black futures formula.

    delta and gamma are first/second derivatives in the futures level F.
    theta and rho follow the spot-fixed convention (the underlying spot
    s = F e^{-rt} held fixed while t or r moves), i.e. the classic
    Black-Scholes theta/rho written in futures variables:

        theta = -e^{-rt} (F phi(d+) sigma / (2 sqrt t) + r K Phi(d-))
        rho   =  K t e^{-rt} Phi(d-)
    """
    if not (f > 0 and k > 0 and t > 0 and sigma > 0):
        raise ValueError("black76_greeks needs f, k, t, sigma all > 0")
    sq = sigma * math.sqrt(t)
    d_plus = math.log(f / k) / sq + 0.5 * sq
    d_minus = d_plus - sq
    disc = math.exp(-r * t)
    return {
        "delta": disc * _Phi(d_plus),
        "gamma": disc * _phi(d_plus) / (f * sq),
        "vega": f * disc * _phi(d_plus) * math.sqrt(t),
        "theta": -disc * (f * _phi(d_plus) * sigma / (2.0 * math.sqrt(t))
                          + r * k * _Phi(d_minus)),
        "rho": k * t * disc * _Phi(d_minus),
    }
