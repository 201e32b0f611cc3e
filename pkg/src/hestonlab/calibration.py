"""Option-chain ingestion, IV-MSE loss, and bounded gradient descent.

Chain cleaning follows a fixed pipeline: drop rows with missing values,
coerce Strike/IV to numbers (stripping currency junk, a % suffix divides
by 100), drop rows whose IV sits within +-0.0101 of zero (quote-feed
glitches report 0.00%), aggregate duplicate strikes by mean IV, then
attach log-moneyness ln(K/close) and the year fraction days/365.

The loss is the mean squared difference between market IVs and the IVs
implied by analytic model prices, futures convention (the chain's close
is the futures level). Prices outside the no-arbitrage band contribute
(band-edge IV - market IV)^2 instead of failing, which keeps the loss
finite while the optimizer explores bound corners.

The optimizer is plain gradient descent with central finite-difference
gradients (step 1e-4 per free parameter), a decaying learning rate
lr_i = initial_learning_rate / (learn_deno + i)^decay_level, and a box
clamp after every update; vbar's box is re-derived from the current v0
each iteration. The best-seen iterate is returned, not the last one:
the decayed-step scheme has no convergence test, so last-iterate can
regress.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from datetime import date

import numpy as np
import pandas as pd

from .analytic import call_values_on_strikes
from .implied_vol import OutOfBandError, implied_vol
from .types import HestonParams

__all__ = [
    "ChainDataError",
    "CalibrationError",
    "QuoteChain",
    "CalibConfig",
    "CalibResult",
    "TABLE_MEAN_PARAMS",
    "FIX2_VBAR",
    "FIX2_LAM",
    "load_chain",
    "synthetic_chain",
    "iv_loss",
    "gradient_descent",
    "calibrate_modes",
    "clamp_params",
]

PARAM_NAMES = ("v0", "vbar", "lam", "eta", "rho")

# reference parameter set used by the all-fixed calibration mode
TABLE_MEAN_PARAMS = HestonParams(
    v0=0.07021063, vbar=0.07327743, lam=0.5279261, eta=0.67426271, rho=-0.17644479
)
# defaults for the two-fixed mode; 0.073 / 0.528 reachable via overrides
FIX2_VBAR = 0.0763
FIX2_LAM = 0.45

NEAR_ZERO_IV = 0.0101


class ChainDataError(ValueError):
    """Raised when a chain file cannot be turned into usable quotes."""


class CalibrationError(RuntimeError):
    """Descent aborted (NaN loss); carries the loss trace gathered so far."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class QuoteChain:
    """Cleaned option-chain rows for one contract on one trade date."""

    trade_date: date
    expiry_date: date
    close: float
    strikes: np.ndarray
    ivs: np.ndarray
    x: np.ndarray  # log-moneyness ln(K/close)
    t: float
    r: float

    def __len__(self) -> int:
        return len(self.strikes)

    def permuted(self, order) -> "QuoteChain":
        order = np.asarray(order)
        return QuoteChain(self.trade_date, self.expiry_date, self.close,
                          self.strikes[order], self.ivs[order], self.x[order],
                          self.t, self.r)

    def save_csv(self, path) -> None:
        """Write the cleaned rows back out; loading the result reproduces
        this chain bit for bit (full-precision floats, cleaning idempotent)."""
        df = pd.DataFrame({
            "Strike": [repr(float(k)) for k in self.strikes],
            "IV": [repr(float(v)) for v in self.ivs],
        })
        df.to_csv(path, index=False)


_NUMERIC_KEEP = re.compile(r"[^0-9eE.+-]")


def _coerce_numeric(series: pd.Series, colname: str) -> tuple[pd.Series, pd.Series]:
    """Strip non-numeric characters and parse; returns (values, is_percent)."""
    raw = series.astype(str)
    is_pct = raw.str.contains("%", regex=False)
    cleaned = raw.map(lambda s: _NUMERIC_KEEP.sub("", s))
    values = pd.to_numeric(cleaned, errors="coerce")
    bad = values.isna()
    if bad.any():
        row = int(series.index[bad][0])
        raise ChainDataError(
            f"column {colname!r}: unparseable value {series[row]!r} at row {row}")
    return values, is_pct


def synthetic_chain(p: HestonParams, close: float, strikes, trade_date: date,
                    expiry_date: date, r: float,
                    daycount_base: int = 365) -> QuoteChain:
    """Chain whose market IVs are the model's own smile at params p.

    Used for round-trip calibration tests and the shipped fixtures; the
    loss at p is zero up to inversion tolerance by construction.
    """
    strikes = np.asarray(strikes, dtype=float)
    days = (expiry_date - trade_date).days
    t = days / daycount_base
    if t <= 0:
        raise ChainDataError(f"expiry {expiry_date} not after trade date {trade_date}")
    s0 = close * math.exp(-r * t)
    values = call_values_on_strikes(s0, strikes, r, t, p)
    ivs = np.array([
        implied_vol(float(c), close, float(k), r, t)
        for c, k in zip(values, strikes)
    ])
    return QuoteChain(trade_date=trade_date, expiry_date=expiry_date,
                      close=float(close), strikes=strikes, ivs=ivs,
                      x=np.log(strikes / close), t=t, r=r)


def load_chain(path, close: float, trade_date: date, expiry_date: date,
               r: float, daycount_base: int = 365) -> QuoteChain:
    """Read and clean a Strike/IV CSV into a QuoteChain.

    The file needs at least Strike and IV columns; extra columns are
    ignored. IV cells carrying a % suffix are divided by 100.
    """
    df = pd.read_csv(path)
    missing = [c for c in ("Strike", "IV") if c not in df.columns]
    if missing:
        raise ChainDataError(f"{path}: missing column(s) {missing}; has {list(df.columns)}")
    df = df[["Strike", "IV"]].copy()
    blank = df["Strike"].isna() | df["IV"].isna()
    for col in ("Strike", "IV"):
        blank |= df[col].astype(str).str.strip().isin(("", "nan", "None"))
    df = df[~blank]
    if len(df):
        strikes, _ = _coerce_numeric(df["Strike"], "Strike")
        ivs, pct = _coerce_numeric(df["IV"], "IV")
        ivs = ivs.where(~pct, ivs / 100.0)
        df = pd.DataFrame({"Strike": strikes, "IV": ivs})
        df = df[df["IV"].abs() > NEAR_ZERO_IV]
    if not len(df):
        raise ChainDataError(f"{path}: no usable rows survive cleaning")
    grouped = df.groupby("Strike", as_index=False)["IV"].mean().sort_values("Strike")
    strikes = grouped["Strike"].to_numpy(dtype=float)
    ivs = grouped["IV"].to_numpy(dtype=float)
    days = (expiry_date - trade_date).days
    t = days / daycount_base
    if t <= 0:
        raise ChainDataError(
            f"expiry {expiry_date} not after trade date {trade_date}")
    return QuoteChain(
        trade_date=trade_date, expiry_date=expiry_date, close=float(close),
        strikes=strikes, ivs=ivs, x=np.log(strikes / float(close)), t=t, r=r,
    )


def model_ivs(chain: QuoteChain, p: HestonParams) -> np.ndarray:
    """Per-strike model IVs, with out-of-band prices reported at the
    band-edge volatility (the same convention the loss penalizes with)."""
    s0 = chain.close * math.exp(-chain.r * chain.t)
    values = call_values_on_strikes(s0, chain.strikes, chain.r, chain.t, p)
    out = np.empty(len(chain))
    for i, (k, c) in enumerate(zip(chain.strikes, values)):
        try:
            out[i] = implied_vol(float(c), chain.close, float(k), chain.r, chain.t)
        except OutOfBandError as exc:
            out[i] = exc.edge_sigma
    return out


def iv_loss(chain: QuoteChain, p: HestonParams) -> float:
    """Mean squared deviation of model IVs from market IVs.

    fsum keeps the value independent of row order.
    """
    if not len(chain):
        raise ChainDataError("empty chain")
    fitted = model_ivs(chain, p)
    return math.fsum((fitted - chain.ivs) ** 2) / len(chain)


# ---------------------------------------------------------------------------
# gradient descent
# ---------------------------------------------------------------------------

BOUNDS = {
    "v0": (0.02, 0.12),
    "lam": (-2.0, 2.0),
    "eta": (0.0, 2.0),
    "rho": (-0.5, 0.5),
}
VBAR_FLOOR = 0.02
VBAR_WINDOW = 0.04


def clamp_params(vec: np.ndarray) -> np.ndarray:
    """Box clamp; vbar's window [max(.02, v0-.04), max(.02, v0+.04)] is
    re-derived from the just-clamped v0."""
    v0 = min(max(vec[0], BOUNDS["v0"][0]), BOUNDS["v0"][1])
    vbar_lo = max(VBAR_FLOOR, v0 - VBAR_WINDOW)
    vbar_hi = max(VBAR_FLOOR, v0 + VBAR_WINDOW)
    return np.array([
        v0,
        min(max(vec[1], vbar_lo), vbar_hi),
        min(max(vec[2], BOUNDS["lam"][0]), BOUNDS["lam"][1]),
        min(max(vec[3], BOUNDS["eta"][0]), BOUNDS["eta"][1]),
        min(max(vec[4], BOUNDS["rho"][0]), BOUNDS["rho"][1]),
    ])


@dataclass(frozen=True)
class CalibConfig:
    initial: HestonParams
    fixed_mask: tuple[bool, bool, bool, bool, bool] = (False,) * 5
    iterations: int = 300
    epsilon: float = 1e-4
    initial_learning_rate: float = 0.9
    learn_deno: float = 300.0
    decay_level: float = 0.0

    def learning_rate(self, i: int) -> float:
        return self.initial_learning_rate / (self.learn_deno + i) ** self.decay_level


@dataclass
class CalibResult:
    params: HestonParams
    loss: float
    loss_trace: list[float]
    fitted_ivs: np.ndarray
    fixed_mask: tuple[bool, bool, bool, bool, bool]
    iterations_run: int


def gradient_descent(chain: QuoteChain, cfg: CalibConfig) -> CalibResult:
    """Central-FD gradient descent over the free parameters, box-clamped.

    Fixed parameters get zero gradient and never move. With every
    parameter fixed this is a pure evaluation (zero iterations). Any NaN
    loss aborts with the trace attached.
    """
    vec = clamp_params(np.array(cfg.initial.as_tuple(), dtype=float))
    mask = cfg.fixed_mask

    def loss_at(v: np.ndarray) -> float:
        return iv_loss(chain, HestonParams(*v))

    l0 = loss_at(vec)
    trace = [l0]
    if math.isnan(l0):
        raise CalibrationError("NaN loss at the initial point", trace)
    best_vec, best_loss = vec.copy(), l0

    n_free = sum(1 for m_ in mask if not m_)
    iterations = 0 if n_free == 0 else cfg.iterations
    for i in range(iterations):
        grad = np.zeros(5)
        for j in range(5):
            if mask[j]:
                continue
            up = vec.copy()
            up[j] += cfg.epsilon
            down = vec.copy()
            down[j] -= cfg.epsilon
            grad[j] = (loss_at(up) - loss_at(down)) / (2.0 * cfg.epsilon)
        if np.any(np.isnan(grad)):
            raise CalibrationError(f"NaN gradient at iteration {i}", trace)
        vec = clamp_params(vec - cfg.learning_rate(i) * grad)
        cur = loss_at(vec)
        trace.append(cur)
        if math.isnan(cur):
            raise CalibrationError(f"NaN loss at iteration {i}", trace)
        if cur < best_loss:
            best_vec, best_loss = vec.copy(), cur

    params = HestonParams(*best_vec)
    return CalibResult(
        params=params,
        loss=best_loss,
        loss_trace=trace,
        fitted_ivs=model_ivs(chain, params),
        fixed_mask=mask,
        iterations_run=iterations,
    )


def calibrate_modes(chain: QuoteChain, mode: str, overrides: dict | None = None,
                    **config_kw) -> CalibResult:
    """Dispatch the three calibration modes.

    fix0: all five parameters free.
    fix2: vbar and lam frozen (defaults 0.0763 and 0.45; override with
          e.g. {"vbar": 0.073, "lam": 0.528}).
    fix5: every parameter frozen at the reference mean row; evaluation only.

    overrides may also supply any starting value for free parameters.
    """
    overrides = dict(overrides or {})
    start = {
        "v0": 0.05, "vbar": 0.05, "lam": FIX2_LAM, "eta": 1.0, "rho": 0.0,
    }
    if mode == "fix0":
        mask = (False, False, False, False, False)
    elif mode == "fix2":
        mask = (False, True, True, False, False)
        start["vbar"] = FIX2_VBAR
        start["lam"] = FIX2_LAM
    elif mode == "fix5":
        mask = (True, True, True, True, True)
        start = {k: getattr(TABLE_MEAN_PARAMS, k) for k in PARAM_NAMES}
    else:
        raise ValueError(f"unknown calibration mode {mode!r}")
    start.update(overrides)
    cfg = CalibConfig(initial=HestonParams(**start), fixed_mask=mask, **config_kw)
    return gradient_descent(chain, cfg)
