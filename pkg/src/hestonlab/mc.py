"""Path simulation and Monte Carlo pricing: crude Euler and mixing schemes.

Crude scheme (two correlated drivers, price simulated directly):

    S_{i+1} = S_i + r S_i h + sqrt(v_i) S_i Z1_i
    v_{i+1} = v_i - lam (v_i - vbar) h + eta sqrt(v_i) (rho Z1_i + sqrt(1-rho^2) Z2_i)

Mixing scheme (variance path plus the correlated log-factor Y, both
driven by the SAME normal stream):

    Y_{i+1} = Y_i - (rho^2/2) v_i h + rho sqrt(v_i) Z_i
    v_{i+1} = v_i - lam (v_i - vbar) h + eta sqrt(v_i) Z_i

with Z ~ N(0, h), generated as sqrt(h) * Z' for unit normals Z'. The
mixing estimator averages per-path conditional Black-Scholes values at
the effective level S0*e^{Y(T)} and effective volatility
sqrt((1-rho^2) * h * sum_i v_i / T) (left-endpoint sum).

Negative variance is handled by full truncation: the recursion keeps the
signed v but every sqrt(v) and every v inside a drift/diffusion
coefficient reads max(v, 0). Calibrated parameter sets violate the
Feller condition, so negative excursions are a matter of course, not an
edge case.

Paths are simulated in fixed-size chunks (rng.CHUNK_PATHS) with one RNG
substream per chunk, and reductions run in chunk order, so results are
bitwise identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import bs_call_vec, bs_put_vec, price
from .rng import RandomSource, path_chunks, worker_count
from .types import HestonParams, MarketSpec, SimConfig

__all__ = [
    "PathBatch",
    "DerivLedger",
    "McEstimate",
    "simulate_crude",
    "simulate_mixing",
    "price_crude_mc",
    "price_mixing_mc",
    "convergence_study",
]


@dataclass
class DerivLedger:
    """Pathwise derivative trajectories co-evolved with (v, Y).

    Initial conditions: dv_dv0 = 1, dy_dv0 = 0, dv_dh = 0, dy_dh = 0.
    Shapes are (n_p, n_t+1), matching PathBatch.
    """

    dv_dv0: np.ndarray
    dy_dv0: np.ndarray
    dv_dh: np.ndarray
    dy_dh: np.ndarray


@dataclass
class PathBatch:
    """Simulated trajectories for one scheme.

    v holds the signed (pre-truncation) variance path; downstream
    consumers must truncate before taking square roots. s is populated
    by the crude scheme, y by the mixing scheme.
    """

    h: float
    scheme: str
    v: np.ndarray
    s: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    ledger: Optional[DerivLedger] = None


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_p: int


# ---------------------------------------------------------------------------
# chunk kernels
# ---------------------------------------------------------------------------

def _crude_chunk(seed: int, stream_id: int, n_paths: int, n_t: int, h: float,
                 s0: float, r: float, p: HestonParams, keep_paths: bool):
    z = RandomSource(seed, stream_id).normals((n_paths, 2 * n_t))
    z1 = np.ascontiguousarray(z[:, :n_t].T) * math.sqrt(h)
    z2 = np.ascontiguousarray(z[:, n_t:].T) * math.sqrt(h)
    s = np.full(n_paths, s0)
    v = np.full(n_paths, p.v0)
    rho_bar = math.sqrt(1.0 - p.rho**2)
    s_traj = v_traj = None
    if keep_paths:
        s_traj = np.empty((n_paths, n_t + 1))
        v_traj = np.empty((n_paths, n_t + 1))
        s_traj[:, 0] = s
        v_traj[:, 0] = v
    for i in range(n_t):
        vp = np.maximum(v, 0.0)
        sq = np.sqrt(vp)
        s = s + r * s * h + sq * s * z1[i]
        v = v - p.lam * (vp - p.vbar) * h + p.eta * sq * (p.rho * z1[i] + rho_bar * z2[i])
        if keep_paths:
            s_traj[:, i + 1] = s
            v_traj[:, i + 1] = v
    return {"s_T": s, "v_T": v, "s_traj": s_traj, "v_traj": v_traj}


def _mixing_chunk(seed: int, stream_id: int, n_paths: int, n_t: int, h: float,
                  p: HestonParams, want_ledgers: bool, keep_paths: bool):
    zu = RandomSource(seed, stream_id).normals((n_paths, n_t))
    zu = np.ascontiguousarray(zu.T)  # (n_t, n_paths), unit normals Z'
    sqrt_h = math.sqrt(h)
    v = np.full(n_paths, p.v0)
    y = np.zeros(n_paths)
    a_sum = np.zeros(n_paths)   # sum of truncated v over left endpoints
    iw_sum = np.zeros(n_paths)  # sum sqrt(v+) Z_i  (the W1 integral, for drho)
    dv = np.ones(n_paths) if want_ledgers else None
    dy = np.zeros(n_paths) if want_ledgers else None
    dvh = np.zeros(n_paths) if want_ledgers else None
    dyh = np.zeros(n_paths) if want_ledgers else None
    sum_dv = np.zeros(n_paths) if want_ledgers else None
    sum_dvh = np.zeros(n_paths) if want_ledgers else None
    trunc_count = np.zeros(n_paths, dtype=np.int64)

    traj = None
    if keep_paths:
        traj = {
            "v": np.empty((n_paths, n_t + 1)),
            "y": np.empty((n_paths, n_t + 1)),
        }
        traj["v"][:, 0] = v
        traj["y"][:, 0] = y
        if want_ledgers:
            for name in ("dv_dv0", "dy_dv0", "dv_dh", "dy_dh"):
                traj[name] = np.empty((n_paths, n_t + 1))
            traj["dv_dv0"][:, 0] = 1.0
            traj["dy_dv0"][:, 0] = 0.0
            traj["dv_dh"][:, 0] = 0.0
            traj["dy_dh"][:, 0] = 0.0

    for i in range(n_t):
        vp = np.maximum(v, 0.0)
        gate = v > 0.0
        trunc_count += ~gate
        sq = np.sqrt(vp)
        z = sqrt_h * zu[i]  # Z_i ~ N(0, h)
        a_sum += vp
        iw_sum += sq * z

        if want_ledgers:
            # singular 1/sqrt(v) pieces contribute nothing on truncated steps
            inv_sq = np.where(gate, 0.5 * z / np.where(gate, sq, 1.0), 0.0)
            sum_dv += np.where(gate, dv, 0.0)
            sum_dvh += np.where(gate, dvh, 0.0)
            dy = dy + (-0.5 * p.rho**2 * h + p.rho * inv_sq) * dv
            dv_new = (1.0 - p.lam * h + p.eta * inv_sq) * dv
            vh_term = vp / h + dvh
            dyh = dyh - 0.5 * (p.rho**2 * h * vh_term) + p.rho * inv_sq * vh_term
            dvh = (1.0 - p.lam * h) * dvh - p.lam * (vp - p.vbar) + p.eta * inv_sq * vh_term
            dv = dv_new

        y = y - 0.5 * p.rho**2 * vp * h + p.rho * sq * z
        v = v - p.lam * (vp - p.vbar) * h + p.eta * sq * z

        if keep_paths:
            traj["v"][:, i + 1] = v
            traj["y"][:, i + 1] = y
            if want_ledgers:
                traj["dv_dv0"][:, i + 1] = dv
                traj["dy_dv0"][:, i + 1] = dy
                traj["dv_dh"][:, i + 1] = dvh
                traj["dy_dh"][:, i + 1] = dyh

    return {
        "y_T": y, "v_T": v, "a_sum": a_sum, "iw_sum": iw_sum,
        "dv_T": dv, "dy_T": dy, "dvh_T": dvh, "dyh_T": dyh,
        "sum_dv": sum_dv, "sum_dvh": sum_dvh,
        "trunc_count": trunc_count, "traj": traj,
    }


def _run_chunks(fn, n_p: int):
    """Run a chunk kernel over all path chunks, in order, optionally threaded."""
    jobs = list(path_chunks(n_p))
    workers = worker_count()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: fn(*j), jobs))
    else:
        results = [fn(*j) for j in jobs]
    return results


def _concat(results, key):
    parts = [r[key] for r in results]
    if parts[0] is None:
        return None
    return np.concatenate(parts, axis=0)


# ---------------------------------------------------------------------------
# public simulation API
# ---------------------------------------------------------------------------

def simulate_crude(m: MarketSpec, p: HestonParams, cfg: SimConfig) -> PathBatch:
    """Full crude-scheme trajectories; memory is n_p * (n_t+1) * 2 doubles."""
    if cfg.scheme != "crude":
        raise ValueError(f"simulate_crude needs cfg.scheme='crude', got {cfg.scheme!r}")
    h = cfg.step(m.t)
    results = _run_chunks(
        lambda sid, n: _crude_chunk(cfg.seed, sid, n, cfg.n_t, h, m.s0, m.r, p, True),
        cfg.n_p,
    )
    return PathBatch(h=h, scheme="crude",
                     v=_concat(results, "v_traj"), s=_concat(results, "s_traj"))


def simulate_mixing(m: MarketSpec, p: HestonParams, cfg: SimConfig,
                    with_derivatives: bool = False) -> PathBatch:
    """Full mixing-scheme trajectories, optionally with derivative ledgers."""
    if cfg.scheme != "mixing":
        raise ValueError(f"simulate_mixing needs cfg.scheme='mixing', got {cfg.scheme!r}")
    h = cfg.step(m.t)
    results = _run_chunks(
        lambda sid, n: _mixing_chunk(cfg.seed, sid, n, cfg.n_t, h, p,
                                     with_derivatives, True),
        cfg.n_p,
    )
    trajs = [r["traj"] for r in results]
    v = np.concatenate([t["v"] for t in trajs], axis=0)
    y = np.concatenate([t["y"] for t in trajs], axis=0)
    ledger = None
    if with_derivatives:
        ledger = DerivLedger(
            dv_dv0=np.concatenate([t["dv_dv0"] for t in trajs], axis=0),
            dy_dv0=np.concatenate([t["dy_dv0"] for t in trajs], axis=0),
            dv_dh=np.concatenate([t["dv_dh"] for t in trajs], axis=0),
            dy_dh=np.concatenate([t["dy_dh"] for t in trajs], axis=0),
        )
    return PathBatch(h=h, scheme="mixing", v=v, y=y, ledger=ledger)


def mixing_terminals(m: MarketSpec, p: HestonParams, cfg: SimConfig,
                     want_ledgers: bool = False) -> dict:
    """Streaming mixing run: terminal values and running sums only.

    Keys: y_T, v_T, a_sum (left-endpoint sum of truncated v), iw_sum
    (sum sqrt(v+) Z), ledger terminals and their left-endpoint sums, and
    trunc_count per path. Constant memory in n_t.
    """
    h = cfg.step(m.t)
    results = _run_chunks(
        lambda sid, n: _mixing_chunk(cfg.seed, sid, n, cfg.n_t, h, p,
                                     want_ledgers, False),
        cfg.n_p,
    )
    out = {k: _concat(results, k) for k in
           ("y_T", "v_T", "a_sum", "iw_sum", "dv_T", "dy_T", "dvh_T", "dyh_T",
            "sum_dv", "sum_dvh", "trunc_count")}
    out["h"] = h
    return out


def price_crude_mc(m: MarketSpec, p: HestonParams, cfg: SimConfig) -> McEstimate:
    """Discounted mean of terminal payoffs over crude-scheme paths."""
    if cfg.scheme != "crude":
        raise ValueError(f"price_crude_mc needs cfg.scheme='crude', got {cfg.scheme!r}")
    h = cfg.step(m.t)
    results = _run_chunks(
        lambda sid, n: _crude_chunk(cfg.seed, sid, n, cfg.n_t, h, m.s0, m.r, p, False),
        cfg.n_p,
    )
    s_T = _concat(results, "s_T")
    if m.style == "call":
        payoff = np.maximum(s_T - m.k, 0.0)
    else:
        payoff = np.maximum(m.k - s_T, 0.0)
    disc = math.exp(-m.r * m.t) * payoff
    se = disc.std(ddof=1) / math.sqrt(cfg.n_p) if cfg.n_p > 1 else 0.0
    return McEstimate(value=float(disc.mean()), std_error=float(se), n_p=cfg.n_p)


def price_mixing_mc(m: MarketSpec, p: HestonParams, cfg: SimConfig) -> McEstimate:
    """Average of per-path conditional Black-Scholes values (mixing scheme)."""
    if cfg.scheme != "mixing":
        raise ValueError(f"price_mixing_mc needs cfg.scheme='mixing', got {cfg.scheme!r}")
    term = mixing_terminals(m, p, cfg, want_ledgers=False)
    s_eff = m.s0 * np.exp(term["y_T"])
    sig_eff = np.sqrt((1.0 - p.rho**2) * term["h"] * term["a_sum"] / m.t)
    if m.style == "call":
        vals = bs_call_vec(s_eff, m.k, m.r, m.t, sig_eff)
    else:
        vals = bs_put_vec(s_eff, m.k, m.r, m.t, sig_eff)
    se = vals.std(ddof=1) / math.sqrt(cfg.n_p) if cfg.n_p > 1 else 0.0
    return McEstimate(value=float(vals.mean()), std_error=float(se), n_p=cfg.n_p)


def convergence_study(m: MarketSpec, p: HestonParams, n_p_list, replications: int,
                      n_t: int, seed: int = 0) -> list[dict]:
    """Mean |estimate - analytic| per path count, for both schemes.

    Replication k of every (scheme, n_p) cell runs with seed seed+k, so
    schemes are compared on common random numbers. Rows come back as
    {"n_p", "err_crude", "err_mixing"} dicts, ready for CSV emission.
    """
    ref = price(m, p).value
    rows = []
    for n_p in n_p_list:
        errs = {"crude": [], "mixing": []}
        for k in range(replications):
            for scheme in ("crude", "mixing"):
                cfg = SimConfig(n_t=n_t, n_p=n_p, seed=seed + k, scheme=scheme)
                est = price_crude_mc(m, p, cfg) if scheme == "crude" else price_mixing_mc(m, p, cfg)
                errs[scheme].append(abs(est.value - ref))
        rows.append({
            "n_p": n_p,
            "err_crude": float(np.mean(errs["crude"])),
            "err_mixing": float(np.mean(errs["mixing"])),
        })
    return rows
