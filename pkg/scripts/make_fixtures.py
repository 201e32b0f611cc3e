#!/usr/bin/env python3
"""Regenerate the synthetic option-chain fixtures in data/chains/.

15 chains (3 trade dates x 5 expiries, WTI-flavored dates) sampled from
the model around the reference mean parameters, with small deterministic
per-cell offsets so the calibration pipeline sees non-identical inputs.
Each chain ships as <trade>__<expiry>.csv plus a JSON sidecar with the
close/date/rate metadata the loader needs.
"""

from __future__ import annotations

import json
import sys
from datetime import date
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hestonlab.calibration import TABLE_MEAN_PARAMS, synthetic_chain
from hestonlab.types import HestonParams

TRADE_DATES = [date(2024, 4, 24), date(2024, 4, 25), date(2024, 4, 26)]
EXPIRIES = [date(2024, 6, 14), date(2024, 7, 17), date(2024, 8, 15),
            date(2024, 9, 17), date(2024, 10, 17)]
RATE = 0.036
STRIKE_MULTS = np.array([0.30, 0.35, 0.40, 0.45, 0.50, 1.00,
                         1.70, 1.85, 2.00, 2.15, 2.30])


def cell_params(i: int, j: int) -> HestonParams:
    base = TABLE_MEAN_PARAMS
    return HestonParams(
        v0=base.v0 + 0.002 * j - 0.001 * i,
        vbar=base.vbar + 0.0015 * j,
        lam=base.lam,
        eta=base.eta + 0.03 * ((i + j) % 3 - 1),
        rho=base.rho + 0.02 * (j % 2) - 0.015 * i,
    )


def main() -> None:
    out_dir = Path(__file__).resolve().parents[1] / "data" / "chains"
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, trade in enumerate(TRADE_DATES):
        close = 82.0 - 0.6 * i
        for j, expiry in enumerate(EXPIRIES):
            p = cell_params(i, j)
            t = (expiry - trade).days / 365.0
            # wings at constant sigma-distance: log-moneyness shrinks with sqrt(t)
            mults = np.exp(np.log(STRIKE_MULTS) * np.sqrt(t))
            strikes = np.round(close * mults, 2)
            chain = synthetic_chain(p, close, strikes, trade, expiry, RATE)
            stem = f"{trade.isoformat()}__{expiry.isoformat()}"
            chain.save_csv(out_dir / f"{stem}.csv")
            meta = {
                "close": close,
                "trade_date": trade.isoformat(),
                "expiry_date": expiry.isoformat(),
                "r": RATE,
            }
            (out_dir / f"{stem}.json").write_text(
                json.dumps(meta, sort_keys=True, indent=2) + "\n")
            print(f"wrote {stem} ({len(chain)} strikes)")


if __name__ == "__main__":
    main()
