import json
from datetime import date
from pathlib import Path

import numpy as np
import pytest

import hestonlab.calibration as calibration
from hestonlab.calibration import (FIX2_LAM, FIX2_VBAR, TABLE_MEAN_PARAMS,
                                   CalibConfig, CalibrationError,
                                   ChainDataError, calibrate_modes,
                                   clamp_params, gradient_descent, iv_loss,
                                   load_chain, synthetic_chain)
from hestonlab.types import HestonParams

DATA_DIR = Path(__file__).resolve().parents[1] / "data" / "chains"

TRADE = date(2024, 4, 26)
EXPIRY = date(2025, 4, 26)  # 365 days -> t = 1.0

# round-trip truth and the strike template used by the shipped fixtures
TRUTH = HestonParams(0.073, 0.073, 0.45, 0.65, -0.15)
STRIKE_MULTS = np.array([0.30, 0.35, 0.40, 0.45, 0.50, 1.00,
                         1.70, 1.85, 2.00, 2.15, 2.30])


@pytest.fixture(scope="module")
def truth_chain():
    return synthetic_chain(TRUTH, 80.0, 80.0 * STRIKE_MULTS, TRADE, EXPIRY, 0.036)


class TestLoadChain:
    def test_cleaning_pipeline(self, tmp_path):
        f = tmp_path / "chain.csv"
        f.write_text("Strike,IV\n100,25.3%\n100,25.5%\n105,0.00%\n")
        chain = load_chain(f, close=100.0, trade_date=TRADE, expiry_date=EXPIRY, r=0.036)
        assert len(chain) == 1
        assert chain.strikes[0] == 100.0
        assert chain.ivs[0] == pytest.approx(0.254, rel=1e-12)
        assert chain.x[0] == pytest.approx(0.0, abs=1e-15)
        assert chain.t == pytest.approx(1.0)

    def test_all_near_zero_rows_is_an_error(self, tmp_path):
        f = tmp_path / "dead.csv"
        f.write_text("Strike,IV\n100,0.00%\n105,-0.5%\n110,0.01\n")
        with pytest.raises(ChainDataError, match="no usable rows"):
            load_chain(f, 100.0, TRADE, EXPIRY, 0.036)

    def test_unparseable_cell_names_the_row(self, tmp_path):
        f = tmp_path / "junk.csv"
        f.write_text("Strike,IV\n100,26.1%\noops,24.0%\n")
        with pytest.raises(ChainDataError, match="row 1"):
            load_chain(f, 100.0, TRADE, EXPIRY, 0.036)

    def test_missing_columns(self, tmp_path):
        f = tmp_path / "cols.csv"
        f.write_text("K,vol\n100,0.2\n")
        with pytest.raises(ChainDataError, match="missing column"):
            load_chain(f, 100.0, TRADE, EXPIRY, 0.036)

    def test_missing_values_dropped_currency_junk_stripped(self, tmp_path):
        f = tmp_path / "messy.csv"
        f.write_text('Strike,IV\n"1,250.00",31.5%\n,22%\n1300,\n1250,30.5%\n')
        chain = load_chain(f, 1000.0, TRADE, EXPIRY, 0.036)
        assert list(chain.strikes) == [1250.0]
        assert chain.ivs[0] == pytest.approx(0.31, rel=1e-12)

    def test_shipped_fixture_round_trips_bit_identically(self, tmp_path):
        src = DATA_DIR / "2024-04-24__2024-07-17.csv"
        meta = json.loads((DATA_DIR / "2024-04-24__2024-07-17.json").read_text())
        chain = load_chain(src, close=meta["close"],
                           trade_date=date.fromisoformat(meta["trade_date"]),
                           expiry_date=date.fromisoformat(meta["expiry_date"]),
                           r=meta["r"])
        out = tmp_path / "resaved.csv"
        chain.save_csv(out)
        again = load_chain(out, close=meta["close"],
                           trade_date=date.fromisoformat(meta["trade_date"]),
                           expiry_date=date.fromisoformat(meta["expiry_date"]),
                           r=meta["r"])
        assert np.array_equal(chain.strikes, again.strikes)
        assert np.array_equal(chain.ivs, again.ivs)

    def test_expiry_must_follow_trade_date(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("Strike,IV\n100,25%\n")
        with pytest.raises(ChainDataError, match="not after"):
            load_chain(f, 100.0, EXPIRY, TRADE, 0.036)


class TestIvLoss:
    def test_perfect_fit_is_zero(self, truth_chain):
        assert iv_loss(truth_chain, TRUTH) < 1e-12

    def test_positive_off_optimum(self, truth_chain):
        assert iv_loss(truth_chain, TRUTH.replace(v0=TRUTH.v0 + 0.01)) > 0.0

    def test_row_permutation_invariance(self, truth_chain):
        base = iv_loss(truth_chain, TABLE_MEAN_PARAMS)
        perm = truth_chain.permuted(np.random.default_rng(1).permutation(len(truth_chain)))
        assert iv_loss(perm, TABLE_MEAN_PARAMS) == base

    def test_frozen_regression_value(self):
        # independently recomputed with a scipy.quad pricer and bisection
        # inversion, then frozen; guards the whole loss pipeline
        meta = json.loads((DATA_DIR / "2024-04-24__2024-07-17.json").read_text())
        chain = load_chain(DATA_DIR / "2024-04-24__2024-07-17.csv",
                           close=meta["close"],
                           trade_date=date.fromisoformat(meta["trade_date"]),
                           expiry_date=date.fromisoformat(meta["expiry_date"]),
                           r=meta["r"])
        assert iv_loss(chain, TABLE_MEAN_PARAMS) == pytest.approx(
            1.2758790117998022e-05, rel=1e-6)


class TestClamp:
    def test_box_bounds(self):
        out = clamp_params(np.array([1.0, 1.0, 5.0, 9.0, 2.0]))
        assert out[0] == 0.12
        assert out[1] == 0.12 + 0.04
        assert out[2] == 2.0 and out[3] == 2.0 and out[4] == 0.5

    def test_vbar_window_follows_clamped_v0(self):
        out = clamp_params(np.array([0.01, 0.10, 0.5, 0.5, 0.0]))
        assert out[0] == 0.02
        assert out[1] == pytest.approx(0.06)  # max(0.02, 0.02+0.04)
        out = clamp_params(np.array([0.03, 0.001, 0.5, 0.5, 0.0]))
        assert out[1] == pytest.approx(0.02)  # floor binds below


class TestGradientDescent:
    def test_start_at_optimum_stays_there(self, truth_chain):
        cfg = CalibConfig(initial=TRUTH, fixed_mask=(False, True, True, False, False),
                          iterations=40)
        res = gradient_descent(truth_chain, cfg)
        assert res.loss <= res.loss_trace[0] + 1e-15
        for i, name in enumerate(("v0", "vbar", "lam", "eta", "rho")):
            assert abs(getattr(res.params, name) - TRUTH.as_tuple()[i]) < 10 * cfg.epsilon

    def test_best_seen_is_min_of_trace(self, truth_chain):
        res = calibrate_modes(truth_chain, "fix2",
                              overrides={"v0": 0.05, "eta": 0.9, "rho": 0.1},
                              iterations=25)
        assert res.loss == pytest.approx(min(res.loss_trace), rel=1e-12)

    def test_fixed_parameters_never_move(self, truth_chain):
        res = calibrate_modes(truth_chain, "fix2", iterations=10)
        assert res.params.vbar == FIX2_VBAR
        assert res.params.lam == FIX2_LAM
        assert res.fixed_mask == (False, True, True, False, False)

    def test_result_within_bounds(self, truth_chain):
        res = calibrate_modes(truth_chain, "fix0", iterations=15)
        p = res.params
        assert 0.02 <= p.v0 <= 0.12
        assert max(0.02, p.v0 - 0.04) <= p.vbar <= max(0.02, p.v0 + 0.04)
        assert -2 <= p.lam <= 2 and 0 <= p.eta <= 2 and -0.5 <= p.rho <= 0.5

    def test_loss_recomputes_to_reported_value(self, truth_chain):
        res = calibrate_modes(truth_chain, "fix2", iterations=10)
        assert iv_loss(truth_chain, res.params) == pytest.approx(res.loss, abs=1e-12)

    def test_nan_loss_aborts_with_trace(self, truth_chain, monkeypatch):
        calls = {"n": 0}
        real = calibration.iv_loss

        def poisoned(chain, p):
            calls["n"] += 1
            if calls["n"] > 3:
                return float("nan")
            return real(chain, p)

        monkeypatch.setattr(calibration, "iv_loss", poisoned)
        cfg = CalibConfig(initial=TRUTH, iterations=5)
        with pytest.raises(CalibrationError) as exc_info:
            gradient_descent(truth_chain, cfg)
        assert len(exc_info.value.trace) >= 1

    def test_fix2_round_trip_single_start(self, truth_chain):
        res = calibrate_modes(truth_chain, "fix2",
                              overrides={"v0": 0.05, "eta": 1.0, "rho": 0.0})
        assert res.loss < 1e-5
        for name, idx in (("v0", 0), ("eta", 3), ("rho", 4)):
            tgt = TRUTH.as_tuple()[idx]
            assert abs(getattr(res.params, name) - tgt) <= max(0.10 * abs(tgt), 0.02)


class TestModes:
    def test_fix5_is_pure_evaluation(self, truth_chain):
        res = calibrate_modes(truth_chain, "fix5")
        assert res.iterations_run == 0
        assert len(res.loss_trace) == 1
        for name in ("v0", "vbar", "lam", "eta", "rho"):
            assert getattr(res.params, name) == getattr(TABLE_MEAN_PARAMS, name)

    def test_fix5_two_chains_mirroring_two_dates(self):
        # the all-frozen mode evaluated on two different synthetic chains
        chains = []
        for stem in ("2024-04-24__2024-07-17", "2024-04-26__2024-07-17"):
            meta = json.loads((DATA_DIR / f"{stem}.json").read_text())
            chains.append(load_chain(
                DATA_DIR / f"{stem}.csv", close=meta["close"],
                trade_date=date.fromisoformat(meta["trade_date"]),
                expiry_date=date.fromisoformat(meta["expiry_date"]), r=meta["r"]))
        losses = [calibrate_modes(c, "fix5").loss for c in chains]
        assert all(l > 0 for l in losses)
        assert losses[0] != losses[1]

    def test_fix2_override_reaches_alternate_constants(self, truth_chain):
        res = calibrate_modes(truth_chain, "fix2",
                              overrides={"vbar": 0.073, "lam": 0.528},
                              iterations=0)
        assert res.params.vbar == 0.073
        assert res.params.lam == 0.528

    def test_unknown_mode(self, truth_chain):
        with pytest.raises(ValueError):
            calibrate_modes(truth_chain, "fix7")

    def test_pipeline_on_all_fixture_cells(self):
        # 3 trade dates x 5 expiries: structure test on the shipped fixtures
        stems = sorted(f.stem for f in DATA_DIR.glob("*.csv"))
        assert len(stems) == 15
        dates, expiries = set(), set()
        for stem in stems:
            tr, ex = stem.split("__")
            dates.add(tr)
            expiries.add(ex)
        assert len(dates) == 3 and len(expiries) == 5
        for stem in stems[::4]:  # sample cells; each runs a short descent
            meta = json.loads((DATA_DIR / f"{stem}.json").read_text())
            chain = load_chain(DATA_DIR / f"{stem}.csv", close=meta["close"],
                               trade_date=date.fromisoformat(meta["trade_date"]),
                               expiry_date=date.fromisoformat(meta["expiry_date"]),
                               r=meta["r"])
            res = calibrate_modes(chain, "fix2", iterations=5)
            assert np.isfinite(res.loss)
            assert len(res.fitted_ivs) == len(chain)
