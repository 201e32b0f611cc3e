import math

import numpy as np
import pytest

from hestonlab.analytic import black76_greeks, price
from hestonlab.greeks import (correlation_sensitivity, fd_greeks,
                              pathwise_greeks, pw_lr_estimators)
from hestonlab.mc import simulate_mixing
from hestonlab.types import HestonParams, MarketSpec, SimConfig

GREEK_NAMES = ("delta", "gamma", "vega", "theta", "rho_rate")


def bs_closed_forms(s0, k, r, t, sigma):
    """Spot Black-Scholes delta/gamma/rho for the flat-vol estimators."""
    sq = sigma * math.sqrt(t)
    d_plus = (math.log(s0 / k) + (r + sigma**2 / 2) * t) / sq
    Phi = lambda x: 0.5 * math.erfc(-x / math.sqrt(2))
    phi = lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    return {
        "delta": Phi(d_plus),
        "gamma": phi(d_plus) / (s0 * sq),
        "rho": k * t * math.exp(-r * t) * Phi(d_plus - sq),
    }


class TestDegenerateCollapse:
    def test_all_five_equal_black_closed_forms(self, m_future):
        # eta=0, rho=0, v0=vbar and no mean reversion: paths are flat, the
        # estimators collapse to the Black formulas with zero noise
        p = HestonParams(0.04, 0.04, 0.0, 0.0, 0.0)
        gs = pathwise_greeks(m_future, p, SimConfig(64, 32, 1))
        ref = black76_greeks(100.0, 100.0, 0.05, 1.0, 0.2)
        for name, key in zip(GREEK_NAMES, ("delta", "gamma", "vega", "theta", "rho")):
            got = getattr(gs, name)
            assert got.value == pytest.approx(ref[key], abs=1e-12)
            assert got.std_error == pytest.approx(0.0, abs=1e-15)

    def test_mean_reversion_damps_vega_by_discrete_factor(self, m_future):
        # with lam > 0 a v0 bump decays toward vbar, so the exact vega of
        # the discretized deterministic model carries the damping factor
        # (1-(1-lam h)^n)/(lam h n); the other four remain pure Black
        p = HestonParams(0.04, 0.04, 1.2, 0.0, 0.0)
        n_t = 80
        h = 1.0 / n_t
        gs = pathwise_greeks(m_future, p, SimConfig(n_t, 16, 1))
        ref = black76_greeks(100.0, 100.0, 0.05, 1.0, 0.2)
        damp = (1 - (1 - 1.2 * h) ** n_t) / (1.2 * h * n_t)
        assert gs.vega.value == pytest.approx(ref["vega"] * damp, rel=1e-12)
        for name, key in zip(("delta", "gamma", "theta", "rho_rate"),
                             ("delta", "gamma", "theta", "rho")):
            assert getattr(gs, name).value == pytest.approx(ref[key], abs=1e-12)


class TestLedgerConsistency:
    def test_v0_bump_matches_ledger_per_path(self, m_future, p_base):
        eps = 1e-6
        cfg = SimConfig(100, 256, 7)
        base = simulate_mixing(m_future, p_base, cfg, with_derivatives=True)
        bumped = simulate_mixing(m_future, p_base.replace(v0=p_base.v0 + eps),
                                 cfg, with_derivatives=True)
        # paths that never truncate admit the pathwise derivative
        clean = np.all(base.v > 0, axis=1) & np.all(bumped.v > 0, axis=1)
        assert clean.sum() > 200
        fd = (bumped.y[clean, -1] - base.y[clean, -1]) / eps
        ledger = base.ledger.dy_dv0[clean, -1]
        rel = np.abs(fd - ledger) / np.maximum(np.abs(ledger), 1e-12)
        assert np.max(rel) < 1e-3

    def test_ledger_initial_conditions(self, m_future, p_base):
        batch = simulate_mixing(m_future, p_base, SimConfig(10, 20, 3),
                                with_derivatives=True)
        assert np.all(batch.ledger.dv_dv0[:, 0] == 1.0)
        assert np.all(batch.ledger.dy_dv0[:, 0] == 0.0)
        assert np.all(batch.ledger.dv_dh[:, 0] == 0.0)
        assert np.all(batch.ledger.dy_dh[:, 0] == 0.0)


class TestPathwiseVsFiniteDifference:
    def test_reference_setup_all_five(self, m_future, p_base):
        pw = pathwise_greeks(m_future, p_base, SimConfig(100, 100_000, 42))
        fd = fd_greeks(m_future, p_base)
        assert fd.notes == ()
        for name in GREEK_NAMES:
            a, b = getattr(pw, name), getattr(fd, name)
            tol = max(3 * a.std_error, 0.01 * abs(b.value))
            assert abs(a.value - b.value) <= tol, (name, a, b)

    def test_vega_noise_grows_with_forward(self, p_base):
        ses = []
        for f0 in (80.0, 100.0, 120.0):
            m = MarketSpec.from_future(f0, 100.0, 0.05, 1.0)
            gs = pathwise_greeks(m, p_base, SimConfig(50, 20_000, 9))
            ses.append(gs.vega.std_error)
        assert ses[0] <= ses[1] <= ses[2]


class TestFdGreeks:
    def test_futures_delta_parity(self, m_future, p_base):
        call = fd_greeks(m_future, p_base)
        put = fd_greeks(m_future.replace(style="put"), p_base)
        assert call.delta.value - put.delta.value == pytest.approx(
            math.exp(-0.05), abs=1e-6)

    def test_richardson_consistency(self, m_future, p_base):
        # at steps this small the O(step^2) truncation term is below 1e-6,
        # so extrapolation must agree with the plain estimate
        coarse = fd_greeks(m_future, p_base, steps={"f": 0.1})
        fine = fd_greeks(m_future, p_base, steps={"f": 0.05})
        richardson = (4 * fine.delta.value - coarse.delta.value) / 3
        assert abs(richardson - fine.delta.value) < 1e-6

    def test_tiny_step_flagged_unreliable(self, m_future, p_base):
        gs = fd_greeks(m_future, p_base, steps={"f": 1e-7})
        assert any("gamma" in n for n in gs.notes)


@pytest.fixture(scope="module")
def world():
    m = MarketSpec(100.0, 100.0, 0.05, 1.0)
    res = pw_lr_estimators(m, 0.2, SimConfig(1, 400_000, 7))
    ref = bs_closed_forms(100.0, 100.0, 0.05, 1.0, 0.2)
    return res, ref


class TestFlatVolEstimators:
    @pytest.mark.parametrize("method,greek,target", [
        ("pw", "delta", "delta"), ("pw", "rho_rate", "rho"),
        ("lr", "delta", "delta"), ("lr", "gamma", "gamma"),
        ("lr", "rho_rate", "rho"),
        ("lr-pw", "gamma", "gamma"), ("pw-lr", "gamma", "gamma"),
    ])
    def test_matches_closed_form(self, world, method, greek, target):
        res, ref = world
        gv = getattr(res[method], greek)
        assert abs(gv.value - ref[target]) <= 3 * gv.std_error

    def test_lr_and_pw_deltas_agree(self, world):
        res, _ = world
        a, b = res["pw"].delta, res["lr"].delta
        joint = math.hypot(a.std_error, b.std_error)
        assert abs(a.value - b.value) <= 3 * joint

    def test_vanishing_strike_pw_delta_is_martingale_one(self):
        m = MarketSpec(100.0, 1e-9, 0.05, 1.0)
        res = pw_lr_estimators(m, 0.2, SimConfig(1, 200_000, 3))
        # indicator always on: estimator averages e^{-rt} S_T / S0, a
        # martingale of mean one
        assert res["pw"].delta.value == pytest.approx(1.0, abs=3 * res["pw"].delta.std_error)

    def test_sigma_positive_required(self, m_base):
        with pytest.raises(ValueError):
            pw_lr_estimators(m_base, 0.0, SimConfig(1, 10, 1))


class TestCorrelationSensitivity:
    def test_rho_zero_drops_the_vega_part(self, m_future, p_base):
        # at rho=0 the -rho/(1-rho^2) prefactor vanishes, leaving only the
        # delta part through dY/drho = Int sqrt(v) dW1
        p = p_base.replace(rho=0.0)
        cfg = SimConfig(100, 20_000, 31)
        got = correlation_sensitivity(m_future, p, cfg)
        from hestonlab.mc import mixing_terminals
        from hestonlab.greeks import _black_pieces
        term = mixing_terminals(m_future, p, cfg)
        f_eff = m_future.f0 * np.exp(term["y_T"])
        sig_eff = np.sqrt(term["h"] * term["a_sum"] / m_future.t)
        B = _black_pieces(f_eff, m_future.k, m_future.r, m_future.t, sig_eff)
        delta_part = (B["delta"] * f_eff * term["iw_sum"]).mean()
        assert got.value == pytest.approx(delta_part, rel=1e-12)

    def test_matches_fd_in_rho(self, m_future, p_base):
        cs = correlation_sensitivity(m_future, p_base, SimConfig(100, 100_000, 42))
        step = 0.01
        fd = (price(m_future, p_base.replace(rho=p_base.rho + step)).value
              - price(m_future, p_base.replace(rho=p_base.rho - step)).value) / (2 * step)
        tol = max(3 * cs.std_error, 0.02 * abs(fd))
        assert abs(cs.value - fd) <= tol

    def test_sign_bracketing(self, m_future, p_base):
        cs = correlation_sensitivity(m_future, p_base, SimConfig(100, 50_000, 11))
        up = price(m_future, p_base.replace(rho=p_base.rho + 0.1)).value
        dn = price(m_future, p_base.replace(rho=p_base.rho - 0.1)).value
        assert math.copysign(1, up - dn) == math.copysign(1, cs.value)

    def test_extreme_rho_rejected(self, m_future, p_base):
        with pytest.raises(ValueError, match="rho"):
            correlation_sensitivity(m_future, p_base.replace(rho=0.9999),
                                    SimConfig(10, 10, 1))
