import numpy as np
import pytest

from hestonlab.types import HestonParams, MarketSpec


@pytest.fixture
def p_base() -> HestonParams:
    """The workhorse parameter set: v0=vbar=0.04, lam=1.2, eta=0.3, rho=-0.5."""
    return HestonParams(v0=0.04, vbar=0.04, lam=1.2, eta=0.3, rho=-0.5)


@pytest.fixture
def m_base() -> MarketSpec:
    """ATM call, S0=K=100, r=5%, one year."""
    return MarketSpec(s0=100.0, k=100.0, r=0.05, t=1.0, style="call")


@pytest.fixture
def m_future() -> MarketSpec:
    """Futures-quoted ATM call at F0=100."""
    return MarketSpec.from_future(100.0, 100.0, 0.05, 1.0)
