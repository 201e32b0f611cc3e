"""Heston stochastic-volatility pricing and calibration toolkit."""

from .analytic import (CfCoefficients, PriceQuote, QuadratureError,
                       black76_greeks, black76_price, black_scholes_call,
                       black_scholes_put, call_values_on_strikes,
                       cf_coefficients, heston_prob, price,
                       price_deterministic_vol, sigma_star)
from .calibration import (CalibConfig, CalibrationError, CalibResult,
                          ChainDataError, QuoteChain, calibrate_modes,
                          gradient_descent, iv_loss, load_chain,
                          synthetic_chain)
from .greeks import (GreekSet, GreekValue, correlation_sensitivity, fd_greeks,
                     pathwise_greeks, pw_lr_estimators)
from .implied_vol import (OutOfBandError, SmileCurve, SweepDiagnostics,
                          implied_vol, parameter_sweep, smile)
from .mc import (DerivLedger, McEstimate, PathBatch, convergence_study,
                 price_crude_mc, price_mixing_mc, simulate_crude,
                 simulate_mixing)
from .rng import RandomSource
from .types import (HestonParams, MarketSpec, SimConfig, ValidationReport,
                    validate_market, validate_params)

__version__ = "0.1.0"
