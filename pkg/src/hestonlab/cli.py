"""Command-line front door: pricing, simulation, Greeks, smiles, calibration.

Every run is reproducible: the resolved configuration (seed included) is
echoed into the output itself, JSON outputs under a "config" key and CSV
outputs as a leading "# config: {...}" comment line. Identical argv and
seed produce byte-identical output regardless of HESTON_LAB_THREADS.

Exit codes: 0 success, 2 input/usage errors, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import date

import numpy as np

from .analytic import QuadratureError, price
from .calibration import (CalibrationError, ChainDataError, calibrate_modes,
                          load_chain)
from .greeks import correlation_sensitivity, fd_greeks, pathwise_greeks
from .implied_vol import OutOfBandError, parameter_sweep, smile
from .mc import convergence_study, price_crude_mc, price_mixing_mc
from .types import HestonParams, MarketSpec, SimConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

DEFAULTS = dict(s0=100.0, k=100.0, r=0.05, t=1.0,
                v0=0.04, vbar=0.04, lam=1.2, eta=0.3, rho=-0.5)


def _add_market_flags(sp, with_f0=True):
    sp.add_argument("--s0", type=float, default=DEFAULTS["s0"], help="spot level")
    if with_f0:
        sp.add_argument("--f0", type=float, default=None,
                        help="futures level; overrides --s0 (spot = f0*e^{-rt})")
    sp.add_argument("--k", type=float, default=DEFAULTS["k"], help="strike")
    sp.add_argument("--r", type=float, default=DEFAULTS["r"], help="risk-free rate")
    sp.add_argument("--t", type=float, default=DEFAULTS["t"], help="maturity (years)")
    sp.add_argument("--style", choices=("call", "put"), default="call")


def _add_param_flags(sp):
    for name in ("v0", "vbar", "lam", "eta", "rho"):
        sp.add_argument(f"--{name}", type=float, default=DEFAULTS[name])


def _add_out_flags(sp):
    sp.add_argument("--out", default=None, help="output path (default stdout)")
    sp.add_argument("--format", choices=("csv", "json"), default=None,
                    help="override the natural output form (objects: json, tables: csv)")


def _grid_flags(sp, choices):
    sp.add_argument("--grid-var", choices=choices, default=None)
    sp.add_argument("--grid", default=None, help="lo:hi:n grid for --grid-var")


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, n = spec.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except Exception as exc:
        raise ValueError(f"bad grid spec {spec!r}, want lo:hi:n") from exc


def _market(args) -> MarketSpec:
    if getattr(args, "f0", None) is not None:
        return MarketSpec.from_future(args.f0, args.k, args.r, args.t, args.style)
    return MarketSpec(args.s0, args.k, args.r, args.t, args.style)


def _params(args) -> HestonParams:
    return HestonParams(args.v0, args.vbar, args.lam, args.eta, args.rho)


def _config_echo(args) -> dict:
    skip = {"func", "out"}
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in skip or callable(v):
            continue
        cfg[k] = v
    return cfg


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolve_format(args, natural: str) -> str:
    fmt = args.format or natural
    args.format = fmt  # echoed in the config
    return fmt


def _emit_object(args, payload: dict) -> None:
    """Scalar result: JSON object by default, key,value CSV on request."""
    if _resolve_format(args, "json") == "csv":
        cfg = json.dumps(_config_echo(args), sort_keys=True)
        lines = [f"# config: {cfg}", "key,value"]
        for k, v in payload.items():
            cell = json.dumps(v)
            if "," in cell:
                cell = f'"{cell}"'
            lines.append(f"{k},{cell}")
        _emit(args, "\n".join(lines) + "\n")
        return
    payload = {"config": _config_echo(args), **payload}
    _emit(args, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _emit_table(args, header: list[str], rows: list[list]) -> None:
    """Tabular result: plot-ready CSV by default, JSON rows on request."""
    if _resolve_format(args, "csv") == "json":
        payload = {
            "config": _config_echo(args),
            "rows": [dict(zip(header, row)) for row in rows],
        }
        _emit(args, json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return
    cfg = json.dumps(_config_echo(args), sort_keys=True)
    lines = [f"# config: {cfg}", ",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) if isinstance(c, (str, int)) else repr(float(c))
                              for c in row))
    _emit(args, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_price(args) -> int:
    if args.grid_var:
        grid = _parse_grid(args.grid)
        rows = []
        for gv in grid:
            m, p = _market(args), _params(args)
            if args.grid_var == "s0":
                m = m.replace(s0=float(gv))
            else:
                p = p.replace(v0=float(gv))
            q = price(m, p)
            rows.append([args.grid_var, float(gv), q.value])
        _emit_table(args, ["grid_var", "grid_value", "value"], rows)
        return EXIT_OK
    q = price(_market(args), _params(args))
    _emit_object(args, {
        "value": q.value,
        "probs": list(q.probs),
        "quadrature_error": q.quadrature_error,
    })
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = SimConfig(n_t=args.nt, n_p=args.np, seed=args.seed, scheme=args.scheme)
    pricer = price_crude_mc if args.scheme == "crude" else price_mixing_mc
    if args.grid_var:
        grid = _parse_grid(args.grid)
        rows = []
        for gv in grid:
            m, p = _market(args), _params(args)
            if args.grid_var == "s0":
                m = m.replace(s0=float(gv))
            else:
                p = p.replace(v0=float(gv))
            est = pricer(m, p, cfg)
            rows.append([args.grid_var, float(gv), est.value, est.std_error])
        _emit_table(args, ["grid_var", "grid_value", "value", "std_error"], rows)
        return EXIT_OK
    est = pricer(_market(args), _params(args), cfg)
    _emit_object(args, {"value": est.value, "std_error": est.std_error, "n_p": est.n_p})
    return EXIT_OK


def _cmd_greeks(args) -> int:
    cfg = SimConfig(n_t=args.nt, n_p=args.np, seed=args.seed, scheme="mixing")
    base_f0 = args.f0 if args.f0 is not None else args.s0 * math.exp(args.r * args.t)
    grid = _parse_grid(args.grid) if args.grid_var else np.array([math.nan])
    rows = []
    for gv in grid:
        f0, p = base_f0, _params(args)
        if args.grid_var == "f0":
            f0 = float(gv)
        elif args.grid_var == "v0":
            p = p.replace(v0=float(gv))
        m = MarketSpec.from_future(f0, args.k, args.r, args.t, args.style)
        gval = float(gv) if args.grid_var else f0
        gname = args.grid_var or "f0"
        pw = pathwise_greeks(m, p, cfg)
        fd = fd_greeks(m, p)
        for greek in ("delta", "gamma", "vega", "theta", "rho_rate"):
            a = getattr(pw, greek)
            b = getattr(fd, greek)
            rows.append([gname, gval, greek, "pathwise-mixing", a.value, a.std_error])
            rows.append([gname, gval, greek, "finite-difference", b.value, b.std_error])
        if args.rho_corr:
            cs = correlation_sensitivity(m, p, cfg)
            step = 0.01
            fd_c = (price(m, p.replace(rho=p.rho + step)).value
                    - price(m, p.replace(rho=p.rho - step)).value) / (2 * step)
            rows.append([gname, gval, "rho_corr", "pathwise-mixing", cs.value, cs.std_error])
            rows.append([gname, gval, "rho_corr", "finite-difference", fd_c, 0.0])
    _emit_table(args, ["grid_var", "grid_value", "greek", "method", "value", "std_error"],
                rows)
    return EXIT_OK


def _cmd_smile(args) -> int:
    strikes = _parse_grid(args.strikes)
    m = _market(args)
    base = _params(args)
    rows = []
    if args.sweep:
        values = [float(v) for v in args.values.split(",")]
        for val, curve, _diag in parameter_sweep(args.sweep, values, base, m, strikes):
            for k, iv in zip(curve.strikes, curve.ivs):
                rows.append([args.sweep, val, float(k), float(iv)])
    else:
        curve = smile(base, m, strikes)
        for k, iv in zip(curve.strikes, curve.ivs):
            rows.append(["none", 0.0, float(k), float(iv)])
    _emit_table(args, ["param_name", "param_value", "strike", "iv"], rows)
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    meta = {}
    if args.meta:
        with open(args.meta) as fh:
            meta = json.load(fh)
    close = args.close if args.close is not None else meta.get("close")
    trade = args.trade_date or meta.get("trade_date")
    expiry = args.expiry_date or meta.get("expiry_date")
    r = args.rate if args.rate is not None else meta.get("r", 0.036)
    if close is None or trade is None or expiry is None:
        raise ValueError("calibrate needs close, trade_date and expiry_date "
                         "(flags or --meta JSON)")
    chain = load_chain(args.chain, close=float(close),
                       trade_date=date.fromisoformat(str(trade)),
                       expiry_date=date.fromisoformat(str(expiry)), r=float(r))
    overrides = {}
    for item in args.override or []:
        name, _, value = item.partition("=")
        overrides[name] = float(value)
    result = calibrate_modes(
        chain, args.mode, overrides=overrides,
        iterations=args.iterations, epsilon=args.epsilon,
        initial_learning_rate=args.lr0, learn_deno=args.learn_deno,
        decay_level=args.decay_level,
    )
    if args.fit_csv:
        lines = ["strike,market_iv,model_iv"]
        for k, miv, fiv in zip(chain.strikes, chain.ivs, result.fitted_ivs):
            lines.append(f"{float(k)!r},{float(miv)!r},{float(fiv)!r}")
        with open(args.fit_csv, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    _emit_object(args, {
        "params": {n: getattr(result.params, n) for n in ("v0", "vbar", "lam", "eta", "rho")},
        "loss": result.loss,
        "iterations_run": result.iterations_run,
        "fixed_mask": list(result.fixed_mask),
        "loss_trace": result.loss_trace,
        "fitted": [
            {"strike": float(k), "market_iv": float(miv), "model_iv": float(fiv)}
            for k, miv, fiv in zip(chain.strikes, chain.ivs, result.fitted_ivs)
        ],
    })
    return EXIT_OK


def _cmd_convergence(args) -> int:
    n_p_list = [int(v) for v in args.np_list.split(",")]
    m = _market(args)
    p = _params(args)
    study = convergence_study(m, p, n_p_list, replications=args.reps,
                              n_t=args.nt, seed=args.seed)
    rows = [[row["n_p"], row["err_crude"], row["err_mixing"]] for row in study]
    _emit_table(args, ["n_p", "err_crude", "err_mixing"], rows)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    ap = argparse.ArgumentParser(
        prog="hestonlab",
        description="Heston pricing, Monte Carlo, Greeks, smiles and calibration",
    )
    ap.add_argument("--config", default=None,
                    help="JSON file of flag defaults (argv wins)")
    sub = ap.add_subparsers(dest="command", required=True)
    subparsers = {}

    sp = subparsers["price"] = sub.add_parser("price", help="analytic Fourier price")
    _add_market_flags(sp)
    _add_param_flags(sp)
    _grid_flags(sp, ("s0", "v0"))
    _add_out_flags(sp)
    sp.set_defaults(func=_cmd_price)

    sp = subparsers["simulate"] = sub.add_parser("simulate", help="Monte Carlo price estimate")
    _add_market_flags(sp)
    _add_param_flags(sp)
    sp.add_argument("--scheme", choices=("crude", "mixing"), default="mixing")
    sp.add_argument("--nt", type=int, default=1000)
    sp.add_argument("--np", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    _grid_flags(sp, ("s0", "v0"))
    _add_out_flags(sp)
    sp.set_defaults(func=_cmd_simulate)

    sp = subparsers["greeks"] = sub.add_parser("greeks", help="pathwise mixing Greeks vs finite differences")
    _add_market_flags(sp)
    _add_param_flags(sp)
    sp.add_argument("--nt", type=int, default=100)
    sp.add_argument("--np", type=int, default=100000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--rho-corr", action="store_true",
                    help="include the correlation sensitivity rows")
    _grid_flags(sp, ("f0", "v0"))
    _add_out_flags(sp)
    sp.set_defaults(func=_cmd_greeks)

    sp = subparsers["smile"] = sub.add_parser("smile", help="IV smile curves and parameter sweeps")
    _add_market_flags(sp)
    _add_param_flags(sp)
    sp.add_argument("--sweep", choices=("rho", "eta", "lam", "v0", "vbar"), default=None)
    sp.add_argument("--values", default=None, help="comma list of swept values")
    sp.add_argument("--strikes", default="50:200:151", help="lo:hi:n strike grid")
    _add_out_flags(sp)
    sp.set_defaults(func=_cmd_smile)

    sp = subparsers["calibrate"] = sub.add_parser("calibrate", help="fit parameters to an option chain CSV")
    sp.add_argument("--chain", required=True, help="CSV with Strike,IV columns")
    sp.add_argument("--meta", default=None, help="JSON sidecar with close/dates/r")
    sp.add_argument("--close", type=float, default=None)
    sp.add_argument("--trade-date", default=None, help="YYYY-MM-DD")
    sp.add_argument("--expiry-date", default=None, help="YYYY-MM-DD")
    sp.add_argument("--rate", type=float, default=None, help="risk-free rate (default 0.036)")
    sp.add_argument("--mode", choices=("fix0", "fix2", "fix5"), default="fix2")
    sp.add_argument("--iterations", type=int, default=300)
    sp.add_argument("--epsilon", type=float, default=1e-4)
    sp.add_argument("--lr0", type=float, default=0.9)
    sp.add_argument("--learn-deno", type=float, default=300.0)
    sp.add_argument("--decay-level", type=float, default=0.0)
    sp.add_argument("--override", action="append", default=None,
                    metavar="NAME=VALUE", help="fixed/start value override")
    sp.add_argument("--fit-csv", default=None,
                    help="also write strike,market_iv,model_iv CSV here")
    _add_out_flags(sp)
    sp.set_defaults(func=_cmd_calibrate)

    sp = subparsers["convergence"] = sub.add_parser("convergence", help="crude-vs-mixing error table")
    _add_market_flags(sp)
    _add_param_flags(sp)
    sp.add_argument("--reps", type=int, default=50)
    sp.add_argument("--np", dest="np_list", default="100,1000,10000",
                    help="comma list of path counts")
    sp.add_argument("--nt", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    _add_out_flags(sp)
    sp.set_defaults(func=_cmd_convergence)
    return ap, subparsers


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap, subparsers = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.config:
            with open(args.config) as fh:
                file_defaults = json.load(fh)
            defaults = {k.replace("-", "_"): v for k, v in file_defaults.items()}
            # subparsers parse into a fresh namespace, so the file's
            # defaults must be installed on each of them directly
            ap.set_defaults(**defaults)
            for sub_ap in subparsers.values():
                known = {a.dest for a in sub_ap._actions}
                sub_ap.set_defaults(**{k: v for k, v in defaults.items() if k in known})
            args = ap.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        # argparse reports usage errors with its own exit code 2
        return int(exc.code or 0)
    except (ValueError, ChainDataError, OutOfBandError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (QuadratureError, CalibrationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
