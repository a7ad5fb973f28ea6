"""Command-line front end: simulate panels, fit models, run Monte Carlo studies.

Exit codes: 0 success, 1 runtime estimation failure, 2 usage/config error.
The environment variable ``SPIVQR_SEED`` overrides the default seed of any
command; an explicit ``--seed`` flag wins over both.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from .errors import ConfigError, SpivqrError
from .inference import confidence_band, write_band_csv
from .ivqr import LambdaGrid, estimate_ivqr, estimate_ols
from .mc import IVQR, OLS, McConfig, format_report, run_mc
from .panel import (
    DgpSpec,
    EffectsMode,
    ErrorDist,
    InstrumentRule,
    build_design,
    load_panel_csv,
    save_panel_csv,
    simulate,
)
from .spatial import build_rook_weights, load_weights_csv, save_weights_csv

_DESIGNS = {"a": (0.2, 0.5, 1.0), "b": (0.5, 0.2, 1.0)}


def _read_config_file(path) -> dict:
    """Flat key=value file; blank lines and #-comments ignored."""
    values = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _apply_config_file(args: argparse.Namespace, argv) -> None:
    """Fill argument values from the config file; explicitly passed flags win."""
    if not getattr(args, "config", None):
        return
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token[2:].split("=")[0].replace("-", "_"))
    file_values = _read_config_file(args.config)
    for key, raw in file_values.items():
        if key == "lambda":
            key = "lam"
        if not hasattr(args, key):
            raise ConfigError(f"unknown config key {key!r}")
        if key in explicit or ("lambda" in explicit and key == "lam"):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int) and not isinstance(current, bool):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        else:
            value = raw
        setattr(args, key, value)


def _default_seed() -> int:
    env = os.environ.get("SPIVQR_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"SPIVQR_SEED must be an integer, got {env!r}") from None
    return 0


def _lattice_shape(n: int, rows: int = 0, cols: int = 0):
    if rows and cols:
        if rows * cols != n:
            raise ConfigError(f"rows*cols = {rows * cols} does not match n = {n}")
        return rows, cols
    r = int(math.isqrt(n))
    while r > 1 and n % r:
        r -= 1
    return r, n // r


def _parse_taus(text: str):
    try:
        taus = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"invalid tau list {text!r}") from None
    if not taus or any(not 0 < t < 1 for t in taus):
        raise ConfigError(f"taus must lie in (0, 1): {text!r}")
    return taus


def _grid_from_args(args) -> LambdaGrid:
    return LambdaGrid.default(args.grid_lo, args.grid_hi, args.grid_step)


def _tau_band_grid(lo=0.05, hi=0.95, step=0.05):
    count = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, count)


def cmd_simulate(args) -> int:
    rows, cols = _lattice_shape(args.n, args.rows, args.cols)
    w = build_rook_weights(rows, cols)
    beta = [float(v) for v in args.beta.split(",")]
    spec = DgpSpec(
        rho0=args.rho,
        lambda0=args.lam,
        beta0=beta,
        n=args.n,
        t=args.t,
        error_dist=ErrorDist(args.dist),
        effects=EffectsMode(args.effects),
        seed=args.seed,
    )
    data, truth = simulate(spec, w, w)
    save_panel_csv(f"{args.out_prefix}_panel.csv", data)
    save_weights_csv(f"{args.out_prefix}_weights.csv", w)
    with open(f"{args.out_prefix}_truth.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "value"])
        writer.writerow(["rho0", repr(args.rho)])
        writer.writerow(["lambda0", repr(args.lam)])
        for j, b in enumerate(beta):
            writer.writerow([f"beta0_{j + 1}", repr(b)])
        writer.writerow(["dist", args.dist])
        writer.writerow(["effects", args.effects])
        writer.writerow(["seed", args.seed])
        for i, v in enumerate(truth.nu):
            writer.writerow([f"nu_{i + 1}", repr(float(v))])
        for s, v in enumerate(truth.psi):
            writer.writerow([f"psi_{s + 1}", repr(float(v))])
    print(f"wrote {args.out_prefix}_panel.csv, _weights.csv, _truth.csv")
    return 0


def _fit_table(results, ols_result, p: int) -> str:
    names = ["lambda", "rho"] + [f"beta_{j + 1}" for j in range(p)]
    width = 12
    headers = [f"IVQR tau={res.tau:g}" for res in results]
    if ols_result is not None:
        headers.append("OLS")
    lines = [f"{'Coefficient':<14}" + "".join(f"{h:>{width + 4}}" for h in headers)]
    for idx, name in enumerate(names):
        vals = []
        for res in results:
            point = [res.lambda_hat, res.rho_hat] + list(res.beta_hat)
            vals.append(f"{point[idx]:>{width + 4}.4f}")
        if ols_result is not None:
            point = [ols_result.lambda_hat, ols_result.rho_hat] + list(ols_result.beta_hat)
            vals.append(f"{point[idx]:>{width + 4}.4f}")
        lines.append(f"{name:<14}" + "".join(vals))
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    data = load_panel_csv(args.panel)
    w = load_weights_csv(args.weights, normalize=args.normalize_weights)
    m = w if args.weights_m is None else load_weights_csv(args.weights_m, normalize=args.normalize_weights)
    effects = EffectsMode(args.effects)
    rule = InstrumentRule(args.instrument)
    design = build_design(data, w, m, rule)
    grid = _grid_from_args(args)
    taus = _parse_taus(args.taus)

    results = [estimate_ivqr(design, tau, grid, effects=effects) for tau in taus]
    ols_result = estimate_ols(design, effects=effects) if args.with_ols else None

    table = _fit_table(results, ols_result, design.p)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table)
    else:
        sys.stdout.write(table)

    if args.band_out:
        band_results = [
            estimate_ivqr(design, tau, grid, effects=effects) for tau in _tau_band_grid()
        ]
        rows = confidence_band(band_results, level=args.level)
        write_band_csv(args.band_out, rows)
    return 0


def cmd_mc(args) -> int:
    rows, cols = _lattice_shape(args.n, args.rows, args.cols)
    w = build_rook_weights(rows, cols)
    rho0, lambda0, beta0 = _DESIGNS[args.design]
    spec = DgpSpec(
        rho0=rho0,
        lambda0=lambda0,
        beta0=[beta0],
        n=args.n,
        t=args.t,
        error_dist=ErrorDist(args.dist),
        effects=EffectsMode(args.effects),
        seed=args.seed,
    )
    estimators = tuple(args.estimators.split(","))
    config = McConfig(
        spec=spec,
        replicates=args.reps,
        taus=_parse_taus(args.taus),
        estimators=estimators,
        grid=_grid_from_args(args),
        base_seed=args.seed,
        n_jobs=args.jobs,
        instrument_rule=InstrumentRule(args.instrument),
    )
    report = run_mc(config, w, w)
    text = format_report(report, layout=args.layout)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _add_grid_flags(sub):
    sub.add_argument("--grid-lo", type=float, default=-0.95)
    sub.add_argument("--grid-hi", type=float, default=0.95)
    sub.add_argument("--grid-step", type=float, default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spivqr",
        description="IVQR estimation for spatial panel models with fixed effects",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="draw a panel from the DGP and write CSV files")
    sim.add_argument("--config", default=None, help="key=value config file; flags win")
    sim.add_argument("--n", type=int, default=49)
    sim.add_argument("--t", type=int, default=5)
    sim.add_argument("--rows", type=int, default=0, help="lattice rows (default: near-square)")
    sim.add_argument("--cols", type=int, default=0)
    sim.add_argument("--rho", type=float, default=0.2)
    sim.add_argument("--lambda", dest="lam", type=float, default=0.5)
    sim.add_argument("--beta", default="1.0", help="comma-separated covariate coefficients")
    sim.add_argument("--dist", choices=[d.value for d in ErrorDist], default="normal")
    sim.add_argument("--effects", choices=[e.value for e in EffectsMode], default="both")
    sim.add_argument("--seed", type=int, default=_default_seed())
    sim.add_argument("--out-prefix", default="spivqr")
    sim.set_defaults(func=cmd_simulate)

    fit = commands.add_parser("fit", help="fit the model to a panel CSV")
    fit.add_argument("--config", default=None)
    fit.add_argument("--panel", required=True)
    fit.add_argument("--weights", required=True)
    fit.add_argument("--weights-m", default=None, help="error-process weights (default: same as --weights)")
    fit.add_argument("--normalize-weights", action="store_true")
    fit.add_argument("--taus", default="0.25,0.5,0.75")
    fit.add_argument("--effects", choices=[e.value for e in EffectsMode], default="both")
    fit.add_argument(
        "--instrument", choices=[r.value for r in InstrumentRule if r is not InstrumentRule.USER_SUPPLIED],
        default="lagged-y",
    )
    fit.add_argument("--with-ols", action="store_true")
    fit.add_argument("--level", type=float, default=0.90)
    fit.add_argument("--out", default=None, help="estimates table path (default: stdout)")
    fit.add_argument("--band-out", default=None, help="confidence-band CSV over the tau grid")
    _add_grid_flags(fit)
    fit.set_defaults(func=cmd_fit)

    mc = commands.add_parser("mc", help="Monte Carlo bias/RMSE study")
    mc.add_argument("--config", default=None)
    mc.add_argument("--design", choices=sorted(_DESIGNS), default="a")
    mc.add_argument("--n", type=int, default=49)
    mc.add_argument("--t", type=int, default=5)
    mc.add_argument("--rows", type=int, default=0)
    mc.add_argument("--cols", type=int, default=0)
    mc.add_argument("--dist", choices=[d.value for d in ErrorDist], default="normal")
    mc.add_argument("--effects", choices=[e.value for e in EffectsMode], default="both")
    mc.add_argument("--reps", type=int, default=200)
    mc.add_argument("--taus", default="0.25,0.5,0.75")
    mc.add_argument("--estimators", default="ivqr,ols")
    mc.add_argument(
        "--instrument", choices=[r.value for r in InstrumentRule if r is not InstrumentRule.USER_SUPPLIED],
        default="fitted-spatial-lag",
    )
    mc.add_argument("--seed", type=int, default=_default_seed())
    mc.add_argument("--jobs", type=int, default=1)
    mc.add_argument("--layout", choices=["paper", "csv"], default="paper")
    mc.add_argument("--out", default=None)
    _add_grid_flags(mc)
    mc.set_defaults(func=cmd_mc)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args, argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpivqrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
