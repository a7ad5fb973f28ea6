"""Monte Carlo harness: replicate the DGP, run the estimators, report bias/RMSE."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .errors import ConfigError, SpivqrError
from .ivqr import LambdaGrid, estimate_ivqr, estimate_ols
from .panel import DgpSpec, InstrumentRule, build_design, simulate
from .spatial import SpatialWeights

IVQR = "ivqr"
OLS = "ols"


@dataclass(frozen=True)
class McConfig:
    """One Monte Carlo experiment."""

    spec: DgpSpec
    replicates: int = 200
    taus: tuple = (0.25, 0.5, 0.75)
    estimators: tuple = (IVQR, OLS)
    grid: LambdaGrid = field(default_factory=LambdaGrid.default)
    base_seed: int = 0
    n_jobs: int = 1
    # fitted-spatial-lag: the lagged-y rule has no identifying power for the
    # spatial-error coefficient when periods are independent draws
    instrument_rule: InstrumentRule = InstrumentRule.FITTED_SPATIAL_LAG

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.estimators:
            raise ConfigError("at least one estimator must be configured")
        for est in self.estimators:
            if est not in (IVQR, OLS):
                raise ConfigError(f"unknown estimator {est!r}")
        if IVQR in self.estimators and not self.taus:
            raise ConfigError("IVQR requires a nonempty tau list")
        for tau in self.taus:
            if not 0 < tau < 1:
                raise ConfigError(f"tau must be in (0, 1), got {tau}")


@dataclass(frozen=True)
class McCell:
    """Bias/RMSE for one (estimator, tau, parameter) cell."""

    bias: float
    rmse: float
    replicates_used: int
    failures: int


@dataclass(frozen=True)
class McReport:
    """Accumulated Monte Carlo results keyed by (estimator, tau-or-None, parameter)."""

    cells: dict
    replicates: int
    parameters: tuple

    def cell(self, estimator: str, tau: Optional[float], parameter: str) -> McCell:
        return self.cells[(estimator, tau, parameter)]


def _parameter_names(p: int):
    return ("rho", "lambda") + tuple(f"beta_{j + 1}" for j in range(p))


def _replicate(config: McConfig, w: SpatialWeights, m: SpatialWeights, r: int):
    """Estimates for one replicate; per-estimator failures recorded, never raised."""
    spec = config.spec
    rep_spec = DgpSpec(
        rho0=spec.rho0,
        lambda0=spec.lambda0,
        beta0=spec.beta0,
        n=spec.n,
        t=spec.t,
        error_dist=spec.error_dist,
        effects=spec.effects,
        seed=config.base_seed + r,
        error_scale=spec.error_scale,
        effect_scale=spec.effect_scale,
    )
    data, _ = simulate(rep_spec, w, m)
    design = build_design(data, w, m, config.instrument_rule)
    out = {}
    for est in config.estimators:
        if est == IVQR:
            for tau in config.taus:
                try:
                    res = estimate_ivqr(
                        design,
                        tau,
                        config.grid,
                        effects=spec.effects,
                        compute_covariance=False,
                    )
                    out[(IVQR, tau)] = np.concatenate(
                        [[res.rho_hat, res.lambda_hat], res.beta_hat]
                    )
                except SpivqrError:
                    out[(IVQR, tau)] = None
        else:
            try:
                res = estimate_ols(design, effects=spec.effects)
                out[(OLS, None)] = np.concatenate(
                    [[res.rho_hat, res.lambda_hat], res.beta_hat]
                )
            except SpivqrError:
                out[(OLS, None)] = None
    return out


def run_mc(config: McConfig, w: SpatialWeights, m: SpatialWeights) -> McReport:
    """Run the experiment.  Deterministic given the config, independent of scheduling.

    Replicates run in a joblib pool (``config.n_jobs``); results are reduced
    in replicate order, so any parallel schedule yields the same report.
    """
    spec = config.spec
    truth = np.concatenate([[spec.rho0, spec.lambda0], spec.beta0])
    params = _parameter_names(spec.p)

    results = Parallel(n_jobs=config.n_jobs)(
        delayed(_replicate)(config, w, m, r) for r in range(config.replicates)
    )

    keys = []
    for est in config.estimators:
        if est == IVQR:
            keys += [(IVQR, tau) for tau in config.taus]
        else:
            keys.append((OLS, None))

    cells = {}
    for key in keys:
        errors = []
        failures = 0
        for rep in results:
            value = rep[key]
            if value is None:
                failures += 1
            else:
                errors.append(value - truth)
        errors = np.array(errors) if errors else np.empty((0, len(truth)))
        used = errors.shape[0]
        for j, param in enumerate(params):
            if used:
                bias = float(errors[:, j].mean())
                rmse = float(np.sqrt(np.mean(errors[:, j] ** 2)))
            else:
                bias, rmse = float("nan"), float("nan")
            cells[(key[0], key[1], param)] = McCell(bias, rmse, used, failures)
    return McReport(cells=cells, replicates=config.replicates, parameters=params)


def format_report(report: McReport, layout: str = "paper") -> str:
    """Render a report; ``layout`` is ``"paper"`` (grouped table) or ``"csv"`` (long format)."""
    if layout == "csv":
        return _format_csv(report)
    if layout == "paper":
        return _format_paper(report)
    raise ConfigError(f"unknown layout {layout!r}")


def _columns(report: McReport):
    seen = []
    for est, tau, _ in report.cells:
        if (est, tau) not in seen:
            seen.append((est, tau))
    return seen


def _format_csv(report: McReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["estimator", "tau", "parameter", "bias", "rmse", "replicates", "failures"])
    for est, tau in _columns(report):
        for param in report.parameters:
            cell = report.cell(est, tau, param)
            writer.writerow(
                [
                    est,
                    "" if tau is None else repr(float(tau)),
                    param,
                    repr(cell.bias),
                    repr(cell.rmse),
                    cell.replicates_used,
                    cell.failures,
                ]
            )
    return buf.getvalue()


def parse_report_csv(text: str) -> dict:
    """Parse the long-CSV layout back into a {(estimator, tau, parameter): McCell} dict."""
    reader = csv.DictReader(io.StringIO(text))
    cells = {}
    for row in reader:
        tau = float(row["tau"]) if row["tau"] else None
        cells[(row["estimator"], tau, row["parameter"])] = McCell(
            bias=float(row["bias"]),
            rmse=float(row["rmse"]),
            replicates_used=int(row["replicates"]),
            failures=int(row["failures"]),
        )
    return cells


def _format_paper(report: McReport) -> str:
    cols = _columns(report)
    width = 12
    headers = [f"{est.upper()} tau={tau:g}" if tau is not None else est.upper() for est, tau in cols]
    lines = []
    lines.append(f"{'Parameter':<14}{'':<6}" + "".join(f"{h:>{width + 4}}" for h in headers))
    for param in report.parameters:
        for stat in ("Bias", "RMSE"):
            label = param if stat == "Bias" else ""
            vals = []
            for est, tau in cols:
                cell = report.cell(est, tau, param)
                value = cell.bias if stat == "Bias" else cell.rmse
                vals.append(f"{value:>{width + 4}.4f}")
            lines.append(f"{label:<14}{stat:<6}" + "".join(vals))
    failures = {
        f"{est}{'' if tau is None else f'@{tau:g}'}": report.cell(est, tau, report.parameters[0]).failures
        for est, tau in cols
    }
    lines.append("")
    lines.append(f"replicates: {report.replicates}   failures: {failures}")
    return "\n".join(lines) + "\n"
