"""Asymptotic covariance for the IVQR estimator: density estimation,
density-weighted projections, and the J' S J sandwich."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .errors import DataError, InferenceDegeneracyError
from .ivqr import IvqrResult, _masked_blocks
from .panel import DesignSystem, EffectsMode

_DENSITY_FLOOR = 1e-6
_COND_LIMIT = 1e10


@dataclass(frozen=True)
class DensityEstimate:
    """Pointwise conditional density estimates at the fitted quantile."""

    values: np.ndarray
    bandwidth: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise DataError("density values must be finite and positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def hall_sheather_bandwidth(n_eff: int, tau: float, alpha: float = 0.01) -> float:
    """Hall-Sheather bandwidth for sparsity/density estimation at quantile tau."""
    z = norm.ppf(tau)
    num = 1.5 * norm.pdf(z) ** 2
    den = 2.0 * z**2 + 1.0
    return n_eff ** (-1.0 / 3) * norm.ppf(1.0 - alpha / 2) ** (2.0 / 3) * (num / den) ** (1.0 / 3)


def estimate_density(residuals: np.ndarray, tau: float, n_eff: int) -> DensityEstimate:
    """Powell kernel estimator of f_it at the fitted quantile.

    Gaussian kernel with Hall-Sheather bandwidth; values floored at 1e-6 so
    heavy-tailed residuals cannot zero out the weighting matrix.
    """
    r = np.asarray(residuals, dtype=float)
    if not np.all(np.isfinite(r)):
        raise DataError("residuals contain non-finite values")
    if not 0 < tau < 1:
        raise DataError(f"tau must be in (0, 1), got {tau}")
    h = hall_sheather_bandwidth(n_eff, tau)
    values = np.maximum(norm.pdf(r / h) / h, _DENSITY_FLOOR)
    return DensityEstimate(values=values, bandwidth=h)


@dataclass(frozen=True)
class SandwichParts:
    """All intermediate matrices of the asymptotic covariance."""

    j_zeta: np.ndarray
    j_lambda: np.ndarray
    s: np.ndarray
    h: np.ndarray
    k_mat: np.ndarray
    l_mat: np.ndarray
    lambda_cov: np.ndarray


def build_sandwich(
    design: DesignSystem,
    density: DensityEstimate,
    tau: float,
    weight: Optional[np.ndarray] = None,
    effects: EffectsMode = EffectsMode.INDIVIDUAL_AND_TIME,
    ref_time: Optional[int] = None,
) -> SandwichParts:
    """Covariance of (lambda_hat, alpha*_hat) from density-weighted projections.

    With Xt = [Z*, E], Zt the fixed-effect basis, and Omega = diag(density):
    annihilate Zt under the Omega-weighted projection, form the Jacobians
    J_zeta and J_lambda and the score matrix S, then assemble
    Lambda = J' S J with J = (K', L').
    """
    _, d, z_star, zt, e = _masked_blocks(design, effects, ref_time)
    n_eff = design.n_eff
    omega = np.asarray(density.values, dtype=float)
    if omega.shape[0] != n_eff:
        raise DataError(f"density has {omega.shape[0]} values, masked sample has {n_eff}")

    xt = np.hstack([z_star, e])
    # M_Zt X = X - Zt (Zt' Omega Zt)^{-1} Zt' Omega X, applied without the NT x NT matrix
    ztoz = zt.T @ (omega[:, None] * zt)
    try:
        coef = np.linalg.solve(ztoz, zt.T @ (omega[:, None] * np.column_stack([xt, d])))
    except np.linalg.LinAlgError:
        raise InferenceDegeneracyError("fixed-effect weighted Gram matrix is singular") from None
    proj = zt @ coef
    mx = xt - proj[:, : xt.shape[1]]
    md = d - proj[:, -1]

    j_zeta = mx.T @ (omega[:, None] * mx) / n_eff
    j_lambda = mx.T @ (omega * md) / n_eff
    s = tau * (1.0 - tau) * (mx.T @ mx) / n_eff

    cond = np.linalg.cond(j_zeta)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise InferenceDegeneracyError(f"J_zeta condition estimate {cond:.3g} exceeds limit")
    j_inv = np.linalg.inv(j_zeta)

    ka = 2 * (1 + design.p)
    q = design.q
    a = np.eye(q) if weight is None else np.asarray(weight, dtype=float)
    jbar_alpha = j_inv[:ka, :]
    jbar_gamma = j_inv[ka:, :]
    h = jbar_gamma.T @ a @ jbar_gamma

    jhj = j_lambda @ h @ j_lambda
    if not np.isfinite(jhj) or abs(jhj) < 1e-300:
        raise InferenceDegeneracyError("J_lambda' H J_lambda is numerically singular")
    k_mat = (h @ j_lambda / jhj)[None, :]
    m_mat = np.eye(ka + q) - np.outer(j_lambda, k_mat)
    l_mat = jbar_alpha @ m_mat

    j = np.vstack([k_mat, l_mat])
    lam = j @ s @ j.T
    lam = 0.5 * (lam + lam.T)
    return SandwichParts(
        j_zeta=j_zeta,
        j_lambda=j_lambda,
        s=s,
        h=h,
        k_mat=k_mat,
        l_mat=l_mat,
        lambda_cov=lam,
    )


#: coefficient names in the order of the (lambda, alpha*) covariance
def coefficient_names(p: int) -> list:
    names = ["lambda", "rho"]
    names += [f"beta_{j + 1}" for j in range(p)]
    names += ["lambda_rho"] + [f"lambda_beta_{j + 1}" for j in range(p)]
    return names


def confidence_band(results, level: float = 0.90):
    """Pointwise normal confidence intervals for each coefficient over a tau grid.

    Parameters
    ----------
    results : iterable of IvqrResult
    level : float
        Confidence level in (0, 1).

    Returns
    -------
    list of dict rows ``{coef, tau, estimate, lower, upper, has_band}``.
    """
    if not 0 < level < 1:
        raise DataError(f"level must be in (0, 1), got {level}")
    z = norm.ppf(0.5 * (1.0 + level))
    rows = []
    for res in results:
        names = coefficient_names(res.p)
        point = np.concatenate([[res.lambda_hat], res.alpha_star_hat])
        if res.covariance is not None:
            se = np.sqrt(np.maximum(np.diag(res.covariance), 0.0) / res.n_eff)
        else:
            se = None
        for j, name in enumerate(names):
            est = float(point[j])
            if se is None:
                rows.append(
                    {"coef": name, "tau": res.tau, "estimate": est,
                     "lower": None, "upper": None, "has_band": False}
                )
            else:
                rows.append(
                    {"coef": name, "tau": res.tau, "estimate": est,
                     "lower": est - z * se[j], "upper": est + z * se[j], "has_band": True}
                )
    return rows


def write_band_csv(path, rows) -> None:
    """Write band rows as ``coef,tau,estimate,lower,upper`` (blank bounds when absent)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["coef", "tau", "estimate", "lower", "upper"])
        for row in rows:
            writer.writerow(
                [
                    row["coef"],
                    repr(float(row["tau"])),
                    repr(float(row["estimate"])),
                    "" if row["lower"] is None else repr(float(row["lower"])),
                    "" if row["upper"] is None else repr(float(row["upper"])),
                ]
            )
