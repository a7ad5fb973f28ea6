"""Three-step instrumental-variable quantile regression and a least-squares comparator.

Step 1 profiles an ordinary QR over a grid of spatial-error coefficients,
step 2 picks the grid point whose instrument coefficient is closest to zero
in a weighted norm, and step 3 rereads the step-1 fit at the selected point.

Step 1 comes in two forms.  The restricted form (default) quasi-differences
both sides: QR of (y - lambda_j d) on [Z - lambda_j M*Z, dummies, E], which
ties the doubled coefficient block to (alpha, lambda_j alpha).  The
unrestricted form regresses (y - lambda_j d) on the full doubled block
[Z, -M*Z] with free coefficients.  When the two weight matrices coincide
(W = M) the unrestricted design contains d itself as a column, the response
shift is absorbed exactly, and the profile carries no information about
lambda; the restricted form stays identified, hence the default.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import RankError, WeightError
from .panel import DesignSystem, EffectsMode
from .qr import QrProblem, QuantileFit, solve_qr


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly increasing grid of candidate spatial-error coefficients in (-1, 1)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size == 0:
            raise WeightError("lambda grid is empty")
        if np.any(np.diff(v) <= 0):
            raise WeightError("lambda grid must be strictly increasing")
        if np.any(np.abs(v) >= 1):
            raise WeightError("lambda grid values must satisfy |value| < 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def default(cls, lo: float = -0.95, hi: float = 0.95, step: float = 0.01) -> "LambdaGrid":
        count = int(round((hi - lo) / step)) + 1
        return cls(np.linspace(lo, hi, count))


@dataclass(frozen=True)
class GammaProfilePoint:
    """One grid point of the step-1 profile."""

    lambda_j: float
    gamma: np.ndarray
    distance: float


@dataclass(frozen=True)
class IvqrResult:
    """Full output of the three-step estimator at one quantile."""

    tau: float
    lambda_hat: float
    alpha_star_hat: np.ndarray
    nu_star_hat: np.ndarray
    psi_star_hat: np.ndarray
    gamma_hat: np.ndarray
    gamma_profile: tuple
    covariance: Optional[np.ndarray]
    n_eff: int
    fit: QuantileFit
    at_grid_boundary: bool
    p: int

    @property
    def rho_hat(self) -> float:
        return float(self.alpha_star_hat[0])

    @property
    def beta_hat(self) -> np.ndarray:
        return self.alpha_star_hat[1 : 1 + self.p]

    @property
    def structural(self):
        return self.rho_hat, self.beta_hat

    @property
    def lambda_alpha_hat(self) -> np.ndarray:
        """The second block (lambda*rho, lambda*beta) of alpha*.

        Exactly lambda_hat * (rho_hat, beta_hat) under the restricted step-1
        form; a free estimate under the unrestricted form.
        """
        return self.alpha_star_hat[1 + self.p :]


def nuisance_basis(
    design: DesignSystem,
    effects: EffectsMode = EffectsMode.INDIVIDUAL_AND_TIME,
    ref_time: Optional[int] = None,
) -> np.ndarray:
    """Full-rank basis of the fixed-effect dummy span on the masked sample.

    With row-normalized M the doubled blocks [Z1, -M*Z1] and [Z2, -M*Z2]
    collapse onto span[Z1, Z2], so estimation uses Z1 in full plus the Z2
    columns of observed periods minus one reference period (normalized to
    zero).  ``ref_time`` picks the reference period (zero-based; default:
    first observed period).
    """
    cols = [design.z1]
    if effects is EffectsMode.INDIVIDUAL_AND_TIME:
        z2 = design.z2
        observed = [
            t for t in range(design.t) if np.any(z2[design.sample_mask, t] != 0)
        ]
        if ref_time is None:
            ref_time = observed[0]
        if ref_time not in observed:
            raise WeightError(f"reference period {ref_time} is not in the masked sample")
        keep = [t for t in observed if t != ref_time]
        cols.append(z2[:, keep])
    return np.hstack(cols)


def _masked_blocks(design: DesignSystem, effects: EffectsMode, ref_time=None):
    mask = design.sample_mask
    zt = nuisance_basis(design, effects, ref_time)
    return (
        design.y[mask],
        design.d[mask],
        design.z_star[mask],
        zt[mask],
        design.instruments[mask],
    )


def _step1_design(design, z_star, lambda_j, restricted):
    k = 1 + design.p
    if restricted:
        # z_star = [Z, -M*Z], so Z - lambda M*Z = Z + lambda * (-M*Z)
        return z_star[:, :k] + lambda_j * z_star[:, k:]
    return z_star


def step1_profile(
    design: DesignSystem,
    tau: float,
    lambda_j: float,
    effects: EffectsMode = EffectsMode.INDIVIDUAL_AND_TIME,
    validate: bool = True,
    restricted: bool = True,
):
    """Ordinary QR of (y - lambda_j * d) on [regressors, dummies, E] over masked rows.

    The regressor block is [Z - lambda_j M*Z] (restricted, default) or the
    free doubled block [Z, -M*Z] (unrestricted).

    Returns
    -------
    (alpha_star, nu_star, psi_star, gamma, fit)
    """
    y, d, z_star, zt, e = _masked_blocks(design, effects)
    x = np.hstack([_step1_design(design, z_star, lambda_j, restricted), zt, e])
    problem = QrProblem(y - lambda_j * d, x, tau, validate=validate)
    fit = solve_qr(problem)
    return _split_coefficients(fit, design, zt.shape[1], effects, lambda_j, restricted) + (fit,)


def _split_coefficients(fit, design, n_dummy, effects, lambda_j, restricted):
    k = 1 + design.p
    ka = k if restricted else 2 * k
    b = fit.coefficients
    if restricted:
        alpha = b[:k]
        alpha_star = np.concatenate([alpha, lambda_j * alpha])
    else:
        alpha_star = b[:ka]
    dummies = b[ka : ka + n_dummy]
    nu_star = dummies[: design.n]
    psi_part = dummies[design.n :]
    if effects is EffectsMode.INDIVIDUAL_AND_TIME:
        psi_star = psi_part
    else:
        psi_star = np.empty(0)
    gamma = b[ka + n_dummy :]
    return alpha_star, nu_star, psi_star, gamma


def step2_select(gamma_profile, weight: Optional[np.ndarray] = None) -> float:
    """Grid value whose gamma' A gamma distance is smallest.

    Ties break toward the value of smallest absolute size, then the smallest value.
    """
    profile = list(gamma_profile)
    if not profile:
        raise WeightError("gamma profile is empty")
    q = np.atleast_1d(profile[0].gamma).shape[0]
    a = _check_weight(weight, q)
    best = None
    for point in profile:
        g = np.atleast_1d(point.gamma)
        dist = float(g @ a @ g)
        key = (dist, abs(point.lambda_j), point.lambda_j)
        if best is None or key < best[0]:
            best = (key, point.lambda_j)
    return best[1]


def _check_weight(weight, q):
    if weight is None:
        return np.eye(q)
    a = np.asarray(weight, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.shape != (q, q):
        raise WeightError(f"weight matrix shape {a.shape} does not match gamma dim {q}")
    if not np.allclose(a, a.T, atol=1e-10):
        raise WeightError("weight matrix is not symmetric")
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise WeightError("weight matrix is not positive definite") from None
    return a


def estimate_ivqr(
    design: DesignSystem,
    tau: float,
    grid: Optional[LambdaGrid] = None,
    weight: Optional[np.ndarray] = None,
    effects: EffectsMode = EffectsMode.INDIVIDUAL_AND_TIME,
    compute_covariance: bool = True,
    restricted: bool = True,
) -> IvqrResult:
    """Run the full three-step estimator at one quantile."""
    if grid is None:
        grid = LambdaGrid.default()
    a = _check_weight(weight, design.q)

    y, d, z_star, zt, e = _masked_blocks(design, effects)
    n_dummy = zt.shape[1]
    # validate once at a representative grid point; the others reuse the check
    mid = float(grid.values[len(grid.values) // 2])
    QrProblem(
        y, np.hstack([_step1_design(design, z_star, mid, restricted), zt, e]), tau, validate=True
    )

    profile = []
    fits = {}
    for lam in grid.values:
        x = np.hstack([_step1_design(design, z_star, lam, restricted), zt, e])
        fit = solve_qr(QrProblem(y - lam * d, x, tau, validate=False))
        _, _, _, gamma = _split_coefficients(fit, design, n_dummy, effects, lam, restricted)
        dist = float(gamma @ a @ gamma)
        profile.append(GammaProfilePoint(float(lam), gamma, dist))
        fits[float(lam)] = fit

    lambda_hat = step2_select(profile, a)
    fit = fits[lambda_hat]
    alpha_star, nu_star, psi_star, gamma = _split_coefficients(
        fit, design, n_dummy, effects, lambda_hat, restricted
    )
    boundary = lambda_hat in (float(grid.values[0]), float(grid.values[-1]))

    covariance = None
    if compute_covariance:
        from .inference import build_sandwich, estimate_density

        density = estimate_density(fit.residuals, tau, design.n_eff)
        try:
            parts = build_sandwich(design, density, tau, a, effects=effects)
            covariance = parts.lambda_cov
        except Exception:
            covariance = None

    return IvqrResult(
        tau=tau,
        lambda_hat=float(lambda_hat),
        alpha_star_hat=alpha_star,
        nu_star_hat=nu_star,
        psi_star_hat=psi_star,
        gamma_hat=gamma,
        gamma_profile=tuple(profile),
        covariance=covariance,
        n_eff=design.n_eff,
        fit=fit,
        at_grid_boundary=boundary,
        p=design.p,
    )


@dataclass(frozen=True)
class OlsResult:
    """Mean-regression comparator fit."""

    lambda_hat: float
    alpha_star_hat: np.ndarray
    nu_star_hat: np.ndarray
    psi_star_hat: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    p: int

    @property
    def rho_hat(self) -> float:
        return float(self.alpha_star_hat[0])

    @property
    def beta_hat(self) -> np.ndarray:
        return self.alpha_star_hat[1 : 1 + self.p]


def estimate_ols(
    design: DesignSystem,
    effects: EffectsMode = EffectsMode.INDIVIDUAL_AND_TIME,
) -> OlsResult:
    """Two-step mean-regression comparator.

    Least squares of y on [Z, dummies] over masked rows gives (rho, beta) and
    the fixed effects; lambda is then the first-order autoregression of the
    residual on its spatial lag, u_hat on M* u_hat.  A one-step regression on
    [d, Z, ...] is exactly collinear whenever the two weight matrices
    coincide (d is the W*y column), so the comparator is split this way.
    """
    y, d, z_star, zt, _ = _masked_blocks(design, effects)
    k = 1 + design.p
    x = np.hstack([z_star[:, :k], zt])
    sv = np.linalg.svd(x, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        raise RankError(
            "least-squares design is rank deficient "
            f"(singular values {sv[-1]:.3e}/{sv[0]:.3e})"
        )
    b, *_ = np.linalg.lstsq(x, y, rcond=None)
    alpha = b[:k]
    dummies = b[k:]
    nu_star = dummies[: design.n]
    psi_star = (
        dummies[design.n :] if effects is EffectsMode.INDIVIDUAL_AND_TIME else np.empty(0)
    )
    fitted = x @ b
    residuals = y - fitted

    m_x = _apply_m_blocks(design, effects)
    m_resid = d - m_x @ b
    denom = float(m_resid @ m_resid)
    lambda_hat = float(m_resid @ residuals) / denom if denom > 1e-12 else 0.0

    return OlsResult(
        lambda_hat=lambda_hat,
        alpha_star_hat=np.concatenate([alpha, lambda_hat * alpha]),
        nu_star_hat=nu_star,
        psi_star_hat=psi_star,
        fitted=fitted,
        residuals=residuals,
        p=design.p,
    )


def _apply_m_blocks(design: DesignSystem, effects: EffectsMode) -> np.ndarray:
    """M* applied to the step-one regressors [Z, dummy basis], masked rows.

    Read off the doubled blocks: z_star/z1_star/z2_star carry [., -M* .].
    """
    k = 1 + design.p
    mask = design.sample_mask
    m_z = -design.z_star[:, k:]
    cols = [m_z, -design.z1_star[:, design.n :]]
    if effects is EffectsMode.INDIVIDUAL_AND_TIME:
        z2 = design.z2
        observed = [t for t in range(design.t) if np.any(z2[mask, t] != 0)]
        keep = [t for t in observed if t != observed[0]]
        cols.append(-design.z2_star[:, design.t :][:, keep])
    return np.hstack(cols)[mask]
