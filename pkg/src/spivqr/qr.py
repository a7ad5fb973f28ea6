"""Check-function quantile regression via a Frisch-Newton interior-point solver.

Solves min_b sum_k rho_tau(y_k - x_k' b) through the bounded-variable dual

    max_a  y'a   s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1,

with a Mehrotra predictor-corrector on dense normal equations.  The QR
coefficients are the dual variables of the equality constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DataError, RankError

_RANK_RTOL = 1e-10
_STEP_SHRINK = 0.9995


def check_loss(u, tau: float):
    """The check function rho_tau(u) = u * (tau - 1{u <= 0}).  Vectorized."""
    if not 0 < tau < 1:
        raise DataError(f"tau must be in (0, 1), got {tau}")
    u = np.asarray(u, dtype=float)
    return u * (tau - (u <= 0))


@dataclass(frozen=True)
class QrProblem:
    """One quantile regression problem: response, design, quantile level."""

    response: np.ndarray
    design: np.ndarray
    tau: float
    validate: bool = True

    def __post_init__(self):
        y = np.asarray(self.response, dtype=float).reshape(-1)
        x = np.asarray(self.design, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.shape[0] != x.shape[0]:
            raise DataError(f"response has {y.shape[0]} rows, design has {x.shape[0]}")
        if not 0 < self.tau < 1:
            raise DataError(f"tau must be in (0, 1), got {self.tau}")
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "design", x)
        if self.validate:
            if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
                raise DataError("non-finite values in response or design")
            _check_rank(x)


def _check_rank(x: np.ndarray) -> None:
    sv = linalg.svdvals(x)
    if sv[0] == 0 or sv[-1] < _RANK_RTOL * sv[0]:
        # pivoted QR identifies which columns fall outside the numerical range
        _, r, piv = linalg.qr(x, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        cut = _RANK_RTOL * (diag[0] if diag.size and diag[0] > 0 else 1.0)
        bad = sorted(int(piv[j]) for j in range(len(diag)) if diag[j] < cut)
        raise RankError(
            f"design is rank deficient (smallest/largest singular value "
            f"{sv[-1]:.3e}/{sv[0]:.3e}); offending columns {bad}",
            columns=bad,
        )


@dataclass(frozen=True)
class QuantileFit:
    """Solution of one check-function QR problem."""

    coefficients: np.ndarray
    residuals: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    duality_gap: float

    def negative_count(self, ztol: float = 0.0) -> int:
        """Number of residuals below -ztol."""
        return int(np.sum(self.residuals < -ztol))

    def nonpositive_count(self, ztol: float = 0.0) -> int:
        """Number of residuals at or below +ztol."""
        return int(np.sum(self.residuals <= ztol))


def solve_qr(problem: QrProblem, max_iter: int = 200, tol: float = 1e-10) -> QuantileFit:
    """Solve the QR problem to relative duality gap ``tol``.

    Internally rescales design columns to unit norm; reported coefficients
    are on the original scale.
    """
    y = problem.response
    x = problem.design
    tau = problem.tau
    n, k = x.shape

    col_scale = np.sqrt((x * x).sum(axis=0))
    col_scale[col_scale == 0] = 1.0
    xs = x / col_scale

    b, e, gap, iters, converged = _frisch_newton(xs, y, tau, max_iter, tol)
    b = b / col_scale
    residuals = y - x @ b
    obj = float(check_loss(residuals, tau).sum())
    return QuantileFit(
        coefficients=b,
        residuals=residuals,
        objective_value=obj,
        iterations=iters,
        converged=converged,
        duality_gap=gap,
    )


def _frisch_newton(x, y, tau, max_iter, tol):
    n, k = x.shape
    ones = np.ones(n)
    c0 = (1.0 - tau) * (x.T @ ones)

    a = np.full(n, 1.0 - tau)
    s = np.full(n, tau)
    b, *_ = np.linalg.lstsq(x, y, rcond=None)
    e = y - x @ b
    shift = 0.1 * max(1.0, float(np.abs(e).mean()))
    z = np.maximum(e, 0.0) + shift
    w = np.maximum(-e, 0.0) + shift

    scale = 1.0 + float(np.abs(y).sum()) * max(tau, 1.0 - tau)
    gap = float(a @ z + s @ w)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if gap / scale < tol:
            converged = True
            break
        dvec = 1.0 / (z / a + w / s)
        resid = y - x @ b
        rp = c0 - x.T @ a

        def _newton(r1):
            xd = x * dvec[:, None]
            m = x.T @ xd
            rhs = xd.T @ r1 - rp
            try:
                cf = linalg.cho_factor(m, check_finite=False)
                db = linalg.cho_solve(cf, rhs, check_finite=False)
            except linalg.LinAlgError:
                db = np.linalg.lstsq(m, rhs, rcond=None)[0]
            da = dvec * (r1 - x @ db)
            return db, da

        # affine (predictor) direction
        db_a, da_a = _newton(resid)
        ds_a = -da_a
        dz_a = -z - (z / a) * da_a
        dw_a = -w + (w / s) * da_a

        ap_aff = _step_length(np.concatenate([a, s]), np.concatenate([da_a, ds_a]))
        ad_aff = _step_length(np.concatenate([z, w]), np.concatenate([dz_a, dw_a]))
        gap_aff = float(
            (a + ap_aff * da_a) @ (z + ad_aff * dz_a) + (s + ap_aff * ds_a) @ (w + ad_aff * dw_a)
        )
        sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3
        mu = sigma * gap / (2.0 * n)

        # corrector direction
        r1 = resid + mu * (1.0 / a - 1.0 / s) + (ds_a * dw_a) / s - (da_a * dz_a) / a
        db, da = _newton(r1)
        ds = -da
        dz = mu / a - z - (z / a) * da - (da_a * dz_a) / a
        dw = mu / s - w - (w / s) * ds - (ds_a * dw_a) / s

        ap = _step_length(np.concatenate([a, s]), np.concatenate([da, ds]))
        ad = _step_length(np.concatenate([z, w]), np.concatenate([dz, dw]))
        a += ap * da
        s += ap * ds
        z += ad * dz
        w += ad * dw
        b += ad * db
        gap = float(a @ z + s @ w)

    return b, y - x @ b, gap / scale, it, converged


def _step_length(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, _STEP_SHRINK * float(np.min(-v[neg] / dv[neg])))
