import numpy as np
import pytest

from spivqr.errors import WeightError
from spivqr.ivqr import (
    GammaProfilePoint,
    LambdaGrid,
    estimate_ivqr,
    estimate_ols,
    nuisance_basis,
    step1_profile,
    step2_select,
)
from spivqr.panel import (
    DgpSpec,
    EffectsMode,
    InstrumentRule,
    build_design,
    simulate,
)


def _noise_free_design(rook, n, t, rho0, lambda0, seed=0):
    spec = DgpSpec(
        rho0=rho0, lambda0=lambda0, beta0=[1.0], n=n, t=t, seed=seed, error_scale=0.0
    )
    data, effects = simulate(spec, rook, rook)
    design = build_design(data, rook, rook, InstrumentRule.FITTED_SPATIAL_LAG)
    return design, effects


class TestLambdaGrid:
    def test_default_span_and_step(self):
        grid = LambdaGrid.default()
        assert grid.values[0] == pytest.approx(-0.95)
        assert grid.values[-1] == pytest.approx(0.95)
        assert len(grid.values) == 191
        np.testing.assert_allclose(np.diff(grid.values), 0.01)

    def test_must_increase(self):
        with pytest.raises(WeightError):
            LambdaGrid(np.array([0.1, 0.1, 0.2]))

    def test_open_unit_interval(self):
        with pytest.raises(WeightError):
            LambdaGrid(np.array([-1.0, 0.0]))

    def test_empty_rejected(self):
        with pytest.raises(WeightError):
            LambdaGrid(np.array([]))


class TestStep2Select:
    def test_argmin_of_squares(self):
        profile = [
            GammaProfilePoint(-0.5, np.array([0.3]), 0.09),
            GammaProfilePoint(0.0, np.array([0.1]), 0.01),
            GammaProfilePoint(0.5, np.array([0.2]), 0.04),
        ]
        assert step2_select(profile) == 0.0

    def test_tie_breaks_to_smallest_value(self):
        profile = [
            GammaProfilePoint(-0.2, np.array([0.1]), 0.01),
            GammaProfilePoint(0.2, np.array([0.1]), 0.01),
        ]
        # equal distance and equal |lambda|: the smaller lambda wins
        assert step2_select(profile) == -0.2

    def test_tie_breaks_to_smallest_magnitude_first(self):
        profile = [
            GammaProfilePoint(-0.4, np.array([0.1]), 0.01),
            GammaProfilePoint(0.2, np.array([0.1]), 0.01),
        ]
        assert step2_select(profile) == 0.2

    def test_weight_matrix_validated(self):
        profile = [GammaProfilePoint(0.0, np.array([0.1, 0.2]), 0.05)]
        with pytest.raises(WeightError):
            step2_select(profile, np.array([[1.0, 0.0], [0.1, 1.0]]))
        with pytest.raises(WeightError):
            step2_select(profile, -np.eye(2))

    def test_empty_profile_rejected(self):
        with pytest.raises(WeightError):
            step2_select([])


class TestNuisanceBasis:
    def test_full_rank_on_masked_sample(self, small_design):
        zt = nuisance_basis(small_design)[small_design.sample_mask]
        sv = np.linalg.svd(zt, compute_uv=False)
        assert sv[-1] > 1e-8 * sv[0]
        # N individual columns + (observed periods - 1) time columns
        assert zt.shape[1] == 25 + 3

    def test_individual_only_drops_time_columns(self, small_design):
        zt = nuisance_basis(small_design, EffectsMode.INDIVIDUAL_ONLY)
        assert zt.shape[1] == 25

    def test_bad_reference_period_rejected(self, small_design):
        with pytest.raises(WeightError):
            nuisance_basis(small_design, ref_time=99)


class TestStep1Profile:
    def test_noise_free_truth_point_gives_zero_gamma(self, rook5):
        design, _ = _noise_free_design(rook5, 25, 4, rho0=0.3, lambda0=0.4, seed=8)
        alpha_star, _, _, gamma, fit = step1_profile(design, 0.5, 0.4)
        assert abs(gamma[0]) < 1e-6
        # exact representation: alpha* = (rho, beta, lambda*rho, lambda*beta)
        np.testing.assert_allclose(alpha_star, [0.3, 1.0, 0.12, 0.4], atol=1e-6)
        assert fit.objective_value < 1e-6

    def test_restricted_ties_product_block(self, small_design):
        alpha_star, _, _, _, _ = step1_profile(small_design, 0.5, 0.3)
        k = 1 + small_design.p
        np.testing.assert_allclose(alpha_star[k:], 0.3 * alpha_star[:k], atol=1e-12)

    def test_unrestricted_frees_product_block(self, small_design):
        alpha_star, _, _, _, _ = step1_profile(
            small_design, 0.5, 0.3, restricted=False
        )
        assert alpha_star.shape == (4,)
        k = 1 + small_design.p
        assert not np.allclose(alpha_star[k:], 0.3 * alpha_star[:k], atol=1e-6)

    def test_subgradient_invariant_holds(self, small_design):
        _, _, _, _, fit = step1_profile(small_design, 0.5, 0.2)
        n = small_design.n_eff
        k = len(fit.coefficients)
        ztol = 1e-7 * (1 + np.abs(fit.residuals).max())
        assert fit.negative_count(ztol) <= 0.5 * n
        assert fit.nonpositive_count(ztol) >= 0.5 * n - k


class TestEstimateIvqr:
    def test_noise_free_recovers_rho_beta_exactly(self, rook5):
        design, _ = _noise_free_design(rook5, 25, 5, rho0=0.37, lambda0=0.52, seed=11)
        res = estimate_ivqr(design, 0.5, compute_covariance=False)
        assert res.rho_hat == pytest.approx(0.37, abs=1e-6)
        assert res.beta_hat[0] == pytest.approx(1.0, abs=1e-6)

    def test_lambda_hat_is_grid_point_with_min_distance(self, small_design):
        grid = LambdaGrid.default(step=0.05)
        res = estimate_ivqr(small_design, 0.5, grid, compute_covariance=False)
        assert res.lambda_hat in [float(v) for v in grid.values]
        dists = [pt.distance for pt in res.gamma_profile]
        sel = [pt.distance for pt in res.gamma_profile if pt.lambda_j == res.lambda_hat]
        assert sel[0] == min(dists)

    def test_boundary_flag(self, small_design):
        grid = LambdaGrid(np.array([-0.1, 0.0, 0.1]))
        res = estimate_ivqr(small_design, 0.5, grid, compute_covariance=False)
        if res.lambda_hat in (-0.1, 0.1):
            assert res.at_grid_boundary
        else:
            assert not res.at_grid_boundary

    def test_sign_equivariance_through_mirror_quantile(self, rook5):
        spec = DgpSpec(rho0=0.2, lambda0=0.3, beta0=[1.0], n=25, t=4, seed=21)
        data, _ = simulate(spec, rook5, rook5)
        design = build_design(data, rook5, rook5, InstrumentRule.FITTED_SPATIAL_LAG)
        flipped = build_design(
            type(data)(data.n, data.t, -data.y, -data.x),
            rook5,
            rook5,
            InstrumentRule.FITTED_SPATIAL_LAG,
        )
        grid = LambdaGrid.default(step=0.05)
        a = estimate_ivqr(design, 0.3, grid, compute_covariance=False)
        b = estimate_ivqr(flipped, 0.7, grid, compute_covariance=False)
        assert a.lambda_hat == pytest.approx(b.lambda_hat, abs=0.05 + 1e-12)
        np.testing.assert_allclose(
            b.alpha_star_hat[:2], a.alpha_star_hat[:2], atol=0.2
        )

    def test_covariance_attached_and_psd(self, small_design):
        res = estimate_ivqr(small_design, 0.5, LambdaGrid.default(step=0.05))
        assert res.covariance is not None
        assert res.covariance.shape == (5, 5)
        eig = np.linalg.eigvalsh(res.covariance)
        assert eig.min() > -1e-8 * max(1.0, eig.max())

    def test_weight_rescaling_leaves_selection_unchanged(self, small_design):
        grid = LambdaGrid.default(step=0.1)
        a = estimate_ivqr(small_design, 0.5, grid, compute_covariance=False)
        b = estimate_ivqr(
            small_design, 0.5, grid, weight=7.5 * np.eye(1), compute_covariance=False
        )
        assert a.lambda_hat == b.lambda_hat

    def test_individual_only_mode_has_no_psi(self, rook5):
        spec = DgpSpec(
            rho0=0.2, lambda0=0.3, beta0=[1.0], n=25, t=4, seed=2,
            effects=EffectsMode.INDIVIDUAL_ONLY,
        )
        data, _ = simulate(spec, rook5, rook5)
        design = build_design(data, rook5, rook5, InstrumentRule.FITTED_SPATIAL_LAG)
        res = estimate_ivqr(
            design, 0.5, LambdaGrid.default(step=0.1),
            effects=EffectsMode.INDIVIDUAL_ONLY, compute_covariance=False,
        )
        assert res.psi_star_hat.size == 0
        assert res.nu_star_hat.size == 25


class TestEstimateOls:
    def test_noise_free_recovers_rho_beta(self, rook5):
        design, _ = _noise_free_design(rook5, 25, 4, rho0=0.25, lambda0=0.4, seed=3)
        res = estimate_ols(design)
        assert res.rho_hat == pytest.approx(0.25, abs=1e-8)
        assert res.beta_hat[0] == pytest.approx(1.0, abs=1e-8)
        # with zero disturbance the residual is zero and lambda defaults to 0:
        # the error process leaves no trace in the data
        assert res.lambda_hat == 0.0

    def test_rho_bias_positive_and_larger_than_ivqr(self, rook7):
        # mean regression treats the endogenous spatial lag as exogenous and
        # overstates it; the instrumented QR estimator does substantially better
        rho_err_ols, rho_err_ivqr = [], []
        grid = LambdaGrid.default(step=0.05)
        for seed in range(12):
            spec = DgpSpec(rho0=0.5, lambda0=0.2, beta0=[1.0], n=49, t=5, seed=seed)
            data, _ = simulate(spec, rook7, rook7)
            design = build_design(data, rook7, rook7, InstrumentRule.FITTED_SPATIAL_LAG)
            rho_err_ols.append(estimate_ols(design).rho_hat - 0.5)
            res = estimate_ivqr(design, 0.5, grid, compute_covariance=False)
            rho_err_ivqr.append(res.rho_hat - 0.5)
        assert np.mean(rho_err_ols) > 0
        assert abs(np.mean(rho_err_ols)) > 3 * abs(np.mean(rho_err_ivqr))

    def test_fitted_values_permutation_invariant(self, small_design):
        res = estimate_ols(small_design)
        np.testing.assert_allclose(
            res.fitted + res.residuals,
            small_design.y[small_design.sample_mask],
            atol=1e-10,
        )
