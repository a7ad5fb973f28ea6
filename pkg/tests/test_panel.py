import numpy as np
import pytest

from spivqr.errors import (
    DesignConstructionError,
    InstrumentShapeError,
    InvalidDimensionError,
    PanelFormatError,
)
from spivqr.panel import (
    DgpSpec,
    EffectsMode,
    ErrorDist,
    InstrumentRule,
    PanelData,
    build_design,
    load_panel_csv,
    save_panel_csv,
    simulate,
)
from spivqr.spatial import build_rook_weights, kron_expand


class TestPanelData:
    def test_row_count_validated(self):
        with pytest.raises(InvalidDimensionError):
            PanelData(3, 2, np.zeros(5), np.zeros((5, 1)))

    def test_one_dim_x_promoted(self):
        data = PanelData(2, 2, np.zeros(4), np.zeros(4))
        assert data.x.shape == (4, 1)
        assert data.p == 1


class TestDgpSpec:
    def test_coefficient_bounds(self):
        with pytest.raises(InvalidDimensionError):
            DgpSpec(rho0=1.0, lambda0=0.0, beta0=[1.0], n=4, t=2)
        with pytest.raises(InvalidDimensionError):
            DgpSpec(rho0=0.0, lambda0=-1.0, beta0=[1.0], n=4, t=2)

    def test_minimum_dimensions(self):
        with pytest.raises(InvalidDimensionError):
            DgpSpec(rho0=0.0, lambda0=0.0, beta0=[1.0], n=1, t=2)


class TestSimulate:
    def test_identity_filters_yield_epsilon(self, rook5):
        # rho0 = lambda0 = 0, beta0 = 0, effects scaled to zero: y = eps
        spec = DgpSpec(
            rho0=0.0, lambda0=0.0, beta0=[0.0], n=25, t=3, seed=9, effect_scale=0.0
        )
        data, effects = simulate(spec, rook5, rook5)
        rng = np.random.default_rng(9)
        rng.standard_normal((75, 1))  # X draw
        rng.standard_normal(25)  # nu draw
        rng.standard_normal(3)  # psi draw
        from scipy.special import ndtri

        eps = ndtri(rng.random(75))
        np.testing.assert_allclose(data.y, eps, atol=1e-12)

    def test_same_seed_is_bitwise_identical(self, rook5):
        spec = DgpSpec(rho0=0.2, lambda0=0.5, beta0=[1.0], n=25, t=4, seed=33)
        d1, _ = simulate(spec, rook5, rook5)
        d2, _ = simulate(spec, rook5, rook5)
        assert np.array_equal(d1.y, d2.y)
        assert np.array_equal(d1.x, d2.x)

    def test_spatial_multiplier_inflates_variance(self, rook7):
        # var(y) > var(eps) on average across seeds: the autoregressive
        # filters and the effects add variance on top of the disturbance
        wins = 0
        for seed in range(50):
            spec = DgpSpec(rho0=0.2, lambda0=0.5, beta0=[1.0], n=49, t=5, seed=seed)
            data, _ = simulate(spec, rook7, rook7)
            rng = np.random.default_rng(seed)
            rng.standard_normal((245, 1))
            rng.standard_normal(49)
            rng.standard_normal(5)
            from scipy.special import ndtri

            eps = ndtri(rng.random(245))
            if np.var(data.y) > np.var(eps):
                wins += 1
        assert wins == 50

    def test_individual_only_zeroes_psi(self, rook5):
        spec = DgpSpec(
            rho0=0.1, lambda0=0.2, beta0=[1.0], n=25, t=3, seed=5,
            effects=EffectsMode.INDIVIDUAL_ONLY,
        )
        _, effects = simulate(spec, rook5, rook5)
        assert np.all(effects.psi == 0)

    def test_cauchy_draw_count_matches_normal(self, rook5):
        # inverse-CDF sampling consumes the same uniforms for both laws,
        # so X and the effects coincide across error distributions
        a = DgpSpec(rho0=0.1, lambda0=0.1, beta0=[1.0], n=25, t=3, seed=7)
        b = DgpSpec(
            rho0=0.1, lambda0=0.1, beta0=[1.0], n=25, t=3, seed=7,
            error_dist=ErrorDist.CAUCHY,
        )
        da, ea = simulate(a, rook5, rook5)
        db, eb = simulate(b, rook5, rook5)
        np.testing.assert_array_equal(da.x, db.x)
        np.testing.assert_array_equal(ea.nu, eb.nu)

    def test_dimension_mismatch_rejected(self, rook5):
        spec = DgpSpec(rho0=0.1, lambda0=0.1, beta0=[1.0], n=24, t=3)
        with pytest.raises(DesignConstructionError):
            simulate(spec, rook5, rook5)


class TestStackingConvention:
    def test_observation_position(self):
        # observation (i, t), zero-based, sits at row t*N + i
        n, t = 3, 2
        y = np.arange(6.0)
        data = PanelData(n, t, y, np.zeros(6))
        assert data.y[1 * n + 2] == 5.0


class TestBuildDesign:
    def test_d_is_neighbor_average(self, rook5):
        spec = DgpSpec(rho0=0.2, lambda0=0.3, beta0=[1.0], n=25, t=3, seed=2)
        data, _ = simulate(spec, rook5, rook5)
        design = build_design(data, rook5, rook5, InstrumentRule.LAGGED_Y)
        big = kron_expand(rook5, 3)
        np.testing.assert_allclose(design.d, big @ data.y, atol=1e-12)

    def test_dummy_rows_are_one_hot(self, small_design):
        assert np.all(small_design.z1.sum(axis=1) == 1)
        assert np.all(small_design.z2.sum(axis=1) == 1)

    def test_doubled_blocks_carry_negated_product(self, rook5):
        spec = DgpSpec(rho0=0.2, lambda0=0.3, beta0=[1.0], n=25, t=2, seed=3)
        data, _ = simulate(spec, rook5, rook5)
        design = build_design(data, rook5, rook5, InstrumentRule.LAGGED_Y)
        big = kron_expand(rook5, 2)
        np.testing.assert_allclose(
            design.z1_star[:, 25:], -big @ design.z1, atol=1e-12
        )
        np.testing.assert_allclose(
            design.z2_star[:, 2:], -big @ design.z2, atol=1e-12
        )

    def test_transform_identity(self, rook5):
        # Z* (alpha, lambda0*alpha) == (I - lambda0 M*) Z alpha: the algebra
        # that makes the doubled block equivalent to quasi-differencing
        spec = DgpSpec(rho0=0.2, lambda0=0.45, beta0=[1.0, -0.5], n=25, t=3, seed=4)
        data, _ = simulate(spec, rook5, rook5)
        design = build_design(data, rook5, rook5, InstrumentRule.LAGGED_Y)
        alpha = np.array([0.7, 1.0, -0.5])
        alpha_star = np.concatenate([alpha, 0.45 * alpha])
        z = design.z_star[:, :3]
        big = kron_expand(rook5, 3)
        lhs = design.z_star @ alpha_star
        rhs = (np.eye(75) - 0.45 * big) @ (z @ alpha)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_lagged_y_mask_and_column(self, rook7):
        spec = DgpSpec(rho0=0.2, lambda0=0.5, beta0=[1.0], n=49, t=5, seed=1)
        data, _ = simulate(spec, rook7, rook7)
        design = build_design(data, rook7, rook7, InstrumentRule.LAGGED_Y)
        assert design.n_eff == 196
        assert not design.sample_mask[:49].any()
        np.testing.assert_allclose(design.instruments[49:, 0], data.y[:-49])

    def test_fitted_spatial_lag_uses_all_rows(self, small_design):
        assert small_design.n_eff == 100
        assert small_design.instruments.shape == (100, 1)

    def test_fitted_instrument_is_projection(self, rook5):
        spec = DgpSpec(rho0=0.2, lambda0=0.5, beta0=[1.0], n=25, t=4, seed=42)
        data, _ = simulate(spec, rook5, rook5)
        design = build_design(data, rook5, rook5, InstrumentRule.FITTED_SPATIAL_LAG)
        big = kron_expand(rook5, 4)
        x = data.x
        z1 = np.kron(np.ones((4, 1)), np.eye(25))
        z2 = np.kron(np.eye(4), np.ones((25, 1)))
        stage1 = np.hstack([x, big @ x, big @ big @ x, z1, z2[:, 1:]])
        coef, *_ = np.linalg.lstsq(stage1, design.d, rcond=None)
        np.testing.assert_allclose(design.instruments[:, 0], stage1 @ coef, atol=1e-8)

    def test_user_supplied_requires_matrix(self, rook5):
        spec = DgpSpec(rho0=0.2, lambda0=0.5, beta0=[1.0], n=25, t=3, seed=2)
        data, _ = simulate(spec, rook5, rook5)
        with pytest.raises(InstrumentShapeError):
            build_design(data, rook5, rook5, InstrumentRule.USER_SUPPLIED)
        with pytest.raises(InstrumentShapeError):
            build_design(
                data, rook5, rook5, InstrumentRule.USER_SUPPLIED,
                instruments=np.ones((10, 1)),
            )


class TestPanelCsv:
    def test_round_trip(self, tmp_path, rook5):
        spec = DgpSpec(rho0=0.2, lambda0=0.3, beta0=[1.0, 2.0], n=25, t=3, seed=6)
        data, _ = simulate(spec, rook5, rook5)
        path = tmp_path / "panel.csv"
        save_panel_csv(path, data)
        again = load_panel_csv(path)
        assert (again.n, again.t) == (25, 3)
        np.testing.assert_array_equal(again.y, data.y)
        np.testing.assert_array_equal(again.x, data.x)

    def test_missing_cell_rejected(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text(
            "unit_id,time_id,y,x1\n1,1,0.0,0.0\n2,1,0.0,0.0\n1,2,0.0,0.0\n"
        )
        with pytest.raises(PanelFormatError):
            load_panel_csv(path)

    def test_duplicate_cell_rejected(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text(
            "unit_id,time_id,y,x1\n1,1,0.0,0.0\n1,1,1.0,0.0\n"
        )
        with pytest.raises(PanelFormatError):
            load_panel_csv(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,period,y,x1\n1,1,0.0,0.0\n")
        with pytest.raises(PanelFormatError):
            load_panel_csv(path)
