import numpy as np
import pytest

import sjde
from sjde.model import (
    DiagonalMatrixSource,
    FixedMatrixSource,
    GaussianMatrixSource,
    validate_run_setup,
)


class TestMakeGaussianPrior:
    def test_demo_prior_is_proper(self):
        prior = sjde.make_gaussian_prior(np.ones(3), 0.5 * np.eye(3))
        assert prior.kind == "proper-gaussian"
        np.testing.assert_array_equal(prior.mean, np.ones(3))
        np.testing.assert_allclose(prior.precision, 2.0 * np.eye(3), rtol=1e-14)

    def test_zero_covariance_is_point_mass(self):
        prior = sjde.make_gaussian_prior(np.zeros(4), np.zeros((4, 4)))
        assert prior.kind == "point-mass"
        assert prior.is_point_mass

    def test_point_mass_requires_zero_mean(self):
        with pytest.raises(ValueError, match="mean zero"):
            sjde.make_gaussian_prior([1.0, 0.0], np.zeros((2, 2)))

    def test_rejects_non_symmetric_covariance(self):
        cov = np.array([[1.0, 0.3], [0.2, 1.0]])
        with pytest.raises(ValueError, match="symmetric"):
            sjde.make_gaussian_prior([0.0, 0.0], cov)

    def test_rejects_indefinite_covariance(self):
        cov = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        with pytest.raises(ValueError, match="positive definite"):
            sjde.make_gaussian_prior([0.0, 0.0], cov)

    def test_rejects_near_singular_covariance(self):
        cov = np.diag([1.0, 1e-13])
        with pytest.raises(ValueError, match="positive definite"):
            sjde.make_gaussian_prior([0.0, 0.0], cov)

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            sjde.make_gaussian_prior([0.0, 0.0], np.eye(3))

    def test_cached_solver_pieces(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = rng.integers(1, 5)
            root = rng.standard_normal((n, n))
            cov = root @ root.T + n * np.eye(n)
            mean = rng.standard_normal(n)
            prior = sjde.make_gaussian_prior(mean, cov)
            np.testing.assert_allclose(prior.precision @ cov, np.eye(n), atol=1e-10)
            np.testing.assert_allclose(prior.precision_mean, prior.precision @ mean, atol=1e-10)
            assert prior.log_det_covariance == pytest.approx(np.linalg.slogdet(cov)[1])
            assert prior.mean_quad == pytest.approx(mean @ prior.precision @ mean)

    def test_arrays_are_immutable(self):
        prior = sjde.make_gaussian_prior(np.ones(2), np.eye(2))
        with pytest.raises(ValueError):
            prior.mean[0] = 7.0


class TestMakeCostWeights:
    def test_demo_weights_are_separated(self):
        w = sjde.make_cost_weights([0.5, 0.5], [[0.5, 0.0], [0.0, 0.5]])
        assert w.kind == "separated"

    def test_grid_weights_are_separated(self):
        w = sjde.make_cost_weights(np.full(5, 0.2), np.diag(np.full(5, 0.8)))
        assert w.kind == "separated"

    def test_all_zero_b_is_pure_detection(self):
        w = sjde.make_cost_weights([0.5, 0.5], np.zeros((2, 2)))
        assert w.kind == "pure-detection"

    def test_off_diagonal_mass_is_combined(self):
        w = sjde.make_cost_weights([0.5, 0.5], [[0.0, 0.0], [0.5, 0.5]])
        assert w.kind == "combined"

    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError, match="nonnegative"):
            sjde.make_cost_weights([0.5, -0.1], np.zeros((2, 2)))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            sjde.make_cost_weights([0.5, 0.5], np.zeros((3, 3)))

    def test_rejects_all_zero_detection_weights(self):
        with pytest.raises(ValueError, match="at least one"):
            sjde.make_cost_weights([0.0, 0.0], np.eye(2))


class TestMatrixSources:
    def test_gaussian_source_shapes(self):
        src = GaussianMatrixSource(rows=2, cols=3)
        rng = np.random.default_rng(0)
        assert src.sample(rng, 0).shape == (2, 3)
        assert src.sample_batch(rng, 0, 5).shape == (5, 2, 3)

    def test_diagonal_source_builds_grouped_diagonals(self):
        src = DiagonalMatrixSource(groups=(0, 0, 1))
        rng = np.random.default_rng(1)
        H = src.sample(rng, 0)
        assert H.shape == (3, 3)
        assert H[0, 0] == H[1, 1]
        assert not (H - np.diag(np.diag(H))).any()

    def test_diagonal_source_rejects_gappy_groups(self):
        with pytest.raises(ValueError, match="consecutive"):
            DiagonalMatrixSource(groups=(0, 2))

    def test_fixed_source_is_per_hypothesis(self):
        src = FixedMatrixSource(matrices=(np.eye(2), 2 * np.eye(2)))
        rng = np.random.default_rng(2)
        np.testing.assert_array_equal(src.sample(rng, 1), 2 * np.eye(2))
        assert src.sample_batch(rng, 0, 4).shape == (4, 2, 2)

    def test_fixed_source_rejects_mixed_shapes(self):
        with pytest.raises(ValueError, match="share"):
            FixedMatrixSource(matrices=(np.eye(2), np.eye(3)))


class TestLqgModel:
    def _priors(self):
        return (
            sjde.make_gaussian_prior(np.ones(2), np.eye(2)),
            sjde.make_gaussian_prior(-np.ones(2), np.eye(2)),
        )

    def test_valid_model(self):
        model = sjde.LqgModel(
            n_params=2, n_obs=1, noise_variance=1.0, priors=self._priors(),
            matrix_source=GaussianMatrixSource(rows=1, cols=2),
        )
        assert model.is_binary and not model.has_point_mass_null

    def test_rejects_nonpositive_noise(self):
        with pytest.raises(ValueError, match="noise variance"):
            sjde.LqgModel(
                n_params=2, n_obs=1, noise_variance=0.0, priors=self._priors(),
                matrix_source=GaussianMatrixSource(rows=1, cols=2),
            )

    def test_rejects_prior_dimension_mismatch(self):
        bad = (sjde.make_gaussian_prior(np.ones(3), np.eye(3)),) + self._priors()[1:]
        with pytest.raises(ValueError, match="share the parameter dimension"):
            sjde.LqgModel(
                n_params=2, n_obs=1, noise_variance=1.0, priors=bad,
                matrix_source=GaussianMatrixSource(rows=1, cols=2),
            )

    def test_point_mass_only_on_null(self):
        pm = sjde.make_gaussian_prior(np.zeros(2), np.zeros((2, 2)))
        proper = sjde.make_gaussian_prior(np.ones(2), np.eye(2))
        with pytest.raises(ValueError, match="null hypothesis"):
            sjde.LqgModel(
                n_params=2, n_obs=2, noise_variance=1.0, priors=(proper, pm),
                matrix_source=DiagonalMatrixSource(groups=(0, 1)),
            )

    def test_point_mass_null_must_be_binary(self):
        pm = sjde.make_gaussian_prior(np.zeros(2), np.zeros((2, 2)))
        proper = sjde.make_gaussian_prior(np.ones(2), np.eye(2))
        with pytest.raises(ValueError, match="binary"):
            sjde.LqgModel(
                n_params=2, n_obs=2, noise_variance=1.0, priors=(pm, proper, proper),
                matrix_source=DiagonalMatrixSource(groups=(0, 1)),
            )

    def test_diagonal_fast_path_detection(self, cr_cfg, demo_cfg):
        assert cr_cfg.model.is_diagonal
        assert not demo_cfg.model.is_diagonal


class TestRunConfig:
    def test_defaults_validate(self):
        run = sjde.RunConfig(alpha=0.3)
        assert run.t_max == 200

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": 0.0},
            {"alpha": 0.3, "t_max": 0},
            {"alpha": 0.3, "mc_samples": 99},
            {"alpha": 0.3, "master_seed": -1},
            {"alpha": 0.3, "cost_mode": "mixed"},
            {"alpha": 0.3, "stopping_source": "psychic"},
        ],
    )
    def test_rejects_invalid_fields(self, kwargs):
        with pytest.raises(ValueError):
            sjde.RunConfig(**kwargs)


class TestValidateRunSetup:
    def test_separated_mode_needs_separated_weights(self, demo_cfg):
        combined = sjde.make_cost_weights([0.5, 0.5], [[0.1, 0.2], [0.3, 0.4]])
        run = sjde.RunConfig(alpha=0.3, cost_mode="separated")
        with pytest.raises(ValueError, match="separated"):
            validate_run_setup(demo_cfg.model, combined, run)

    def test_point_mass_weight_pattern(self, cr_cfg):
        bad = sjde.make_cost_weights([0.5, 0.5], [[0.1, 0.0], [0.5, 0.5]])
        with pytest.raises(ValueError, match="row 0"):
            validate_run_setup(cr_cfg.model, bad, cr_cfg.run)
        uneven = sjde.make_cost_weights([0.5, 0.5], [[0.0, 0.0], [0.5, 0.4]])
        with pytest.raises(ValueError, match="b10 == b11"):
            validate_run_setup(cr_cfg.model, uneven, cr_cfg.run)

    def test_multi_requires_schedule_source(self, ieee4_cfg):
        import dataclasses

        run = dataclasses.replace(ieee4_cfg.run, stopping_source="online-mc")
        with pytest.raises(ValueError, match="deterministic-schedule"):
            validate_run_setup(ieee4_cfg.model, ieee4_cfg.weights, run)

    def test_binary_rejects_schedule_source(self, demo_cfg):
        import dataclasses

        run = dataclasses.replace(demo_cfg.run, stopping_source="deterministic-schedule")
        with pytest.raises(ValueError, match="multi-hypothesis"):
            validate_run_setup(demo_cfg.model, demo_cfg.weights, run)
