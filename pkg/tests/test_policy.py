import math

import numpy as np
import pytest

import sjde
from sjde.policy import decide_binary_batch, decide_multi_batch, stage_cost_values

from conftest import accumulate


def eq17_cost_at_decision(decision, log_L, delta, weights):
    """Null-measure integrand of the pre-minimization cost at a fixed decision."""
    a, b = weights.a, weights.b
    L = math.exp(min(log_L, 700.0))

    def mass(bij, dij):
        return bij * dij if bij > 0 else 0.0

    if decision == 1:
        return a[0] + mass(b[0, 1], delta[0, 1]) + mass(b[1, 1], delta[1, 1]) * L
    return a[1] * L + mass(b[0, 0], delta[0, 0]) + mass(b[1, 0], delta[1, 0]) * L


class TestDecideBinary:
    def test_pure_detection_reduces_to_threshold(self):
        weights = sjde.make_cost_weights([0.5, 0.5], np.zeros((2, 2)))
        delta = np.full((2, 2), np.nan)
        rng = np.random.default_rng(3)
        for log_L in np.concatenate([rng.uniform(-30, 30, 500), [0.0]]):
            got = sjde.decide_binary(float(log_L), delta, weights).index
            assert got == int(log_L >= 0.0)

    def test_asymmetric_threshold(self):
        weights = sjde.make_cost_weights([0.6, 0.3], np.zeros((2, 2)))
        delta = np.full((2, 2), np.nan)
        threshold = math.log(0.6 / 0.3)
        for log_L in (-1.0, 0.0, threshold - 1e-9, threshold + 1e-9, 2.0):
            got = sjde.decide_binary(log_L, delta, weights).index
            assert got == int(log_L >= threshold)

    def test_point_mass_null_threshold_form(self, cr_cfg):
        """With the idle-channel cost matrix the rule collapses to
        ``L >= a0 / (a1 + b1 ||x_hat||^2)``."""
        model, weights = cr_cfg.model, cr_cfg.weights
        b1 = weights.b[1, 1]
        for seed in range(40):
            stats, _, _ = accumulate(model, seed % 2, 300 + seed, 1 + seed % 4)
            summary = sjde.summarize_binary(stats, model, weights)
            x_hat = summary.means[1]
            threshold = math.log(weights.a[0]) - math.log(weights.a[1] + b1 * float(x_hat @ x_hat))
            expected = int(summary.log_L >= threshold)
            assert sjde.decide_binary(summary.log_L, summary.delta, weights).index == expected

    def test_symmetric_tie_decides_alternative(self):
        weights = sjde.make_cost_weights([0.5, 0.5], [[0.3, 0.2], [0.2, 0.3]])
        delta = np.array([[0.7, 0.9], [0.9, 0.7]])
        decision = sjde.decide_binary(0.0, delta, weights)
        assert decision.index == 1
        assert decision.tie_broken

    def test_nonpositive_sides(self):
        # b11 * d11 overwhelms a1: the left side is negative for any L
        weights = sjde.make_cost_weights([0.5, 0.1], [[0.0, 0.0], [0.0, 1.0]])
        delta = np.array([[np.nan, np.nan], [np.nan, 5.0]])
        assert sjde.decide_binary(0.0, delta, weights).index == 0
        # both sides negative: magnitudes decide
        weights = sjde.make_cost_weights([0.1, 0.1], [[1.0, 0.0], [0.0, 1.0]])
        delta = np.array([[5.0, np.nan], [np.nan, 5.0]])
        # lhs = 0.1 - 5 = -4.9, rhs = -4.9; L=1 ties, decides 1
        decision = sjde.decide_binary(0.0, delta, weights)
        assert decision.index == 1 and decision.tie_broken

    def test_pointwise_optimality(self, demo_cfg):
        """The returned decision never loses to the flipped one on the
        pre-minimization cost integrand."""
        weights = sjde.make_cost_weights([0.4, 0.6], [[0.5, 0.2], [0.3, 0.7]])
        for seed in range(60):
            stats, _, _ = accumulate(demo_cfg.model, seed % 2, 500 + seed, 1 + seed % 6)
            summary = sjde.summarize_binary(stats, demo_cfg.model, weights)
            d = sjde.decide_binary(summary.log_L, summary.delta, weights).index
            chosen = eq17_cost_at_decision(d, summary.log_L, summary.delta, weights)
            flipped = eq17_cost_at_decision(1 - d, summary.log_L, summary.delta, weights)
            assert chosen <= flipped * (1 + 1e-12)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(13)
        cases = [
            sjde.make_cost_weights([0.4, 0.6], [[0.5, 0.2], [0.3, 0.7]]),
            sjde.make_cost_weights([0.5, 0.5], np.zeros((2, 2))),
            sjde.make_cost_weights([0.1, 0.1], [[1.0, 0.0], [0.0, 1.0]]),
        ]
        for weights in cases:
            log_L = rng.uniform(-25, 25, 300)
            d = rng.uniform(0.0, 6.0, (4, 300))
            batch = decide_binary_batch(log_L, d[0], d[1], d[2], d[3], weights)
            for k in range(300):
                delta = np.array([[d[0, k], d[1, k]], [d[2, k], d[3, k]]])
                assert batch[k] == bool(sjde.decide_binary(float(log_L[k]), delta, weights).index)


class TestStageCostIntegrand:
    def test_pure_detection_form(self):
        weights = sjde.make_cost_weights([0.5, 0.5], np.zeros((2, 2)))
        delta = np.full((2, 2), np.nan)
        assert sjde.stage_cost_integrand(0.0, delta, weights) == pytest.approx(0.5)
        for log_L in (-3.0, -0.5, 0.2, 2.0):
            expected = 0.5 + min(0.5 - 0.5 * math.exp(log_L), 0.0)
            assert sjde.stage_cost_integrand(log_L, delta, weights) == pytest.approx(expected)

    def test_separated_form(self):
        weights = sjde.make_cost_weights([0.5, 0.5], [[0.5, 0.0], [0.0, 0.5]])
        delta = np.array([[0.4, np.nan], [np.nan, 0.3]])
        log_L = 0.7
        expected = (
            min(0.5 - 0.5 * 0.4 - (0.5 - 0.5 * 0.3) * math.exp(log_L), 0.0)
            + 0.5
            + 0.5 * 0.4
        )
        assert sjde.stage_cost_integrand(log_L, delta, weights) == pytest.approx(expected)

    def test_large_ratio_is_linear_in_likelihood(self):
        weights = sjde.make_cost_weights([0.5, 0.5], np.zeros((2, 2)))
        delta = np.full((2, 2), np.nan)
        v40 = sjde.stage_cost_integrand(40.0, delta, weights)
        v41 = sjde.stage_cost_integrand(41.0, delta, weights)
        assert v41 < v40 < 0
        assert v41 / v40 == pytest.approx(math.e, rel=1e-6)

    def test_extreme_ratio_stays_finite(self):
        weights = sjde.make_cost_weights([0.5, 0.5], [[0.5, 0.0], [0.0, 0.5]])
        delta = np.array([[0.4, np.nan], [np.nan, 0.3]])
        value = sjde.stage_cost_integrand(5000.0, delta, weights)
        assert np.isfinite(value)

    def test_scaling_invariance(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            a = rng.uniform(0.1, 1.0, 2)
            b = rng.uniform(0.0, 1.0, (2, 2))
            weights = sjde.make_cost_weights(a, b)
            delta = rng.uniform(0.0, 3.0, (2, 2))
            log_L = float(rng.uniform(-10, 10))
            base_decision = sjde.decide_binary(log_L, delta, weights)
            base_value = sjde.stage_cost_integrand(log_L, delta, weights)
            if abs(base_decision.score_margin) < 1e-9:
                continue
            for lam in (0.5, 2.0, 8.0):
                scaled = sjde.make_cost_weights(lam * a, lam * b)
                assert sjde.decide_binary(log_L, delta, scaled).index == base_decision.index
                assert sjde.stage_cost_integrand(log_L, delta, scaled) == pytest.approx(
                    lam * base_value, rel=1e-12
                )
                x = rng.standard_normal(3)
                x_hat = rng.standard_normal(3)
                assert sjde.realized_cost(1, 0, x, x_hat, scaled) == pytest.approx(
                    lam * sjde.realized_cost(1, 0, x, x_hat, weights), rel=1e-12
                )

    def test_split_values_match_decision_regions(self):
        """The measure-split integrands charge exactly the decided branch."""
        weights = sjde.make_cost_weights([0.4, 0.6], [[0.5, 0.2], [0.3, 0.7]])
        rng = np.random.default_rng(31)
        log_L = rng.uniform(-5, 5, 200)
        d = rng.uniform(0.1, 2.0, (4, 200))
        one = decide_binary_batch(log_L, d[0], d[1], d[2], d[3], weights)
        null_part = sjde.policy.stage_cost_split_values(log_L, d[0], d[1], d[2], d[3], weights, 0)
        alt_part = sjde.policy.stage_cost_split_values(log_L, d[0], d[1], d[2], d[3], weights, 1)
        a, b = weights.a, weights.b
        np.testing.assert_allclose(
            null_part, np.where(one, a[0] + b[0, 1] * d[1], b[0, 0] * d[0]), rtol=1e-12
        )
        np.testing.assert_allclose(
            alt_part, np.where(one, b[1, 1] * d[3], a[1] + b[1, 0] * d[2]), rtol=1e-12
        )


class TestRealizedCost:
    def test_perfect_run_costs_nothing(self):
        weights = sjde.make_cost_weights([0.5, 0.5], [[0.5, 0.0], [0.0, 0.5]])
        x = np.array([1.0, -2.0])
        assert sjde.realized_cost(1, 1, x, x.copy(), weights) == 0.0

    def test_pure_detection_penalty(self):
        weights = sjde.make_cost_weights([0.7, 0.5], [[0.5, 0.0], [0.0, 0.5]])
        assert sjde.realized_cost(0, 1, np.ones(2), np.ones(2), weights) == pytest.approx(0.7)

    def test_idle_channel_missed_detection(self):
        weights = sjde.make_cost_weights([0.5, 0.4], [[0.0, 0.0], [0.6, 0.6]])
        x = np.array([0.5, -1.5])
        # deciding idle fixes the estimate at zero
        expected = 0.4 + 0.6 * float(x @ x)
        assert sjde.realized_cost(1, 0, x, np.zeros(2), weights) == pytest.approx(expected)


class TestDecideMulti:
    def test_pure_ml_reduction(self):
        weights = sjde.make_cost_weights([0.2] * 3, np.zeros((3, 3)))
        rng = np.random.default_rng(5)
        for _ in range(50):
            scores = rng.standard_normal(3)
            got = sjde.decide_multi(scores, np.zeros(3), weights).index
            assert got == int(np.argmax(scores))

    def test_weighted_argmax_example(self):
        weights = sjde.make_cost_weights([0.2, 0.2], np.zeros((2, 2)))
        probabilities = np.log([0.3, 0.7])
        assert sjde.decide_multi(probabilities, np.zeros(2), weights).index == 1

    def test_larger_posterior_cost_lowers_rank(self):
        weights = sjde.make_cost_weights([0.5, 0.5], np.diag([0.8, 0.8]))
        scores = np.array([0.0, 0.0])
        assert sjde.decide_multi(scores, np.array([0.1, 0.3]), weights).index == 0
        assert sjde.decide_multi(scores, np.array([0.3, 0.1]), weights).index == 1

    def test_negative_factors_rank_below_positive(self):
        weights = sjde.make_cost_weights([0.2, 0.2], np.diag([0.8, 0.8]))
        # hypothesis 0 has a hopeless estimation cost, hypothesis 1 a mild one
        decision = sjde.decide_multi(np.array([10.0, -10.0]), np.array([5.0, 0.1]), weights)
        assert decision.index == 1

    def test_all_nonpositive_and_equal_is_flagged(self):
        weights = sjde.make_cost_weights([0.2, 0.2], np.diag([0.8, 0.8]))
        decision = sjde.decide_multi(np.zeros(2), np.array([5.0, 5.0]), weights)
        assert decision.index == 0
        assert decision.tie_broken

    def test_rejects_combined_weights(self):
        weights = sjde.make_cost_weights([0.5, 0.5], [[0.0, 0.1], [0.1, 0.0]])
        with pytest.raises(ValueError, match="separated"):
            sjde.decide_multi(np.zeros(2), np.zeros(2), weights)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(19)
        weights = sjde.make_cost_weights([0.2] * 4, np.diag([0.8] * 4))
        for factors in ([0.3, 0.1, 0.2, 0.05], [0.3, -0.1, 0.2, -0.4], [-0.1, -0.2, -0.3, -0.4]):
            factors = np.array(factors)
            deltas = (weights.a - factors) / np.diag(weights.b)
            scores = rng.standard_normal((4, 100))
            batch = decide_multi_batch(scores, factors)
            for k in range(100):
                assert batch[k] == sjde.decide_multi(scores[:, k], deltas, weights).index
