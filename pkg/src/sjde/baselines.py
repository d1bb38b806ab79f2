"""Reference schemes the optimal procedure is compared against.

Two baselines: the sequential probability ratio test followed by the decided
hypothesis's MMSE estimator, and the weighted maximum-likelihood detector
paired with MMSE estimation at an externally supplied deterministic stopping
time.  The SPRT here is the standard one: continue while the log likelihood
ratio stays inside the open interval ``(-B, A)``, stop on exit, decide by the
crossed threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CostWeights, LqgModel, make_cost_weights
from .policy import decide_multi, Decision, realized_cost_parts
from .posterior import (
    log_likelihood_ratio,
    posterior,
    summarize_multi,
    update_sufficient_stats,
    zero_stats,
)
from .rng import stream_seed, substream
from .stopping import ObservationStream, RunResult, _next_pair


class CalibrationError(RuntimeError):
    """The target cost is not reachable within the horizon across the search bracket."""


@dataclass(frozen=True)
class SprtThresholds:
    """Log-domain SPRT thresholds: stop when ``log L`` leaves ``(-B, A)``."""

    A: float
    B: float

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0):
            raise ValueError("both thresholds must be positive")


@dataclass(frozen=True)
class SprtCalibration:
    """Calibrated thresholds with the cost estimate they achieved."""

    thresholds: SprtThresholds
    achieved_cost: float
    cost_std_error: float
    evaluations: int


def run_sprt_mmse(
    model: LqgModel,
    weights: CostWeights,
    thresholds: SprtThresholds,
    data_source: ObservationStream,
    t_max: int,
    seed: int | None = None,
) -> RunResult:
    """SPRT stopping and decision, then the decided hypothesis's MMSE estimate.

    Hitting the horizon cap truncates the run and decides by the sign of the
    log likelihood ratio.  ``seed`` is accepted for interface parity with the
    other runners; the baseline draws nothing itself.
    """
    if not model.is_binary:
        raise ValueError("the SPRT baseline is binary")
    prior0, prior1 = model.priors
    stats = zero_stats(model.n_params)
    pairs = iter(data_source.pairs)
    trace: list[float] = []
    log_L = 0.0
    truncated = True
    for t in range(1, t_max + 1):
        y, H = _next_pair(pairs, t)
        stats = update_sufficient_stats(stats, H, y)
        log_L = log_likelihood_ratio(stats, prior0, prior1, model.noise_variance)
        trace.append(log_L)
        if log_L >= thresholds.A or log_L <= -thresholds.B:
            truncated = False
            break

    if truncated:
        index = 1 if log_L >= 0 else 0
    else:
        index = 1 if log_L >= thresholds.A else 0
    decision = Decision(index=index, score_margin=log_L)
    x_hat = posterior(stats, model.priors[index], model.noise_variance)[0]
    if data_source.truth is not None and data_source.x is not None:
        detection, estimation = realized_cost_parts(
            data_source.truth, index, data_source.x, x_hat, weights
        )
    else:
        detection = estimation = None
    return RunResult(
        stopping_time=stats.t,
        decision=decision,
        estimate=x_hat,
        truncated=truncated,
        detection_cost=detection,
        estimation_cost=estimation,
        log_likelihood_trace=tuple(trace),
    )


def _batched_scores(U: np.ndarray, v: np.ndarray, prior, noise_variance: float):
    """Marginal-likelihood scores and posterior means for stacked ``(U, v)`` states."""
    if prior.is_point_mass:
        n = U.shape[0]
        return np.zeros(n), np.zeros((n, prior.dim))
    P = U / noise_variance + prior.precision
    w = v / noise_variance + prior.precision_mean
    mean = np.linalg.solve(P, w[..., None])[..., 0]
    quad = np.sum(w * mean, axis=1)
    log_det = np.linalg.slogdet(P)[1]
    score = 0.5 * quad - 0.5 * (prior.mean_quad + prior.log_det_covariance + log_det)
    return score, mean


def _sprt_truth_batch(
    model: LqgModel,
    weights: CostWeights,
    thresholds: SprtThresholds,
    truth: int,
    trials: int,
    t_max: int,
    seed: int,
):
    """Run ``trials`` SPRT paths under one truth in lockstep.

    Per-step draws are made for every path regardless of its stopped state,
    so different thresholds see identical data (common random numbers) and
    calibration sweeps are smooth in the threshold scale.
    """
    rng = substream(seed, "sprt-batch", truth)
    prior_truth = model.priors[truth]
    n_params, n_obs = model.n_params, model.n_obs
    if prior_truth.is_point_mass:
        x = np.broadcast_to(prior_truth.mean, (trials, n_params)).copy()
    else:
        root = np.linalg.cholesky(prior_truth.covariance)
        x = prior_truth.mean + rng.standard_normal((trials, n_params)) @ root.T
    noise_sd = float(np.sqrt(model.noise_variance))

    U = np.zeros((trials, n_params, n_params))
    v = np.zeros((trials, n_params))
    active = np.ones(trials, dtype=bool)
    stop_time = np.full(trials, t_max, dtype=int)
    decided = np.zeros(trials, dtype=int)
    truncated = np.zeros(trials, dtype=bool)
    detection = np.zeros(trials)
    estimation = np.zeros(trials)

    def settle(idx, index_decided, means0, means1):
        x_hat = np.where(index_decided[:, None] == 1, means1, means0)
        err = x_hat - x[idx]
        b = weights.b[truth][index_decided]
        detection[idx] = np.where(index_decided != truth, weights.a[truth], 0.0)
        estimation[idx] = b * np.sum(err * err, axis=1)
        decided[idx] = index_decided

    last_log_L = np.zeros(trials)
    for t in range(1, t_max + 1):
        H = model.matrix_source.sample_batch(rng, truth, trials)
        noise = noise_sd * rng.standard_normal((trials, n_obs))
        y = np.einsum("nmi,ni->nm", H, x) + noise
        U += np.einsum("nmi,nmj->nij", H, H)
        v += np.einsum("nmi,nm->ni", H, y)
        if not active.any():
            break
        idx = np.flatnonzero(active)
        s0, m0 = _batched_scores(U[idx], v[idx], model.priors[0], model.noise_variance)
        s1, m1 = _batched_scores(U[idx], v[idx], model.priors[1], model.noise_variance)
        log_L = s1 - s0
        last_log_L[idx] = log_L
        crossed = (log_L >= thresholds.A) | (log_L <= -thresholds.B)
        if crossed.any():
            hit = idx[crossed]
            stop_time[hit] = t
            settle(hit, (log_L[crossed] >= thresholds.A).astype(int), m0[crossed], m1[crossed])
            active[hit] = False

    idx = np.flatnonzero(active)
    if idx.size:
        truncated[idx] = True
        s0, m0 = _batched_scores(U[idx], v[idx], model.priors[0], model.noise_variance)
        s1, m1 = _batched_scores(U[idx], v[idx], model.priors[1], model.noise_variance)
        settle(idx, ((s1 - s0) >= 0).astype(int), m0, m1)

    return {
        "stopping_time": stop_time,
        "decision": decided,
        "truncated": truncated,
        "detection_cost": detection,
        "estimation_cost": estimation,
    }


def sprt_batch_cost(
    model: LqgModel,
    weights: CostWeights,
    thresholds: SprtThresholds,
    trials: int,
    t_max: int,
    seed: int,
):
    """Combined Bayes cost of the SPRT+MMSE scheme, Monte Carlo over both truths.

    Returns ``(cost, std_error, mean stopping time)``.  The cost sums the
    per-truth means of the realized contributions, matching the combined cost
    definition.
    """
    total = 0.0
    var = 0.0
    times = []
    for truth in range(2):
        batch = _sprt_truth_batch(
            model, weights, thresholds, truth, trials, t_max, stream_seed(seed, truth)
        )
        contrib = batch["detection_cost"] + batch["estimation_cost"]
        total += float(np.mean(contrib))
        if trials > 1:
            var += float(np.var(contrib, ddof=1)) / trials
        times.append(batch["stopping_time"])
    return total, float(np.sqrt(var)), float(np.mean(np.concatenate(times)))


def calibrate_sprt(
    model: LqgModel,
    weights: CostWeights,
    target_cost: float,
    calibration_trials: int,
    seed: int,
    *,
    t_max: int = 200,
    band: float = 0.02,
    scale_min: float = 1e-3,
    scale_max: float = 64.0,
    max_iterations: int = 60,
) -> SprtCalibration:
    """Select symmetric thresholds so the achieved cost lands in ``[target-band, target]``.

    Bisects a single scale factor ``s`` with ``A = B = s`` on a log scale.
    The achieved cost decreases as thresholds grow (more data before
    stopping), so the bracket is found by doubling.  All evaluations reuse
    the same derived data streams, which makes the cost a stable function of
    the scale during the search.
    """
    if not target_cost > 0:
        raise ValueError("the target cost must be positive")

    evaluations = 0

    def cost_at(scale: float):
        nonlocal evaluations
        evaluations += 1
        thresholds = SprtThresholds(A=scale, B=scale)
        cost, se, _ = sprt_batch_cost(
            model, weights, thresholds, calibration_trials, t_max, stream_seed(seed, "cal")
        )
        return cost, se

    cost, se = cost_at(scale_min)
    if cost <= target_cost:
        return SprtCalibration(SprtThresholds(scale_min, scale_min), cost, se, evaluations)

    low = scale_min
    high = None
    scale = max(1.0, 2.0 * scale_min)
    while scale <= scale_max:
        cost, se = cost_at(scale)
        if cost <= target_cost:
            high, high_cost, high_se = scale, cost, se
            break
        low = scale
        scale *= 2.0
    if high is None:
        raise CalibrationError(
            f"cost {cost:.4f} still above target {target_cost} at threshold scale {scale / 2.0}"
        )

    while high_cost < target_cost - band and evaluations < max_iterations:
        mid = float(np.sqrt(low * high))
        cost, se = cost_at(mid)
        if cost > target_cost:
            low = mid
        else:
            high, high_cost, high_se = mid, cost, se
    return SprtCalibration(SprtThresholds(high, high), high_cost, high_se, evaluations)


def run_ml_mmse(
    model: LqgModel,
    weights: CostWeights,
    schedule_T: int,
    data_source: ObservationStream,
    seed: int | None = None,
) -> RunResult:
    """Weighted maximum-likelihood detection at a supplied deterministic stopping time.

    Decides ``argmax_j a_j p_j`` (no estimation-quality term in the score) and
    then applies the decided hypothesis's MMSE estimator.  With a single
    hypothesis the decision is forced and only the estimator acts.
    """
    if schedule_T < 1:
        raise ValueError("the stopping time must be at least 1")
    matrices = getattr(model.matrix_source, "matrices", None)
    if matrices is None:
        raise ValueError("ML+MMSE requires fixed per-hypothesis matrices")
    stats = [zero_stats(model.n_params) for _ in model.priors]
    pairs = iter(data_source.pairs)
    for t in range(1, schedule_T + 1):
        y, _observed_H = _next_pair(pairs, t)
        stats = [update_sufficient_stats(s, Hj, y) for s, Hj in zip(stats, matrices)]

    summary = summarize_multi(stats, model)
    ml_weights = make_cost_weights(weights.a, np.zeros_like(weights.b))
    decision = decide_multi(summary.log_scores, np.zeros(model.n_hypotheses), ml_weights)
    x_hat = np.asarray(summary.means[decision.index]).copy()
    if data_source.truth is not None and data_source.x is not None:
        detection, estimation = realized_cost_parts(
            data_source.truth, decision.index, data_source.x, x_hat, weights
        )
    else:
        detection = estimation = None
    return RunResult(
        stopping_time=schedule_T,
        decision=decision,
        estimate=x_hat,
        truncated=False,
        detection_cost=detection,
        estimation_cost=estimation,
    )
