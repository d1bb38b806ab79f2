"""Monte Carlo estimation of the optimal stage cost and the stopping engines.

The stopping rule halts at the first time the optimal cost falls to the
target accuracy level.  That cost is a conditional expectation over the data
statistic ``v`` given the accumulated Fisher statistic ``U``, so it can be
estimated by sampling ``v`` from its known law ``N(U mu_i, U Sigma_i U +
sigma^2 U)`` and averaging the stage-cost integrand.  Three stopping sources
are supported: fresh per-state estimation (online), nearest-point lookup in a
precomputed cost grid, and the fully deterministic offline schedule of the
multi-hypothesis case with fixed matrices.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .config import model_hash
from .model import (
    CostWeights,
    DiagonalMatrixSource,
    FixedMatrixSource,
    LqgModel,
    RunConfig,
    require_point_mass_weights,
    validate_run_setup,
)
from .policy import (
    Decision,
    decide_binary,
    decide_multi,
    decide_multi_batch,
    realized_cost_parts,
    stage_cost_split_values,
)
from .posterior import (
    SufficientStats,
    delta_weights,
    mixture_estimate,
    posterior_factor,
    summarize_binary,
    summarize_multi,
    update_sufficient_stats,
    zero_stats,
)
from .rng import stream_seed, substream

GRID_FILE_FORMAT = "sjde-cost-grid"
GRID_FILE_VERSION = 1


class DataExhaustedError(RuntimeError):
    """The data source ran out before the stopping rule or the horizon cap fired."""


class AlphaUnreachableError(RuntimeError):
    """The target accuracy level is not reached within the horizon.

    Carries the evaluated cost curve so callers can still report it.
    """

    def __init__(self, alpha: float, cost_curve: tuple["CostEstimate", ...]):
        super().__init__(
            f"target accuracy level {alpha} not reached within {len(cost_curve)} steps"
        )
        self.alpha = alpha
        self.cost_curve = cost_curve


@dataclass(frozen=True)
class CostEstimate:
    """A Monte Carlo estimate of the optimal cost at one state."""

    mean: float
    std_error: float
    replicates: int
    extrapolated: bool = False

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("standard error cannot be negative")
        if self.replicates < 1:
            raise ValueError("at least one replicate is required")


def _validated_statistic(U) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError("the Fisher statistic must be a square matrix")
    scale = max(1.0, np.max(np.abs(U), initial=0.0))
    if np.max(np.abs(U - U.T), initial=0.0) > 1e-10 * scale:
        raise ValueError("the Fisher statistic must be symmetric")
    U = (U + U.T) / 2.0
    if U.any() and float(np.linalg.eigvalsh(U)[0]) < -1e-8 * scale:
        raise ValueError("the Fisher statistic must be positive semidefinite")
    return U


def _is_diagonal(U: np.ndarray) -> bool:
    return not (U - np.diag(np.diag(U))).any()


def _sample_statistic(
    U: np.ndarray, prior, noise_variance: float, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Draw replicates of the data statistic ``v`` given ``U`` under one hypothesis.

    ``v = U x + sum H' w`` is Gaussian with mean ``U mu`` and covariance
    ``U Sigma U + sigma^2 U``; a point-mass prior contributes no parameter
    spread.  Rank-deficient ``U`` is handled by factorizing the covariance
    with eigenvalue clipping at zero, which confines the draw to the column
    space of ``U``.
    """
    if _is_diagonal(U) and prior.is_diagonal:
        u = np.diag(U)
        mean = u * prior.mean
        var = prior.variances * u**2 + noise_variance * u
        return mean[:, None] + np.sqrt(var)[:, None] * rng.standard_normal((u.shape[0], size))
    mean = U @ prior.mean
    cov = U @ prior.covariance @ U + noise_variance * U
    cov = (cov + cov.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(cov)
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return mean[:, None] + root @ rng.standard_normal((U.shape[0], size))


def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    n = values.shape[0]
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return mean, se


def estimate_optimal_cost(
    U, model: LqgModel, weights: CostWeights, mc_samples: int, seed: int
) -> CostEstimate:
    """Estimate the optimal cost at the state ``U`` by Monte Carlo.

    Draws replicates of the data statistic under the measure each part of the
    cost expectation requires: the null measure for the null-hypothesis terms
    and the alternative's measure for the terms the change of measure moves
    there.  Both parts evaluate the pointwise-optimal decision, so their sum
    is the optimal cost with bounded per-replicate integrands.
    """
    if not model.is_binary or weights.n_hypotheses != 2:
        raise ValueError("optimal-cost estimation covers the binary case")
    if mc_samples < 1:
        raise ValueError("need at least one replicate")
    U = _validated_statistic(U)
    noise = model.noise_variance
    prior0, prior1 = model.priors
    if model.has_point_mass_null:
        require_point_mass_weights(weights)
    f0 = posterior_factor(U, prior0, noise)
    f1 = posterior_factor(U, prior1, noise)

    def measure_part(under: int) -> tuple[float, float]:
        tag = "null" if under == 0 else "alt"
        v = _sample_statistic(
            U, model.priors[under], noise, substream(seed, "stage-cost", tag), mc_samples
        )
        e0 = f0.mean(v)
        e1 = f1.mean(v)
        log_L = f1.score(v) - f0.score(v)
        if model.has_point_mass_null:
            norm_sq = np.sum(e1 * e1, axis=0)
            deltas = [0.0, norm_sq, f1.trace + norm_sq, f1.trace]
        else:
            dist_sq = np.sum((e0 - e1) ** 2, axis=0)
            b = weights.b
            deltas = [np.nan] * 4  # d00, d01, d10, d11
            for j in range(2):
                if b[0, j] == 0 and b[1, j] == 0:
                    continue
                d0, d1 = delta_weights(log_L, b[0, j], b[1, j])
                deltas[j] = f0.trace + d0 * dist_sq
                deltas[2 + j] = f1.trace + d1 * dist_sq
        return _mean_and_se(stage_cost_split_values(log_L, *deltas, weights, under))

    mean0, se0 = measure_part(0)
    mean1, se1 = measure_part(1)
    return CostEstimate(mean0 + mean1, float(np.hypot(se0, se1)), mc_samples)


# ---------------------------------------------------------------------------
# Cost grids over the reachable U-statistic space
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CostGrid:
    """Optimal-cost estimates on a lattice of U-statistic coordinates.

    Coordinates are per-channel gain-energy sums for diagonal models (one per
    channel group) and flattened upper-triangle entries for dense models.
    """

    axes: tuple[np.ndarray, ...]
    means: np.ndarray
    std_errors: np.ndarray
    mc_samples: int
    seed: int
    model_hash: str
    coords_kind: str  # "diagonal" | "dense-upper"
    groups: tuple[int, ...] | None
    n_params: int

    @property
    def n_points(self) -> int:
        return int(self.means.size)


def _grid_layout(model: LqgModel) -> tuple[str, tuple[int, ...] | None, int]:
    if isinstance(model.matrix_source, DiagonalMatrixSource):
        groups = model.matrix_source.groups
        return "diagonal", groups, max(groups) + 1
    n = model.n_params
    return "dense-upper", None, n * (n + 1) // 2


def _coords_to_matrix(kind: str, groups, n_params: int, coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if kind == "diagonal":
        return np.diag(coords[list(groups)])
    iu = np.triu_indices(n_params)
    U = np.zeros((n_params, n_params))
    U[iu] = coords
    return U + U.T - np.diag(np.diag(U))


def _matrix_to_coords(kind: str, groups, n_params: int, U: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if kind == "diagonal":
        diag = np.diag(U)
        firsts = [list(groups).index(g) for g in range(max(groups) + 1)]
        return diag[firsts]
    return U[np.triu_indices(n_params)]


def _grid_point_job(args):
    U, model, weights, mc_samples, point_seed = args
    est = estimate_optimal_cost(U, model, weights, mc_samples, point_seed)
    return est.mean, est.std_error


def build_cost_grid(
    axes,
    model: LqgModel,
    weights: CostWeights,
    mc_samples: int,
    seed: int,
    *,
    workers: int = 1,
) -> CostGrid:
    """Populate a cost grid over the given per-dimension breakpoints.

    Every point gets its own derived seed, so the result is deterministic and
    identical for any worker count.
    """
    kind, groups, dim = _grid_layout(model)
    axes = tuple(np.asarray(ax, dtype=float) for ax in axes)
    if len(axes) != dim:
        raise ValueError(f"model requires {dim} grid dimensions, got {len(axes)}")
    for ax in axes:
        if ax.ndim != 1 or ax.size == 0:
            raise ValueError("every grid axis needs at least one breakpoint")
        if ax.size > 1 and not np.all(np.diff(ax) > 0):
            raise ValueError("grid axes must be strictly increasing")
        if kind == "diagonal" and ax[0] < 0:
            raise ValueError("diagonal-statistic breakpoints must be nonnegative")

    lens = tuple(ax.size for ax in axes)
    jobs = []
    for flat, index in enumerate(np.ndindex(*lens)):
        coords = np.array([axes[d][index[d]] for d in range(dim)])
        U = _coords_to_matrix(kind, groups, model.n_params, coords)
        jobs.append((U, model, weights, mc_samples, stream_seed(seed, "grid-point", flat)))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_grid_point_job, jobs, chunksize=8))
    else:
        results = [_grid_point_job(job) for job in jobs]

    means = np.array([r[0] for r in results]).reshape(lens)
    ses = np.array([r[1] for r in results]).reshape(lens)
    return CostGrid(
        axes=axes,
        means=means,
        std_errors=ses,
        mc_samples=mc_samples,
        seed=int(seed),
        model_hash=model_hash(model),
        coords_kind=kind,
        groups=groups,
        n_params=model.n_params,
    )


def _nearest_index(axis: np.ndarray, x: float) -> tuple[int, bool]:
    i = int(np.searchsorted(axis, x))
    if i == 0:
        return 0, bool(x < axis[0])
    if i == axis.size:
        return axis.size - 1, bool(x > axis[-1])
    # Equidistant queries resolve to the lower breakpoint.
    return (i - 1, False) if x - axis[i - 1] <= axis[i] - x else (i, False)


def lookup_cost(grid: CostGrid, U) -> CostEstimate:
    """Cost estimate at the grid point nearest to ``U``.

    Nearest under Euclidean distance in the grid's flattened coordinates,
    which for a lattice separates into per-axis nearest breakpoints.
    Out-of-range queries clamp to the boundary and flag extrapolation.
    """
    coords = _matrix_to_coords(grid.coords_kind, grid.groups, grid.n_params, np.asarray(U, float))
    index = []
    extrapolated = False
    for ax, x in zip(grid.axes, coords):
        i, out = _nearest_index(ax, float(x))
        index.append(i)
        extrapolated = extrapolated or out
    idx = tuple(index)
    return CostEstimate(
        mean=float(grid.means[idx]),
        std_error=float(grid.std_errors[idx]),
        replicates=grid.mc_samples,
        extrapolated=extrapolated,
    )


def save_cost_grid(grid: CostGrid, path) -> None:
    """Serialize a cost grid with embedded provenance metadata."""
    payload = {
        "format": GRID_FILE_FORMAT,
        "version": GRID_FILE_VERSION,
        "model_hash": grid.model_hash,
        "seed": grid.seed,
        "mc_samples": grid.mc_samples,
        "coords_kind": grid.coords_kind,
        "groups": list(grid.groups) if grid.groups is not None else None,
        "n_params": grid.n_params,
        "axes": [ax.tolist() for ax in grid.axes],
        "means": grid.means.ravel().tolist(),
        "std_errors": grid.std_errors.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def load_cost_grid(path, model: LqgModel) -> CostGrid:
    """Load a cost grid, rejecting files built for a different model."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != GRID_FILE_FORMAT or payload.get("version") != GRID_FILE_VERSION:
        raise ValueError("not a recognized cost-grid file")
    expected = model_hash(model)
    if payload["model_hash"] != expected:
        raise ValueError(
            "cost grid was built for a different model "
            f"(file hash {payload['model_hash'][:12]}..., expected {expected[:12]}...)"
        )
    axes = tuple(np.asarray(ax, dtype=float) for ax in payload["axes"])
    lens = tuple(ax.size for ax in axes)
    return CostGrid(
        axes=axes,
        means=np.asarray(payload["means"], dtype=float).reshape(lens),
        std_errors=np.asarray(payload["std_errors"], dtype=float).reshape(lens),
        mc_samples=int(payload["mc_samples"]),
        seed=int(payload["seed"]),
        model_hash=payload["model_hash"],
        coords_kind=payload["coords_kind"],
        groups=tuple(payload["groups"]) if payload["groups"] is not None else None,
        n_params=int(payload["n_params"]),
    )


# ---------------------------------------------------------------------------
# Observation streams and run loops
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ObservationStream:
    """A stream of ``(y_t, H_t)`` pairs, simulated or replayed.

    ``truth`` and ``x`` are filled for simulated streams so realized costs can
    be reported; replayed data leaves them None.
    """

    pairs: Iterable[tuple[np.ndarray, np.ndarray]]
    truth: int | None = None
    x: np.ndarray | None = None


def simulate_stream(model: LqgModel, truth: int, seed: int, n_steps: int) -> ObservationStream:
    """Simulate observations under one hypothesis: draw ``x`` once, then stream pairs."""
    rng = substream(seed, "stream", truth)
    prior = model.priors[truth]
    if prior.is_point_mass:
        x = prior.mean.copy()
    else:
        root = np.linalg.cholesky(prior.covariance)
        x = prior.mean + root @ rng.standard_normal(model.n_params)
    noise_sd = float(np.sqrt(model.noise_variance))

    def generate() -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for _ in range(n_steps):
            H = model.matrix_source.sample(rng, truth)
            y = H @ x + noise_sd * rng.standard_normal(model.n_obs)
            yield y, H

    return ObservationStream(pairs=generate(), truth=truth, x=x)


@dataclass(frozen=True, eq=False)
class RunResult:
    """Outcome of one sequential run: when it stopped, what it decided, and at what cost."""

    stopping_time: int
    decision: Decision
    estimate: np.ndarray
    truncated: bool
    detection_cost: float | None = None
    estimation_cost: float | None = None
    cost_trace: tuple[CostEstimate, ...] = ()
    log_likelihood_trace: tuple[float, ...] = ()

    @property
    def total_cost(self) -> float | None:
        if self.detection_cost is None or self.estimation_cost is None:
            return None
        return self.detection_cost + self.estimation_cost


@dataclass(frozen=True)
class DeterministicSchedule:
    """Offline stopping schedule: the cost curve and its first crossing time.

    ``reached`` is False only for fallback schedules built after the target
    level proved unreachable within the horizon; runs under such a schedule
    report themselves truncated.
    """

    stopping_time: int
    costs: tuple[CostEstimate, ...]
    reached: bool = True


def _next_pair(pairs: Iterator, t: int):
    try:
        return next(pairs)
    except StopIteration:
        raise DataExhaustedError(f"data source exhausted at step {t}") from None


def _realized_parts(stream: ObservationStream, decision: int, x_hat, weights):
    if stream.truth is None or stream.x is None:
        return None, None
    return realized_cost_parts(stream.truth, decision, stream.x, x_hat, weights)


def _binary_estimate(summary, model: LqgModel, weights: CostWeights, index: int) -> np.ndarray:
    if model.has_point_mass_null:
        return summary.means[1].copy() if index == 1 else np.zeros(model.n_params)
    b_col = weights.b[:, index]
    if b_col[0] == 0 and b_col[1] == 0:
        # Pure-detection column: no estimation cost anywhere, report the
        # decided hypothesis's posterior mean for diagnostics.
        return np.asarray(summary.means[index]).copy()
    return mixture_estimate(summary.means[0], summary.means[1], summary.log_L, b_col[0], b_col[1])


def run_sjde(
    model: LqgModel,
    weights: CostWeights,
    run_config: RunConfig,
    data_source: ObservationStream,
    seed: int,
    *,
    grid: CostGrid | None = None,
    schedule: DeterministicSchedule | None = None,
) -> RunResult:
    """Run the optimal sequential joint detection-and-estimation procedure.

    Accumulates sufficient statistics, obtains the stage cost from the
    configured stopping source, stops at the first time (``t >= 1``) the cost
    reaches the target level, then decides and estimates.  Hitting the horizon
    cap stops with the truncated flag set; the cost is re-evaluated at every
    step since no monotonicity of the cost curve is assumed.
    """
    validate_run_setup(model, weights, run_config)
    if model.is_binary:
        return _run_binary(model, weights, run_config, data_source, seed, grid)
    return _run_multi(model, weights, run_config, data_source, seed, schedule)


def _run_binary(model, weights, cfg, data_source, seed, grid) -> RunResult:
    if cfg.stopping_source == "grid-lookup" and grid is None:
        raise ValueError("grid-lookup stopping requires a cost grid")
    stats = zero_stats(model.n_params)
    pairs = iter(data_source.pairs)
    trace: list[CostEstimate] = []
    log_l_trace: list[float] = []
    truncated = True
    for t in range(1, cfg.t_max + 1):
        y, H = _next_pair(pairs, t)
        stats = update_sufficient_stats(stats, H, y)
        if cfg.stopping_source == "online-mc":
            est = estimate_optimal_cost(
                stats.U, model, weights, cfg.mc_samples, stream_seed(seed, "stage-cost", t)
            )
        else:
            est = lookup_cost(grid, stats.U)
        trace.append(est)
        if est.mean <= cfg.alpha:
            truncated = False
            break

    summary = summarize_binary(stats, model, weights)
    log_l_trace.append(summary.log_L)
    decision = decide_binary(summary.log_L, summary.delta, weights)
    x_hat = _binary_estimate(summary, model, weights, decision.index)
    detection, estimation = _realized_parts(data_source, decision.index, x_hat, weights)
    return RunResult(
        stopping_time=stats.t,
        decision=decision,
        estimate=x_hat,
        truncated=truncated,
        detection_cost=detection,
        estimation_cost=estimation,
        cost_trace=tuple(trace),
        log_likelihood_trace=tuple(log_l_trace),
    )


def _run_multi(model, weights, cfg, data_source, seed, schedule) -> RunResult:
    if schedule is None:
        schedule = compute_deterministic_schedule(
            model, weights, cfg.alpha, cfg.t_max, cfg.mc_samples, stream_seed(seed, "schedule")
        )
    matrices = model.matrix_source.matrices
    stats = [zero_stats(model.n_params) for _ in model.priors]
    pairs = iter(data_source.pairs)
    for t in range(1, schedule.stopping_time + 1):
        y, _observed_H = _next_pair(pairs, t)
        stats = [update_sufficient_stats(s, Hj, y) for s, Hj in zip(stats, matrices)]

    summary = summarize_multi(stats, model)
    traces = np.array(summary.traces)
    decision = decide_multi(summary.log_scores, traces, weights)
    x_hat = np.asarray(summary.means[decision.index]).copy()
    detection, estimation = _realized_parts(data_source, decision.index, x_hat, weights)
    return RunResult(
        stopping_time=schedule.stopping_time,
        decision=decision,
        estimate=x_hat,
        truncated=not schedule.reached,
        detection_cost=detection,
        estimation_cost=estimation,
        cost_trace=schedule.costs[: schedule.stopping_time],
    )


# ---------------------------------------------------------------------------
# Multi-hypothesis offline schedule
# ---------------------------------------------------------------------------


def _require_multi_fixed(model: LqgModel, weights: CostWeights) -> None:
    if not isinstance(model.matrix_source, FixedMatrixSource):
        raise ValueError("this operation requires fixed per-hypothesis matrices")
    if weights.kind == "combined":
        raise ValueError("this operation requires separated (diagonal) estimation weights")
    if weights.n_hypotheses != model.n_hypotheses:
        raise ValueError("weights and model disagree on the hypothesis count")


def estimate_error_probs(
    t: int, model: LqgModel, weights: CostWeights, mc_samples: int, seed: int
) -> np.ndarray:
    """Per-hypothesis misclassification probabilities at horizon ``t``.

    Estimated as the fraction of full-path simulations under each true
    hypothesis whose decision differs from it.  Only the per-step observation
    sum enters the decision, so it is sampled from its marginal law directly.
    """
    _require_multi_fixed(model, weights)
    if t < 1:
        raise ValueError("the horizon must be at least 1")
    matrices = model.matrix_source.matrices
    noise = model.noise_variance
    factors = [
        posterior_factor(t * (H.T @ H), prior, noise)
        for H, prior in zip(matrices, model.priors)
    ]
    score_factors = weights.a - weights.b_diagonal * np.array([f.trace for f in factors])

    probs = np.zeros(model.n_hypotheses)
    for truth, (H, prior) in enumerate(zip(matrices, model.priors)):
        rng = substream(seed, "error-probs", truth)
        mean = t * (H @ prior.mean)
        cov = t**2 * (H @ prior.covariance @ H.T) + t * noise * np.eye(model.n_obs)
        cov = (cov + cov.T) / 2.0
        eigvals, eigvecs = np.linalg.eigh(cov)
        root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
        obs_sum = mean[:, None] + root @ rng.standard_normal((model.n_obs, mc_samples))
        scores = np.stack([f.score(Hj.T @ obs_sum) for f, Hj in zip(factors, matrices)])
        decisions = decide_multi_batch(scores, score_factors)
        probs[truth] = float(np.mean(decisions != truth))
    return probs


def compute_deterministic_schedule(
    model: LqgModel,
    weights: CostWeights,
    alpha: float,
    t_max: int,
    mc_samples: int,
    seed: int,
) -> DeterministicSchedule:
    """Offline stopping schedule for fixed per-hypothesis matrices.

    The stage cost at each horizon combines the closed-form per-hypothesis
    MMSE with Monte Carlo misclassification probabilities; the schedule is
    the first horizon at which it reaches the target level.
    """
    _require_multi_fixed(model, weights)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    matrices = model.matrix_source.matrices
    noise = model.noise_variance
    b_diag = weights.b_diagonal
    curve: list[CostEstimate] = []
    for t in range(1, t_max + 1):
        traces = np.array(
            [
                posterior_factor(t * (H.T @ H), prior, noise).trace
                for H, prior in zip(matrices, model.priors)
            ]
        )
        probs = estimate_error_probs(
            t, model, weights, mc_samples, stream_seed(seed, "schedule-step", t)
        )
        factors = weights.a - b_diag * traces
        mean = float(np.sum(factors * probs + b_diag * traces))
        se = float(np.sqrt(np.sum(factors**2 * probs * (1.0 - probs)) / mc_samples))
        est = CostEstimate(mean, se, mc_samples)
        curve.append(est)
        if est.mean <= alpha:
            return DeterministicSchedule(stopping_time=t, costs=tuple(curve))
    raise AlphaUnreachableError(alpha, tuple(curve))
