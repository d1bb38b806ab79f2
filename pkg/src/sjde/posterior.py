"""Closed-form posterior machinery for the linear-Gaussian observation model.

Accumulates the sufficient statistics ``U_t = sum H_t' H_t`` and
``v_t = sum H_t' y_t``, and turns them into per-hypothesis conditional means
and covariances, marginal-likelihood scores, likelihood ratios, mixture
estimators, and posterior estimation costs.  All likelihood arithmetic stays
in the log domain: determinants come from triangular factorizations and the
ratio form of the marginal likelihoods is never evaluated directly, since it
overflows within tens of samples.

Two interchangeable evaluation routes exist: a dense route that factorizes
``U/sigma^2 + Sigma^{-1}`` once per state and solves against it, and an exact
per-channel fast path for the independent model (diagonal ``H_t`` and priors).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import expit

from .model import CostWeights, HypothesisPrior, LqgModel


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Accumulated Fisher statistic ``U`` and data statistic ``v`` at time ``t``.

    ``diag_u`` holds the per-channel squared-gain sums and stays non-None as
    long as every observation matrix seen so far was diagonal; it marks
    eligibility for the per-channel fast path.
    """

    U: np.ndarray
    v: np.ndarray
    t: int
    diag_u: np.ndarray | None = None

    @property
    def n_params(self) -> int:
        return self.v.shape[0]

    @property
    def diagonal(self) -> bool:
        return self.diag_u is not None


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def zero_stats(n_params: int) -> SufficientStats:
    """Empty statistics at ``t = 0``; trivially on the diagonal fast path."""
    return SufficientStats(
        U=_frozen(np.zeros((n_params, n_params))),
        v=_frozen(np.zeros(n_params)),
        t=0,
        diag_u=_frozen(np.zeros(n_params)),
    )


def update_sufficient_stats(stats: SufficientStats, H, y) -> SufficientStats:
    """Fold one observation pair into the statistics.

    ``U' = U + H'H``, ``v' = v + H'y``.  The diagonal fast path survives the
    update iff ``H`` is square and exactly diagonal.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    n = stats.n_params
    if H.ndim != 2 or H.shape[1] != n:
        raise ValueError(f"observation matrix must have shape (m, {n}), got {H.shape}")
    if y.shape != (H.shape[0],):
        raise ValueError(f"observation vector must have shape ({H.shape[0]},), got {y.shape}")

    diag_u = None
    if stats.diag_u is not None and H.shape[0] == n:
        gains = np.diag(H)
        if not (H - np.diag(gains)).any():
            diag_u = _frozen(stats.diag_u + gains**2)
    return SufficientStats(
        U=_frozen(stats.U + H.T @ H),
        v=_frozen(stats.v + H.T @ y),
        t=stats.t + 1,
        diag_u=diag_u,
    )


def _is_diagonal(U: np.ndarray) -> bool:
    return not (U - np.diag(np.diag(U))).any()


def _as_columns(v) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return v[:, None], True
    return v, False


class DensePosteriorFactor:
    """Cholesky factorization of ``P = U/sigma^2 + Sigma^{-1}`` for one state.

    The single factorization backs the conditional mean, the posterior
    covariance (and its trace), and the marginal-likelihood score, which all
    share it within a time step.  ``mean`` and ``score`` accept a single
    ``v`` vector or a batch of columns.
    """

    def __init__(self, U: np.ndarray, prior: HypothesisPrior, noise_variance: float):
        P = U / noise_variance + prior.precision
        self._chol = cholesky(P, lower=True)
        self._shift = prior.precision_mean
        self._noise_variance = noise_variance
        log_det_precision = 2.0 * float(np.sum(np.log(np.diag(self._chol))))
        cov = cho_solve((self._chol, True), np.eye(U.shape[0]))
        self.covariance = (cov + cov.T) / 2.0
        self.trace = float(np.trace(self.covariance))
        self._score_const = -0.5 * (
            prior.mean_quad + prior.log_det_covariance + log_det_precision
        )

    def _information(self, v):
        cols, squeeze = _as_columns(v)
        return cols / self._noise_variance + self._shift[:, None], squeeze

    def mean(self, v):
        w, squeeze = self._information(v)
        out = cho_solve((self._chol, True), w)
        return out[:, 0] if squeeze else out

    def score(self, v):
        """Log marginal likelihood up to the additive term shared by all hypotheses."""
        w, squeeze = self._information(v)
        z = solve_triangular(self._chol, w, lower=True)
        q = np.sum(z * z, axis=0)
        out = 0.5 * q + self._score_const
        return float(out[0]) if squeeze else out


class DiagonalPosteriorFactor:
    """Per-channel scalar route for diagonal ``U`` and a diagonal proper prior."""

    def __init__(self, diag_u: np.ndarray, prior: HypothesisPrior, noise_variance: float):
        rho_sq = prior.variances
        self._p = diag_u / noise_variance + 1.0 / rho_sq
        self._shift = prior.mean / rho_sq
        self._noise_variance = noise_variance
        self.covariance = np.diag(1.0 / self._p)
        self.trace = float(np.sum(1.0 / self._p))
        self._score_const = -0.5 * float(
            np.sum(prior.mean**2 / rho_sq) + np.sum(np.log(rho_sq)) + np.sum(np.log(self._p))
        )

    def _information(self, v):
        cols, squeeze = _as_columns(v)
        return cols / self._noise_variance + self._shift[:, None], squeeze

    def mean(self, v):
        w, squeeze = self._information(v)
        out = w / self._p[:, None]
        return out[:, 0] if squeeze else out

    def score(self, v):
        w, squeeze = self._information(v)
        q = np.sum(w * w / self._p[:, None], axis=0)
        out = 0.5 * q + self._score_const
        return float(out[0]) if squeeze else out


class PointMassPosteriorFactor:
    """Degenerate posterior under a point-mass prior: ``x`` is identically zero.

    Its marginal likelihood is the pure-noise density, which is exactly the
    common reference term dropped from every score, so the score is zero.
    """

    def __init__(self, prior: HypothesisPrior):
        n = prior.dim
        self.covariance = np.zeros((n, n))
        self.trace = 0.0
        self._mean = prior.mean

    def mean(self, v):
        cols, squeeze = _as_columns(v)
        out = np.broadcast_to(self._mean[:, None], cols.shape).copy()
        return out[:, 0] if squeeze else out

    def score(self, v):
        cols, squeeze = _as_columns(v)
        return 0.0 if squeeze else np.zeros(cols.shape[1])


PosteriorFactor = DensePosteriorFactor | DiagonalPosteriorFactor | PointMassPosteriorFactor


def posterior_factor(
    U: np.ndarray, prior: HypothesisPrior, noise_variance: float, method: str = "auto"
) -> PosteriorFactor:
    """Build the posterior machinery for one ``(U, prior)`` pair.

    ``method`` picks the evaluation route: ``"auto"`` takes the per-channel
    fast path whenever both ``U`` and the prior are diagonal, ``"dense"`` and
    ``"diagonal"`` force one route (the latter raises if inapplicable).
    """
    if prior.is_point_mass:
        return PointMassPosteriorFactor(prior)
    if method == "auto":
        method = "diagonal" if (_is_diagonal(U) and prior.is_diagonal) else "dense"
    if method == "diagonal":
        if not (_is_diagonal(U) and prior.is_diagonal):
            raise ValueError("diagonal route requires diagonal U and a diagonal prior")
        return DiagonalPosteriorFactor(np.diag(U).astype(float), prior, noise_variance)
    if method == "dense":
        return DensePosteriorFactor(np.asarray(U, dtype=float), prior, noise_variance)
    raise ValueError(f"unknown method {method!r}")


def posterior(
    stats: SufficientStats, prior: HypothesisPrior, noise_variance: float, method: str = "auto"
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean and covariance of ``x`` given the data, under one prior.

    With no data this is the prior itself; a point-mass prior returns its mean
    with zero covariance.
    """
    factor = posterior_factor(stats.U, prior, noise_variance, method)
    return factor.mean(stats.v), factor.covariance


def log_marginal_score(
    stats: SufficientStats, prior: HypothesisPrior, noise_variance: float, method: str = "auto"
) -> float:
    """Log marginal likelihood of the observations under one hypothesis.

    Shifted by the pure-noise reference density common to all hypotheses,
    so only differences between scores are meaningful.
    """
    factor = posterior_factor(stats.U, prior, noise_variance, method)
    return factor.score(stats.v)


def log_likelihood_ratio(
    stats: SufficientStats,
    prior0: HypothesisPrior,
    prior1: HypothesisPrior,
    noise_variance: float,
    method: str = "auto",
) -> float:
    """Log likelihood ratio of the alternative against the null.

    The null may be proper Gaussian or the point-mass at zero; in the latter
    case its score is identically zero and the ratio reduces to the
    alternative's score (the product form over independent channels).
    """
    if prior1.is_point_mass:
        raise ValueError("the alternative hypothesis requires a proper prior")
    s1 = log_marginal_score(stats, prior1, noise_variance, method)
    s0 = log_marginal_score(stats, prior0, noise_variance, method)
    return s1 - s0


def _column_fractions(log_L, b_col0: float, b_col1: float):
    """Mixture fractions ``(s, sbar)`` with ``s = b1 L / (b0 + b1 L)``.

    Computed through the logistic function of ``log_L + log(b1/b0)`` so the
    result is exact in the limits and never overflows.  Accepts scalar or
    array ``log_L``.
    """
    if b_col0 < 0 or b_col1 < 0:
        raise ValueError("estimation weights must be nonnegative")
    if b_col0 == 0 and b_col1 == 0:
        raise ValueError("column carries no estimation weight")
    log_L = np.asarray(log_L, dtype=float)
    if b_col0 == 0:
        return np.ones_like(log_L), np.zeros_like(log_L)
    if b_col1 == 0:
        return np.zeros_like(log_L), np.ones_like(log_L)
    z = log_L + (np.log(b_col1) - np.log(b_col0))
    return expit(z), expit(-z)


def delta_weights(log_L, b_col0: float, b_col1: float):
    """Squared mixture coefficients weighting the posterior-mean separation.

    Returns ``(delta0, delta1)`` for one decision column; both lie in [0, 1].
    """
    s, sbar = _column_fractions(log_L, b_col0, b_col1)
    return s * s, sbar * sbar


def mixture_estimate(e0, e1, log_L, b_col0: float, b_col1: float) -> np.ndarray:
    """Optimal estimator for one decision column: a likelihood-ratio-weighted
    convex combination of the per-hypothesis conditional means.

    When the column has weight on a single hypothesis the corresponding mean
    is returned exactly.
    """
    e0 = np.asarray(e0, dtype=float)
    e1 = np.asarray(e1, dtype=float)
    if b_col0 == 0 and b_col1 == 0:
        raise ValueError("column carries no estimation weight")
    if b_col0 == 0:
        return e1.copy()
    if b_col1 == 0:
        return e0.copy()
    s, sbar = _column_fractions(log_L, b_col0, b_col1)
    return sbar * e0 + s * e1


def posterior_costs(
    trace0: float,
    trace1: float,
    e0: np.ndarray,
    e1: np.ndarray,
    log_L: float,
    weights: CostWeights,
    *,
    point_mass_null: bool = False,
) -> np.ndarray:
    """Posterior expected estimation cost matrix ``delta[i, j]`` (binary case).

    Entry ``(i, j)`` is the expected squared error of the decision-``j``
    estimator under hypothesis ``i`` given all data: the per-hypothesis MMSE
    plus the weighted squared separation of the conditional means.  Columns
    with no estimation weight are never used by any decision rule and are
    returned as NaN.

    Under the point-mass null the decided-null estimator is the zero vector by
    convention, which fixes the whole matrix in closed form.
    """
    if weights.n_hypotheses != 2:
        raise ValueError("posterior_costs covers the binary case")
    if point_mass_null:
        norm_sq = float(np.dot(e1, e1))
        return np.array([[0.0, norm_sq], [trace1 + norm_sq, trace1]])

    dist_sq = float(np.sum((np.asarray(e0) - np.asarray(e1)) ** 2))
    delta = np.full((2, 2), np.nan)
    b = weights.b
    for j in range(2):
        if b[0, j] == 0 and b[1, j] == 0:
            continue
        d0, d1 = delta_weights(log_L, b[0, j], b[1, j])
        delta[0, j] = trace0 + d0 * dist_sq
        delta[1, j] = trace1 + d1 * dist_sq
    return delta


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    """Everything the decision layer needs at one state.

    For binary models ``log_L`` and ``delta`` are filled; for multi-hypothesis
    models the per-hypothesis ``log_scores`` and MMSE ``traces`` carry the
    decision information instead.
    """

    means: tuple[np.ndarray, ...]
    covariances: tuple[np.ndarray, ...]
    traces: tuple[float, ...]
    log_scores: np.ndarray
    log_L: float | None = None
    delta: np.ndarray | None = None
    delta_weight_matrix: np.ndarray | None = None


def summarize_binary(
    stats: SufficientStats, model: LqgModel, weights: CostWeights, method: str = "auto"
) -> PosteriorSummary:
    """Full posterior summary for a binary model at one state."""
    if not model.is_binary:
        raise ValueError("summarize_binary requires a binary model")
    f0 = posterior_factor(stats.U, model.priors[0], model.noise_variance, method)
    f1 = posterior_factor(stats.U, model.priors[1], model.noise_variance, method)
    e0 = f0.mean(stats.v)
    e1 = f1.mean(stats.v)
    log_L = float(f1.score(stats.v) - f0.score(stats.v))
    delta = posterior_costs(
        f0.trace, f1.trace, e0, e1, log_L, weights,
        point_mass_null=model.has_point_mass_null,
    )
    dmat = np.full((2, 2), np.nan)
    if not model.has_point_mass_null:
        for j in range(2):
            if weights.b[0, j] == 0 and weights.b[1, j] == 0:
                continue
            d0, d1 = delta_weights(log_L, weights.b[0, j], weights.b[1, j])
            dmat[0, j], dmat[1, j] = d0, d1
    return PosteriorSummary(
        means=(e0, e1),
        covariances=(f0.covariance, f1.covariance),
        traces=(f0.trace, f1.trace),
        log_scores=np.array([f0.score(stats.v), f1.score(stats.v)]),
        log_L=log_L,
        delta=delta,
        delta_weight_matrix=dmat,
    )


def summarize_multi(
    stats_per_hypothesis, model: LqgModel, method: str = "auto"
) -> PosteriorSummary:
    """Per-hypothesis posterior summary when each hypothesis has its own matrix stream."""
    if len(stats_per_hypothesis) != model.n_hypotheses:
        raise ValueError("need one statistics stream per hypothesis")
    factors = [
        posterior_factor(s.U, p, model.noise_variance, method)
        for s, p in zip(stats_per_hypothesis, model.priors)
    ]
    means = tuple(f.mean(s.v) for f, s in zip(factors, stats_per_hypothesis))
    scores = np.array([f.score(s.v) for f, s in zip(factors, stats_per_hypothesis)])
    return PosteriorSummary(
        means=means,
        covariances=tuple(f.covariance for f in factors),
        traces=tuple(f.trace for f in factors),
        log_scores=scores,
    )
