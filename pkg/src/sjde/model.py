"""Domain types for the sequential joint detection-and-estimation engine.

Defines validated, immutable records for hypothesis priors, detection and
estimation cost weights, the linear-Gaussian observation model, and run
configuration.  Everything downstream (posterior machinery, decision rules,
stopping engines) consumes these types and never re-validates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

# Smallest admissible eigenvalue of a proper prior covariance.  Below this the
# precision matrix required by the posterior updates is numerically
# meaningless, so construction fails unless the covariance is exactly zero.
EIGENVALUE_FLOOR = 1e-10

COST_MODES = ("combined", "separated")
STOPPING_SOURCES = ("online-mc", "grid-lookup", "deterministic-schedule")


def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class HypothesisPrior:
    """Gaussian (or point-mass) prior on the parameter vector under one hypothesis.

    Built through :func:`make_gaussian_prior`, which validates the covariance
    and precomputes the solver pieces reused at every time step.  A point-mass
    prior (zero covariance, zero mean) models the idle-channel null where the
    parameter is identically zero.
    """

    mean: np.ndarray
    covariance: np.ndarray
    kind: str  # "proper-gaussian" | "point-mass"
    precision: np.ndarray | None = field(repr=False, default=None)
    precision_mean: np.ndarray | None = field(repr=False, default=None)  # Sigma^{-1} mu
    log_det_covariance: float = field(repr=False, default=0.0)
    mean_quad: float = field(repr=False, default=0.0)  # mu' Sigma^{-1} mu

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def is_point_mass(self) -> bool:
        return self.kind == "point-mass"

    @property
    def is_diagonal(self) -> bool:
        off = self.covariance - np.diag(np.diag(self.covariance))
        return not off.any()

    @property
    def variances(self) -> np.ndarray:
        """Per-component prior variances (diagonal of the covariance)."""
        return np.diag(self.covariance)


def make_gaussian_prior(mean, covariance, *, eigenvalue_floor: float = EIGENVALUE_FLOOR) -> HypothesisPrior:
    """Validate and build a hypothesis prior.

    A covariance that is exactly zero yields a point-mass prior, which is
    only supported at mean zero (the idle-channel null).  Otherwise the
    covariance must be symmetric with smallest eigenvalue above the floor.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    covariance = np.asarray(covariance, dtype=float)
    if mean.ndim != 1:
        raise ValueError("prior mean must be a vector")
    if covariance.shape != (mean.shape[0], mean.shape[0]):
        raise ValueError(
            f"covariance shape {covariance.shape} does not match mean length {mean.shape[0]}"
        )
    asym = np.max(np.abs(covariance - covariance.T), initial=0.0)
    scale = max(1.0, np.max(np.abs(covariance), initial=0.0))
    if asym > 1e-12 * scale:
        raise ValueError("covariance is not symmetric")
    covariance = (covariance + covariance.T) / 2.0

    if not covariance.any():
        if mean.any():
            raise ValueError("point-mass priors are only supported at mean zero")
        return HypothesisPrior(
            mean=_frozen_array(mean),
            covariance=_frozen_array(covariance),
            kind="point-mass",
        )

    smallest = float(np.linalg.eigvalsh(covariance)[0])
    if smallest <= eigenvalue_floor:
        raise ValueError(
            f"covariance is not positive definite: smallest eigenvalue {smallest:.3e} "
            f"is below the floor {eigenvalue_floor:.1e}"
        )

    chol_lower = cholesky(covariance, lower=True)
    precision = cho_solve((chol_lower, True), np.eye(mean.shape[0]))
    precision = (precision + precision.T) / 2.0
    precision_mean = cho_solve((chol_lower, True), mean)
    whitened = solve_triangular(chol_lower, mean, lower=True)
    return HypothesisPrior(
        mean=_frozen_array(mean),
        covariance=_frozen_array(covariance),
        kind="proper-gaussian",
        precision=_frozen_array(precision),
        precision_mean=_frozen_array(precision_mean),
        log_det_covariance=2.0 * float(np.sum(np.log(np.diag(chol_lower)))),
        mean_quad=float(whitened @ whitened),
    )


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Detection weights ``a_i`` and estimation weights ``b_ij``.

    Row ``i`` of ``b`` is the true hypothesis, column ``j`` the decided one.
    ``kind`` classifies the structure: all-zero ``b`` is pure detection,
    zero off-diagonal ``b`` is the separated-cost formulation, anything else
    is the fully combined cost.
    """

    a: np.ndarray
    b: np.ndarray
    kind: str  # "pure-detection" | "separated" | "combined"

    @property
    def n_hypotheses(self) -> int:
        return self.a.shape[0]

    @property
    def b_diagonal(self) -> np.ndarray:
        return np.diag(self.b)


def make_cost_weights(a, b) -> CostWeights:
    """Validate and classify a set of cost weights."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape[0] < 1:
        raise ValueError("detection weights must form a nonempty vector")
    if b.shape != (a.shape[0], a.shape[0]):
        raise ValueError(
            f"estimation weight matrix shape {b.shape} does not match {a.shape[0]} hypotheses"
        )
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("cost weights must be nonnegative")
    if not np.any(a > 0):
        raise ValueError("at least one detection weight must be positive")

    off_diagonal = b - np.diag(np.diag(b))
    if not b.any():
        kind = "pure-detection"
    elif not off_diagonal.any():
        kind = "separated"
    else:
        kind = "combined"
    return CostWeights(a=_frozen_array(a), b=_frozen_array(b), kind=kind)


def standard_normal_gains(rng: np.random.Generator, size) -> np.ndarray:
    """Default law for sampled observation-matrix entries and pilot gains."""
    return rng.standard_normal(size)


@dataclass(frozen=True, eq=False)
class GaussianMatrixSource:
    """Observation matrices with i.i.d. standard-normal entries, fresh each step."""

    rows: int
    cols: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def diagonal(self) -> bool:
        return False

    def sample(self, rng: np.random.Generator, truth: int) -> np.ndarray:
        return rng.standard_normal((self.rows, self.cols))

    def sample_batch(self, rng: np.random.Generator, truth: int, count: int) -> np.ndarray:
        return rng.standard_normal((count, self.rows, self.cols))


@dataclass(frozen=True, eq=False)
class DiagonalMatrixSource:
    """Diagonal observation matrices built from one sampled gain per channel group.

    ``groups[c]`` names the gain shared by channel ``c``; with ``groups =
    (0,)*K + (1,)*K`` all channels of one transmitter share a pilot gain.
    ``draw(rng, size)`` supplies the gain law (standard normal by default).
    """

    groups: tuple[int, ...]
    draw: Callable[[np.random.Generator, object], np.ndarray] = standard_normal_gains

    def __post_init__(self):
        groups = tuple(int(g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if len(groups) < 1:
            raise ValueError("diagonal source needs at least one channel")
        used = sorted(set(groups))
        if used != list(range(len(used))):
            raise ValueError("groups must be consecutive integers starting at 0")

    @property
    def n_groups(self) -> int:
        return max(self.groups) + 1

    @property
    def shape(self) -> tuple[int, int]:
        n = len(self.groups)
        return (n, n)

    @property
    def diagonal(self) -> bool:
        return True

    def sample(self, rng: np.random.Generator, truth: int) -> np.ndarray:
        gains = np.asarray(self.draw(rng, self.n_groups), dtype=float)
        return np.diag(gains[list(self.groups)])

    def sample_batch(self, rng: np.random.Generator, truth: int, count: int) -> np.ndarray:
        gains = np.asarray(self.draw(rng, (count, self.n_groups)), dtype=float)
        n = len(self.groups)
        out = np.zeros((count, n, n))
        idx = np.arange(n)
        out[:, idx, idx] = gains[:, list(self.groups)]
        return out


@dataclass(frozen=True, eq=False)
class FixedMatrixSource:
    """One fixed, known observation matrix per hypothesis, repeated every step."""

    matrices: tuple[np.ndarray, ...]

    def __post_init__(self):
        mats = tuple(_frozen_array(m) for m in self.matrices)
        if not mats:
            raise ValueError("fixed source needs at least one matrix")
        shape = mats[0].shape
        if len(shape) != 2 or any(m.shape != shape for m in mats):
            raise ValueError("all fixed matrices must share one 2-D shape")
        object.__setattr__(self, "matrices", mats)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrices[0].shape

    @property
    def diagonal(self) -> bool:
        return False

    def sample(self, rng: np.random.Generator, truth: int) -> np.ndarray:
        return self.matrices[truth]

    def sample_batch(self, rng: np.random.Generator, truth: int, count: int) -> np.ndarray:
        m = self.matrices[truth]
        return np.broadcast_to(m, (count,) + m.shape)


MatrixSource = GaussianMatrixSource | DiagonalMatrixSource | FixedMatrixSource


@dataclass(frozen=True, eq=False)
class LqgModel:
    """Linear observation model ``y_t = H_t x + w_t`` with Gaussian priors on ``x``.

    ``priors[i]`` is the law of ``x`` under hypothesis ``i``; the noise is
    white Gaussian with variance ``noise_variance`` per component.  Only the
    null hypothesis may carry a point-mass prior, and then the model must be
    binary.
    """

    n_params: int
    n_obs: int
    noise_variance: float
    priors: tuple[HypothesisPrior, ...]
    matrix_source: MatrixSource

    def __post_init__(self):
        object.__setattr__(self, "priors", tuple(self.priors))
        if self.n_params < 1 or self.n_obs < 1:
            raise ValueError("model dimensions must be positive")
        if not self.noise_variance > 0:
            raise ValueError("noise variance must be positive")
        if len(self.priors) < 1:
            raise ValueError("at least one hypothesis prior is required")
        for prior in self.priors:
            if prior.dim != self.n_params:
                raise ValueError("all priors must share the parameter dimension")
        for prior in self.priors[1:]:
            if prior.is_point_mass:
                raise ValueError("only the null hypothesis may carry a point-mass prior")
        if self.priors[0].is_point_mass and len(self.priors) != 2:
            raise ValueError("a point-mass null is only supported in the binary model")
        if self.matrix_source.shape != (self.n_obs, self.n_params):
            raise ValueError(
                f"matrix source shape {self.matrix_source.shape} does not match "
                f"(n_obs, n_params) = ({self.n_obs}, {self.n_params})"
            )
        if isinstance(self.matrix_source, FixedMatrixSource):
            if len(self.matrix_source.matrices) != len(self.priors):
                raise ValueError("fixed source must supply one matrix per hypothesis")

    @property
    def n_hypotheses(self) -> int:
        return len(self.priors)

    @property
    def is_binary(self) -> bool:
        return len(self.priors) == 2

    @property
    def has_point_mass_null(self) -> bool:
        return self.priors[0].is_point_mass

    @property
    def is_diagonal(self) -> bool:
        """True when the independent fast path applies (diagonal H and priors)."""
        return self.matrix_source.diagonal and all(p.is_diagonal for p in self.priors)


@dataclass(frozen=True)
class RunConfig:
    """Run-level knobs: target accuracy, horizon cap, Monte Carlo budget, seed."""

    alpha: float
    t_max: int = 200
    mc_samples: int = 2000
    master_seed: int = 0
    cost_mode: str = "combined"
    stopping_source: str = "online-mc"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if self.mc_samples < 100:
            raise ValueError("mc_samples must be at least 100")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.cost_mode not in COST_MODES:
            raise ValueError(f"cost_mode must be one of {COST_MODES}")
        if self.stopping_source not in STOPPING_SOURCES:
            raise ValueError(f"stopping_source must be one of {STOPPING_SOURCES}")


def validate_run_setup(model: LqgModel, weights: CostWeights, run: RunConfig) -> None:
    """Cross-field consistency checks shared by every run entry point."""
    if weights.n_hypotheses != model.n_hypotheses:
        raise ValueError("weights and model disagree on the hypothesis count")
    if run.cost_mode == "separated" and weights.kind == "combined":
        raise ValueError("separated cost mode requires zero off-diagonal estimation weights")
    if model.has_point_mass_null:
        require_point_mass_weights(weights)
    if not model.is_binary:
        if run.stopping_source != "deterministic-schedule":
            raise ValueError("multi-hypothesis runs use the deterministic-schedule stopping source")
        if weights.kind == "combined":
            raise ValueError("multi-hypothesis runs require separated (diagonal) estimation weights")
        if not isinstance(model.matrix_source, FixedMatrixSource):
            raise ValueError("multi-hypothesis runs require fixed per-hypothesis matrices")
    elif run.stopping_source == "deterministic-schedule":
        raise ValueError("the deterministic schedule applies to multi-hypothesis models only")


def require_point_mass_weights(weights: CostWeights) -> None:
    """Weight pattern required by the point-mass-null (idle-channel) formulation.

    No estimation cost is assigned under the null, and the alternative's
    estimation weight does not depend on the decision: ``b = [[0, 0], [b1, b1]]``.
    """
    if weights.n_hypotheses != 2:
        raise ValueError("point-mass-null models are binary")
    b = weights.b
    if b[0, 0] != 0 or b[0, 1] != 0:
        raise ValueError("point-mass null carries no estimation cost (b row 0 must be zero)")
    if b[1, 0] != b[1, 1]:
        raise ValueError("point-mass-null formulation requires b10 == b11")
