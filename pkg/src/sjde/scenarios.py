"""Preset experiment configurations and their domain utilities.

Three presets bind the engine to concrete problems: a generic
three-parameter demo with scalar observations and random observation rows,
joint spectrum sensing and cross-channel estimation for cognitive radio
(point-mass null, shared pilot gains), and topology identification on the
four-bus test grid (five candidate topologies, fixed measurement matrices).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ExperimentConfig
from .model import (
    DiagonalMatrixSource,
    FixedMatrixSource,
    GaussianMatrixSource,
    HypothesisPrior,
    LqgModel,
    RunConfig,
    make_cost_weights,
    make_gaussian_prior,
    standard_normal_gains,
)


def lqg_demo_config(
    *, alpha: float = 0.3, t_max: int = 200, mc_samples: int = 2000, master_seed: int = 0
) -> ExperimentConfig:
    """Three-parameter demo: opposite-mean Gaussian hypotheses, scalar observations.

    Hypotheses ``x ~ N(+1, 0.5 I)`` and ``x ~ N(-1, 0.5 I)`` in three
    dimensions, unit noise, observation rows drawn i.i.d. standard normal,
    and separated costs ``a0 = a1 = 0.5``, ``b00 = b11 = 0.5``.
    """
    ones = np.ones(3)
    model = LqgModel(
        n_params=3,
        n_obs=1,
        noise_variance=1.0,
        priors=(
            make_gaussian_prior(ones, 0.5 * np.eye(3)),
            make_gaussian_prior(-ones, 0.5 * np.eye(3)),
        ),
        matrix_source=GaussianMatrixSource(rows=1, cols=3),
    )
    weights = make_cost_weights([0.5, 0.5], [[0.5, 0.0], [0.0, 0.5]])
    run = RunConfig(
        alpha=alpha,
        t_max=t_max,
        mc_samples=mc_samples,
        master_seed=master_seed,
        cost_mode="separated",
        stopping_source="online-mc",
    )
    return ExperimentConfig(model=model, weights=weights, run=run)


@dataclass(frozen=True, eq=False)
class CognitiveRadioScenario:
    """Spectrum-sensing scenario: K secondary users observing two pilot channels.

    The parameter vector stacks the cross-channel gains
    ``[x_11 .. x_1K, x_21 .. x_2K]`` (transmitter-major).  ``channel_means``
    and ``channel_variances`` follow that ordering.  ``pilot_draw(rng, size)``
    supplies the pilot-gain law; standard normal by default.
    """

    n_users: int
    channel_means: np.ndarray
    channel_variances: np.ndarray
    noise_variance: float
    p_max: float
    interference_limit_1: float
    interference_limit_2: float
    pilot_draw: Callable = standard_normal_gains

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("need at least one secondary user")
        means = np.asarray(self.channel_means, dtype=float)
        variances = np.asarray(self.channel_variances, dtype=float)
        if means.shape != (2 * self.n_users,) or variances.shape != means.shape:
            raise ValueError("channel means/variances must be flat vectors of length 2K")
        if np.any(variances <= 0):
            raise ValueError("channel-gain variances must be positive")
        if not (self.noise_variance > 0 and self.p_max > 0):
            raise ValueError("noise variance and transmit-power cap must be positive")
        if not (self.interference_limit_1 > 0 and self.interference_limit_2 > 0):
            raise ValueError("interference limits must be positive")
        object.__setattr__(self, "channel_means", means)
        object.__setattr__(self, "channel_variances", variances)


def cognitive_radio_config(
    scenario: CognitiveRadioScenario,
    *,
    a0: float = 0.5,
    a1: float = 0.5,
    b1: float = 0.5,
    alpha: float = 0.5,
    t_max: int = 200,
    mc_samples: int = 2000,
    master_seed: int = 0,
    stopping_source: str = "online-mc",
) -> ExperimentConfig:
    """Joint spectrum sensing and channel estimation as a point-mass-null model.

    The idle channel pins the gain vector at zero; under activity the gains
    are independent Gaussians.  Each pilot symbol multiplies all K channels of
    its transmitter, so the observation matrix is diagonal with two shared
    gains and the reachable statistic space is two-dimensional.  No estimation
    cost attaches to the null: ``b = [[0, 0], [b1, b1]]``.
    """
    K = scenario.n_users
    model = LqgModel(
        n_params=2 * K,
        n_obs=2 * K,
        noise_variance=scenario.noise_variance,
        priors=(
            make_gaussian_prior(np.zeros(2 * K), np.zeros((2 * K, 2 * K))),
            make_gaussian_prior(scenario.channel_means, np.diag(scenario.channel_variances)),
        ),
        matrix_source=DiagonalMatrixSource(
            groups=(0,) * K + (1,) * K, draw=scenario.pilot_draw
        ),
    )
    weights = make_cost_weights([a0, a1], [[0.0, 0.0], [b1, b1]])
    run = RunConfig(
        alpha=alpha,
        t_max=t_max,
        mc_samples=mc_samples,
        master_seed=master_seed,
        cost_mode="combined",
        stopping_source=stopping_source,
    )
    return ExperimentConfig(model=model, weights=weights, run=run)


def transmit_power(x_hat, p_max: float, i_1: float, i_2: float) -> np.ndarray:
    """Per-user transmit power respecting both peak interference constraints.

    ``P_k = min(p_max, i_1 / x_1k^2, i_2 / x_2k^2)`` for the stacked estimate
    ``[x_11 .. x_1K, x_21 .. x_2K]``.  A zero channel estimate removes the
    corresponding interference path, so its ratio is infinite and the minimum
    falls to the remaining terms.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.ndim != 1 or x_hat.size % 2:
        raise ValueError("the estimate must stack two channels per user")
    K = x_hat.size // 2
    with np.errstate(divide="ignore"):
        r1 = i_1 / x_hat[:K] ** 2
        r2 = i_2 / x_hat[K:] ** 2
    return np.minimum(p_max, np.minimum(r1, r2))


@dataclass(frozen=True, eq=False)
class SmartGridScenario:
    """Topology-identification scenario: candidate measurement matrices and state priors."""

    topology_matrices: tuple[np.ndarray, ...]
    priors: tuple[HypothesisPrior, ...]
    noise_variance: float
    detection_weights: np.ndarray
    estimation_weights: np.ndarray

    def __post_init__(self):
        matrices = tuple(np.asarray(m, dtype=float) for m in self.topology_matrices)
        if not matrices or any(m.shape != matrices[0].shape for m in matrices):
            raise ValueError("all topology matrices must share one shape")
        if len(self.priors) != len(matrices):
            raise ValueError("need one prior per topology")
        if any(p.is_point_mass for p in self.priors):
            raise ValueError("grid-state priors must be proper")
        object.__setattr__(self, "topology_matrices", matrices)
        object.__setattr__(
            self, "detection_weights", np.asarray(self.detection_weights, dtype=float)
        )
        object.__setattr__(
            self, "estimation_weights", np.asarray(self.estimation_weights, dtype=float)
        )


def smart_grid_config(
    scenario: SmartGridScenario,
    *,
    alpha: float = 0.5,
    t_max: int = 50,
    mc_samples: int = 10_000,
    master_seed: int = 0,
) -> ExperimentConfig:
    """Multi-hypothesis configuration with fixed matrices and an offline schedule."""
    shape = scenario.topology_matrices[0].shape
    model = LqgModel(
        n_params=shape[1],
        n_obs=shape[0],
        noise_variance=scenario.noise_variance,
        priors=scenario.priors,
        matrix_source=FixedMatrixSource(matrices=scenario.topology_matrices),
    )
    weights = make_cost_weights(
        scenario.detection_weights, np.diag(scenario.estimation_weights)
    )
    run = RunConfig(
        alpha=alpha,
        t_max=t_max,
        mc_samples=mc_samples,
        master_seed=master_seed,
        cost_mode="separated",
        stopping_source="deterministic-schedule",
    )
    return ExperimentConfig(model=model, weights=weights, run=run)


# Measurement matrices of the four-bus ring grid with unit line impedances.
# Rows: injections P1..P4 interleaved with flows P12, P23, P34, P41; columns:
# phase angles at buses 2..4 (bus 1 is the reference).  The first matrix is
# the intact ring; the others remove one line each.  Transcribed once and
# locked by structural tests; no topology generation logic.
IEEE4_TOPOLOGIES: tuple[np.ndarray, ...] = tuple(
    np.array(rows, dtype=float)
    for rows in (
        # intact ring
        [[-1, 0, -1], [-1, 0, 0], [2, -1, 0], [1, -1, 0],
         [-1, 2, -1], [0, 1, -1], [0, -1, 2], [0, 0, 1]],
        # line 1-2 out
        [[0, 0, -1], [0, 0, 0], [1, -1, 0], [1, -1, 0],
         [-1, 2, -1], [0, 1, -1], [0, -1, 2], [0, 0, 1]],
        # line 2-3 out
        [[-1, 0, -1], [-1, 0, 0], [1, 0, 0], [0, 0, 0],
         [0, 1, -1], [0, 1, -1], [0, -1, 2], [0, 0, 1]],
        # line 3-4 out
        [[-1, 0, -1], [-1, 0, 0], [2, -1, 0], [1, -1, 0],
         [-1, 1, 0], [0, 0, 0], [0, 0, 1], [0, 0, 1]],
        # line 4-1 out
        [[-1, 0, 0], [-1, 0, 0], [2, -1, 0], [1, -1, 0],
         [-1, 2, -1], [0, 1, -1], [0, -1, 1], [0, 0, 0]],
    )
)
for _m in IEEE4_TOPOLOGIES:
    _m.setflags(write=False)
del _m


def smart_grid_ieee4_config(
    *, alpha: float = 0.5, t_max: int = 50, mc_samples: int = 10_000, master_seed: int = 0
) -> ExperimentConfig:
    """Four-bus topology identification: intact ring plus four single-line outages.

    Per-hypothesis state priors drift from ``pi/5`` up to ``pi`` with the
    listed variances, unit measurement noise, and uniform weights
    ``a_j = 0.2``, ``b_j = 0.8``.
    """
    ones = np.ones(3)
    eye = np.eye(3)
    priors = (
        make_gaussian_prior(np.pi / 5 * ones, np.pi**2 / 9 * eye),
        make_gaussian_prior(2 * np.pi / 5 * ones, np.pi**2 / 16 * eye),
        make_gaussian_prior(3 * np.pi / 5 * ones, np.pi**2 / 25 * eye),
        make_gaussian_prior(4 * np.pi / 5 * ones, np.pi**2 / 36 * eye),
        make_gaussian_prior(np.pi * ones, np.pi**2 / 4 * eye),
    )
    scenario = SmartGridScenario(
        topology_matrices=IEEE4_TOPOLOGIES,
        priors=priors,
        noise_variance=1.0,
        detection_weights=np.full(5, 0.2),
        estimation_weights=np.full(5, 0.8),
    )
    return smart_grid_config(
        scenario, alpha=alpha, t_max=t_max, mc_samples=mc_samples, master_seed=master_seed
    )
