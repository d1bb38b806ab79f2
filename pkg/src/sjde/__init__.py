"""Optimum sequential joint detection and estimation for linear-Gaussian models.

A library plus CLI implementing the jointly optimal triplet of stopping time,
detector, and estimators for binary and multi-hypothesis linear-quadratic-
Gaussian problems, with Monte Carlo stopping-cost estimation, offline cost
grids, baseline schemes (SPRT+MMSE, ML+MMSE), and preset experiments for
dynamic spectrum access and power-grid topology identification.
"""

from .baselines import (
    CalibrationError,
    SprtCalibration,
    SprtThresholds,
    calibrate_sprt,
    run_ml_mmse,
    run_sprt_mmse,
    sprt_batch_cost,
)
from .config import (
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    model_hash,
    save_config,
)
from .model import (
    CostWeights,
    DiagonalMatrixSource,
    FixedMatrixSource,
    GaussianMatrixSource,
    HypothesisPrior,
    LqgModel,
    RunConfig,
    make_cost_weights,
    make_gaussian_prior,
    validate_run_setup,
)
from .policy import (
    Decision,
    decide_binary,
    decide_multi,
    realized_cost,
    realized_cost_parts,
    stage_cost_integrand,
)
from .posterior import (
    PosteriorSummary,
    SufficientStats,
    delta_weights,
    log_likelihood_ratio,
    log_marginal_score,
    mixture_estimate,
    posterior,
    posterior_costs,
    summarize_binary,
    summarize_multi,
    update_sufficient_stats,
    zero_stats,
)
from .rng import stream_seed, substream
from .scenarios import (
    CognitiveRadioScenario,
    IEEE4_TOPOLOGIES,
    SmartGridScenario,
    cognitive_radio_config,
    lqg_demo_config,
    smart_grid_config,
    smart_grid_ieee4_config,
    transmit_power,
)
from .stopping import (
    AlphaUnreachableError,
    CostEstimate,
    CostGrid,
    DataExhaustedError,
    DeterministicSchedule,
    ObservationStream,
    RunResult,
    build_cost_grid,
    compute_deterministic_schedule,
    estimate_error_probs,
    estimate_optimal_cost,
    load_cost_grid,
    lookup_cost,
    run_sjde,
    save_cost_grid,
    simulate_stream,
)

__all__ = [name for name in dir() if not name.startswith("_")]
