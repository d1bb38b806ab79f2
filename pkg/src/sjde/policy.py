"""Decision rules and the stage-cost integrands that couple them to estimation.

The binary detector compares ``L * (a1 + b10*d10 - b11*d11)`` against
``a0 + b01*d01 - b00*d00`` where ``d[i][j]`` are the posterior estimation
costs; equality decides the alternative.  The comparison is carried out on
signed log magnitudes so it never leaves the log domain.  The stage-cost
integrand is the scalar whose null-measure expectation is the optimal cost at
the current state; it is what the Monte Carlo stopping engine averages.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .model import CostWeights


@dataclass(frozen=True)
class Decision:
    """A decided hypothesis index with tie-break and margin diagnostics.

    ``score_margin`` is the log-domain gap between the two sides of the
    decision inequality (positive favors the returned index); it is
    informational only and infinite when one side's sign forces the outcome.
    """

    index: int
    tie_broken: bool = False
    score_margin: float = 0.0


def _mass(b: float, delta) -> float:
    # Columns with no estimation weight carry undefined (NaN) posterior costs;
    # a zero weight must annihilate them without touching the value.
    return b * delta if b > 0 else 0.0


def decide_binary(log_L: float, delta: np.ndarray, weights: CostWeights) -> Decision:
    """Optimal binary detector at one state; equality decides the alternative."""
    if weights.n_hypotheses != 2:
        raise ValueError("decide_binary requires binary weights")
    a0, a1 = weights.a
    b = weights.b
    lhs_coef = a1 + _mass(b[1, 0], delta[1, 0]) - _mass(b[1, 1], delta[1, 1])
    rhs = a0 + _mass(b[0, 1], delta[0, 1]) - _mass(b[0, 0], delta[0, 0])

    if lhs_coef > 0 and rhs > 0:
        threshold = math.log(rhs) - math.log(lhs_coef)
        margin = log_L - threshold
        index = 1 if margin >= 0 else 0
        return Decision(index, tie_broken=(margin == 0), score_margin=margin if index == 1 else -margin)
    if lhs_coef > 0 and rhs <= 0:
        return Decision(1, score_margin=math.inf)
    if lhs_coef <= 0 and rhs > 0:
        return Decision(0, score_margin=math.inf)
    # Both sides nonpositive: compare magnitudes in the log domain.
    if lhs_coef == 0:
        # Left side is exactly zero, right side nonpositive.
        return Decision(1, tie_broken=(rhs == 0), score_margin=math.inf if rhs < 0 else 0.0)
    if rhs == 0:
        return Decision(0, score_margin=math.inf)
    margin = math.log(-rhs) - (log_L + math.log(-lhs_coef))
    index = 1 if margin >= 0 else 0
    return Decision(index, tie_broken=(margin == 0), score_margin=margin if index == 1 else -margin)


def _multi_keys(log_likelihoods: np.ndarray, score_factors: np.ndarray):
    """Rank keys ``(tier, value)`` for the multi-hypothesis detector.

    Positive score factors compete by ``log(factor) + log-likelihood``;
    zero factors all tie at product zero; negative factors rank below both
    and compete by the least-negative product.
    """
    keys = []
    for f, lp in zip(score_factors, log_likelihoods):
        if f > 0:
            keys.append((1, math.log(f) + lp))
        elif f == 0:
            keys.append((0, 0.0))
        else:
            keys.append((-1, -(math.log(-f) + lp)))
    return keys


def decide_multi(log_likelihoods, delta_diag, weights: CostWeights) -> Decision:
    """Optimal multi-hypothesis detector under separated costs.

    Maximizes ``(a_j - b_j * delta_j) * p_j`` over hypotheses ``j``, where
    ``delta_j`` is the per-hypothesis MMSE.  Ties break to the lowest index.
    """
    if weights.kind == "combined":
        raise ValueError("decide_multi requires separated (diagonal) estimation weights")
    log_likelihoods = np.asarray(log_likelihoods, dtype=float)
    delta_diag = np.asarray(delta_diag, dtype=float)
    if log_likelihoods.shape != (weights.n_hypotheses,) or delta_diag.shape != log_likelihoods.shape:
        raise ValueError("need one log-likelihood and one posterior cost per hypothesis")

    factors = weights.a - weights.b_diagonal * delta_diag
    keys = _multi_keys(log_likelihoods, factors)
    best = max(range(len(keys)), key=lambda j: (keys[j], -j))
    tie = sum(1 for k in keys if k == keys[best]) > 1
    others = [keys[j][1] for j in range(len(keys)) if j != best and keys[j][0] == keys[best][0]]
    margin = keys[best][1] - max(others) if others else math.inf
    return Decision(int(best), tie_broken=tie, score_margin=0.0 if tie else margin)


def decide_multi_batch(log_likelihoods: np.ndarray, score_factors: np.ndarray) -> np.ndarray:
    """Vectorized multi-hypothesis decisions for Monte Carlo error-rate estimation.

    ``log_likelihoods`` has one row per hypothesis and one column per
    replicate; ``score_factors`` holds the per-hypothesis ``a_j - b_j delta_j``
    (deterministic at a fixed horizon).  Matches :func:`decide_multi` on every
    column, including the lowest-index tie rule.
    """
    factors = np.asarray(score_factors, dtype=float)
    tiers = np.where(factors > 0, 1, np.where(factors == 0, 0, -1))
    top = int(tiers.max())
    contenders = np.flatnonzero(tiers == top)
    if top == 0:
        return np.full(log_likelihoods.shape[1], contenders[0], dtype=int)
    rows = log_likelihoods[contenders]
    if top == 1:
        values = np.log(factors[contenders])[:, None] + rows
    else:
        values = -(np.log(-factors[contenders])[:, None] + rows)
    return contenders[np.argmax(values, axis=0)]


def decide_binary_batch(log_L, d00, d01, d10, d11, weights: CostWeights) -> np.ndarray:
    """Vectorized binary decisions; True where the alternative is decided.

    Same signed-log comparison as :func:`decide_binary`, applied elementwise
    to replicate arrays of log likelihood ratios and posterior costs.
    """
    a0, a1 = weights.a
    b = weights.b
    log_L = np.asarray(log_L, dtype=float)
    lhs = np.broadcast_to(a1 + _mass(b[1, 0], d10) - _mass(b[1, 1], d11), log_L.shape)
    rhs = np.broadcast_to(a0 + _mass(b[0, 1], d01) - _mass(b[0, 0], d00), log_L.shape)
    pos_l = lhs > 0
    pos_r = rhs > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_l = np.log(np.where(pos_l, lhs, 1.0))
        log_r = np.log(np.where(pos_r, rhs, 1.0))
        log_nl = np.log(np.where(lhs < 0, -lhs, 1.0))
        log_nr = np.log(np.where(rhs < 0, -rhs, 1.0))
    both_pos = pos_l & pos_r
    both_nonpos = ~pos_l & ~pos_r
    decide_one = np.where(
        both_pos,
        log_L >= log_r - log_l,
        np.where(
            pos_l,  # rhs <= 0: positive left side wins
            True,
            np.where(
                both_nonpos,
                np.where(lhs == 0, True, np.where(rhs == 0, False, log_L + log_nl <= log_nr)),
                False,  # lhs <= 0 < rhs
            ),
        ),
    )
    return decide_one.astype(bool)


def stage_cost_split_values(
    log_L, d00, d01, d10, d11, weights: CostWeights, under: int
):
    """Measure-split stage-cost integrands, vectorized over replicates.

    The optimal cost splits by change of measure into a null-measure part and
    an alternative-measure part, each evaluated at the pointwise-optimal
    decision:

    * ``under=0``:  ``a0 1{d=1} + b00 d00 1{d=0} + b01 d01 1{d=1}``
    * ``under=1``:  ``a1 1{d=0} + b10 d10 1{d=0} + b11 d11 1{d=1}``

    Averaging each part over replicates drawn under its own hypothesis gives
    the same expectation as the single-measure form but with bounded
    integrands, so the Monte Carlo variance stays finite even when the
    likelihood ratio has heavy tails under the null.
    """
    a0, a1 = weights.a
    b = weights.b
    one = decide_binary_batch(log_L, d00, d01, d10, d11, weights)
    zero = ~one
    if under == 0:
        return a0 * one + _mass(b[0, 0], d00) * zero + _mass(b[0, 1], d01) * one
    if under == 1:
        return a1 * zero + _mass(b[1, 0], d10) * zero + _mass(b[1, 1], d11) * one
    raise ValueError("under must be 0 or 1")


def stage_cost_values(
    log_L,
    d00,
    d01,
    d10,
    d11,
    weights: CostWeights,
    *,
    point_mass_null: bool = False,
):
    """Stage-cost integrand, vectorized over replicates.

    Returns the scalar inside the null-measure expectation defining the
    optimal cost at the current state.  With a point-mass null only the
    clipped bracket is returned: the remaining terms of the optimal cost live
    under the alternative's measure and are added by the sampler that owns
    those replicates.

    ``log_L`` is clipped at 700 before exponentiation; beyond that the
    integrand is astronomically unlikely under any sampling measure used
    here and the clip keeps the arithmetic finite.
    """
    a0, a1 = weights.a
    b = weights.b
    L = np.exp(np.minimum(np.asarray(log_L, dtype=float), 700.0))
    lhs_coef = a1 + _mass(b[1, 0], d10) - _mass(b[1, 1], d11)
    rhs = a0 + _mass(b[0, 1], d01) - _mass(b[0, 0], d00)
    bracket = np.minimum(rhs - lhs_coef * L, 0.0)
    if point_mass_null:
        return bracket
    return bracket + a1 + _mass(b[0, 0], d00) + _mass(b[1, 0], d10) * L


def stage_cost_integrand(
    log_L: float, delta: np.ndarray, weights: CostWeights, *, point_mass_null: bool = False
) -> float:
    """Stage-cost integrand at a single state (see :func:`stage_cost_values`)."""
    if weights.n_hypotheses != 2:
        raise ValueError("the stage-cost integrand covers the binary case")
    return float(
        stage_cost_values(
            log_L, delta[0, 0], delta[0, 1], delta[1, 0], delta[1, 1], weights,
            point_mass_null=point_mass_null,
        )
    )


def realized_cost_parts(
    truth: int, decision: int, x: np.ndarray, x_hat: np.ndarray, weights: CostWeights
) -> tuple[float, float]:
    """Detection and estimation parts of one replicate's Bayes-cost contribution."""
    detection = float(weights.a[truth]) if decision != truth else 0.0
    b = float(weights.b[truth, decision])
    if b > 0:
        err = np.asarray(x_hat, dtype=float) - np.asarray(x, dtype=float)
        estimation = b * float(err @ err)
    else:
        estimation = 0.0
    return detection, estimation


def realized_cost(
    truth: int, decision: int, x: np.ndarray, x_hat: np.ndarray, weights: CostWeights
) -> float:
    """Single-replicate Bayes-cost contribution ``a_i 1{wrong} + b_ij ||x_hat - x||^2``.

    Callers deciding the point-mass null pass the zero vector as the estimate,
    which realizes the idle-channel convention.
    """
    detection, estimation = realized_cost_parts(truth, decision, x, x_hat, weights)
    return detection + estimation
