"""Structured text configuration for models, weights, and run settings.

One JSON document describes a full experiment: the observation model (priors,
matrix source, dimensions, noise variance), the cost weights, and the run
configuration.  All numbers are 64-bit floats and round-trip bit-exactly
through the shortest-repr encoding used by the ``json`` module.

Schema (see README for the field-by-field description)::

    {
      "model": {
        "n_params": 3, "n_obs": 1, "noise_variance": 1.0,
        "priors": [{"mean": [...], "covariance": [[...], ...]}, ...],
        "observation_matrices": {"kind": "iid-gaussian"}
            | {"kind": "diagonal-groups", "groups": [0, 0, 1, 1]}
            | {"kind": "fixed", "matrices": [[[...], ...], ...]}
      },
      "weights": {"a": [...], "b": [[...], ...]},
      "run": {"alpha": 0.3, "t_max": 200, "mc_samples": 2000,
              "master_seed": 0, "cost_mode": "separated",
              "stopping_source": "online-mc"}
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (
    CostWeights,
    DiagonalMatrixSource,
    FixedMatrixSource,
    GaussianMatrixSource,
    LqgModel,
    RunConfig,
    make_cost_weights,
    make_gaussian_prior,
    standard_normal_gains,
)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """A complete experiment description: model, weights, run settings."""

    model: LqgModel
    weights: CostWeights
    run: RunConfig


def _source_to_dict(source) -> dict:
    if isinstance(source, GaussianMatrixSource):
        return {"kind": "iid-gaussian"}
    if isinstance(source, DiagonalMatrixSource):
        if source.draw is not standard_normal_gains:
            raise ValueError(
                "a custom gain sampler cannot be serialized; configs support the "
                "standard-normal default only"
            )
        return {"kind": "diagonal-groups", "groups": list(source.groups)}
    if isinstance(source, FixedMatrixSource):
        return {"kind": "fixed", "matrices": [m.tolist() for m in source.matrices]}
    raise ValueError(f"unknown matrix source {type(source).__name__}")


def _source_from_dict(spec: dict, n_obs: int, n_params: int):
    kind = spec.get("kind")
    if kind == "iid-gaussian":
        return GaussianMatrixSource(rows=n_obs, cols=n_params)
    if kind == "diagonal-groups":
        return DiagonalMatrixSource(groups=tuple(int(g) for g in spec["groups"]))
    if kind == "fixed":
        return FixedMatrixSource(
            matrices=tuple(np.asarray(m, dtype=float) for m in spec["matrices"])
        )
    raise ValueError(f"unknown observation-matrix kind {kind!r}")


def model_to_dict(model: LqgModel) -> dict:
    return {
        "n_params": model.n_params,
        "n_obs": model.n_obs,
        "noise_variance": float(model.noise_variance),
        "priors": [
            {"mean": p.mean.tolist(), "covariance": p.covariance.tolist()}
            for p in model.priors
        ],
        "observation_matrices": _source_to_dict(model.matrix_source),
    }


def model_from_dict(spec: dict) -> LqgModel:
    n_params = int(spec["n_params"])
    n_obs = int(spec["n_obs"])
    priors = tuple(
        make_gaussian_prior(p["mean"], p["covariance"]) for p in spec["priors"]
    )
    return LqgModel(
        n_params=n_params,
        n_obs=n_obs,
        noise_variance=float(spec["noise_variance"]),
        priors=priors,
        matrix_source=_source_from_dict(spec["observation_matrices"], n_obs, n_params),
    )


def weights_to_dict(weights: CostWeights) -> dict:
    return {"a": weights.a.tolist(), "b": weights.b.tolist()}


def weights_from_dict(spec: dict) -> CostWeights:
    return make_cost_weights(spec["a"], spec["b"])


def run_to_dict(run: RunConfig) -> dict:
    return {
        "alpha": float(run.alpha),
        "t_max": int(run.t_max),
        "mc_samples": int(run.mc_samples),
        "master_seed": int(run.master_seed),
        "cost_mode": run.cost_mode,
        "stopping_source": run.stopping_source,
    }


def run_from_dict(spec: dict) -> RunConfig:
    return RunConfig(
        alpha=float(spec["alpha"]),
        t_max=int(spec.get("t_max", 200)),
        mc_samples=int(spec.get("mc_samples", 2000)),
        master_seed=int(spec.get("master_seed", 0)),
        cost_mode=str(spec.get("cost_mode", "combined")),
        stopping_source=str(spec.get("stopping_source", "online-mc")),
    )


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "model": model_to_dict(config.model),
        "weights": weights_to_dict(config.weights),
        "run": run_to_dict(config.run),
    }


def config_from_dict(spec: dict) -> ExperimentConfig:
    return ExperimentConfig(
        model=model_from_dict(spec["model"]),
        weights=weights_from_dict(spec["weights"]),
        run=run_from_dict(spec["run"]),
    )


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n")


def load_config(path) -> ExperimentConfig:
    try:
        spec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read configuration {path}: {exc}") from exc
    return config_from_dict(spec)


def model_hash(model: LqgModel) -> str:
    """Stable content hash of a model, used to pin cost grids to the model they serve."""
    canonical = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
