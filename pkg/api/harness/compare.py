"""Paired policy comparison with percentile-bootstrap intervals, and the bottleneck ablation grid."""

import logging

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from api.config.experiment import ExperimentConfig, override, policy_label, with_policy
from api.errors import BudgetMismatchError, ConfigError
from api.extract.extract_run_logs import RunSummary
from api.harness.runner import run_experiment
from api.sim.rng import make_stream

logger = logging.getLogger(__name__)


class ArmComparison(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    arm: str
    baseline: str
    mean_J: float
    mean_difference: float
    ci_low: float
    ci_high: float
    n_seeds: int
    allocation: dict[str, float]


class ComparisonReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seeds: list[int]
    arms: list[ArmComparison]
    per_seed: list[dict]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([a.model_dump() for a in self.arms])


def bootstrap_interval(
    differences: np.ndarray, resamples: int, confidence: float, rng: np.random.Generator
) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean difference."""
    differences = np.asarray(differences, dtype=float)
    n = differences.size
    indices = rng.integers(0, n, size=(resamples, n))
    means = differences[indices].mean(axis=1)
    tail = (1.0 - confidence) / 2.0
    return float(np.quantile(means, tail)), float(np.quantile(means, 1.0 - tail))


def _arm_config(cfg: ExperimentConfig, policy) -> ExperimentConfig:
    return policy if isinstance(policy, ExperimentConfig) else with_policy(cfg, policy)


def compare_policies(
    cfg: ExperimentConfig,
    policies: list,
    baseline: str | None = None,
    output_dir=None,
    write: bool = False,
) -> ComparisonReport:
    """Run each arm on the same seeds and caps; report paired J differences against ``baseline``.

    ``policies`` holds ``adaptive``, schedule strings, or full configs. The
    baseline defaults to the first arm.
    """
    arms = [_arm_config(cfg, p) for p in policies]
    caps = arms[0].costs.caps
    for arm in arms[1:]:
        if arm.costs.caps != caps or arm.seeds != arms[0].seeds:
            logger.error(f"Arm {policy_label(arm)} runs under different caps or seeds than {policy_label(arms[0])}")
            raise BudgetMismatchError(
                f"Arm {policy_label(arm)} does not share caps and seeds with {policy_label(arms[0])}"
            )

    summaries: dict[str, RunSummary] = {}
    for arm in arms:
        label = policy_label(arm)
        while label in summaries:
            label = f"{label}#"
        out = None if output_dir is None else f"{output_dir}/{label}"
        summaries[label] = run_experiment(arm, output_dir=out, write=write and output_dir is not None)

    labels = list(summaries)
    base_label = baseline or labels[0]
    if base_label not in summaries:
        logger.error(f"Baseline {base_label!r} is not one of the arms {labels}")
        raise ConfigError(f"Baseline {base_label!r} is not one of the arms {labels}")
    base_J = np.array([s.J for s in summaries[base_label].per_seed])

    results = []
    for i, label in enumerate(labels):
        summary = summaries[label]
        J = np.array([s.J for s in summary.per_seed])
        diff = J - base_J
        rng = make_stream(cfg.bootstrap.seed, "bootstrap", i)
        low, high = bootstrap_interval(diff, cfg.bootstrap.resamples, cfg.bootstrap.confidence, rng)
        allocation = {
            k: float(np.mean([s.meta_action_allocation[k] for s in summary.per_seed])) for k in "OADW"
        }
        results.append(
            ArmComparison(
                arm=label,
                baseline=base_label,
                mean_J=float(J.mean()),
                mean_difference=float(diff.mean()),
                ci_low=low,
                ci_high=high,
                n_seeds=len(J),
                allocation=allocation,
            )
        )

    per_seed = [
        {"arm": label, "seed": s.seed, "J": s.J} for label in labels for s in summaries[label].per_seed
    ]
    return ComparisonReport(seeds=list(arms[0].seeds), arms=results, per_seed=per_seed)


TIGHT = {"noise_eps": 0.2, "coarsen_k": 1, "patch_radius": 1, "action_cardinality": 5}
LOOSE = {"noise_eps": 0.0, "coarsen_k": 1, "patch_radius": 2, "action_cardinality": 5}


def ablation_grid(cfg: ExperimentConfig, tight_scale: float = 0.5, loose_scale: float = 2.0) -> pd.DataFrame:
    """Tight vs loose bottlenecks, each with and without the deliberation cost penalty.

    Reports mean J and meta-action allocation shares per cell.
    """
    loose = {**LOOSE, "patch_radius": min(LOOSE["patch_radius"], (cfg.env.grid_size - 1) // 2)}
    rows = []
    for setting, bottleneck, scale in (("tight", TIGHT, tight_scale), ("loose", loose, loose_scale)):
        for penalty in (True, False):
            caps = cfg.costs.caps.scaled(scale).model_dump(mode="json")
            patch = {"env": {"bottleneck": bottleneck}, "costs": {"caps": caps}}
            if not penalty:
                patch["costs"]["weights"] = {"lambda_C": 0.0}
            cell = override(cfg, patch)
            summary = run_experiment(cell, write=False)
            row = {
                "bottleneck": setting,
                "deliberation_penalty": penalty,
                "mean_J": summary.mean_J,
                "mean_learning_progress": summary.mean_learning_progress,
            }
            for k in "OADW":
                row[f"share_{k}"] = float(np.mean([s.meta_action_allocation[k] for s in summary.per_seed]))
            rows.append(row)
    return pd.DataFrame(rows)
