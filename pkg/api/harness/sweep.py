"""Budget sweeps and cost-performance frontiers over run sets."""

import json
import logging
from pathlib import Path

import pandas as pd
from pydantic import BaseModel, ConfigDict

from api.config.experiment import ExperimentConfig, override, with_policy
from api.errors import ConfigError
from api.extract.extract_run_logs import RunSummary
from api.harness.runner import run_experiment
from api.metrics.frontier import frontier_table, minmax_normalize, pareto_frontier

logger = logging.getLogger(__name__)


class SweepResult(BaseModel):
    model_config = ConfigDict(extra="forbid")

    frontier: list[tuple[float, float]]
    runs: list[dict]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.runs)


def _frontier_result(points: list[tuple[float, float]], labels: list[dict], normalization: str) -> SweepResult:
    table = frontier_table(points, labels, normalization)
    coords = minmax_normalize(points) if normalization == "minmax" else points
    frontier = pareto_frontier(coords)
    return SweepResult(frontier=list(frontier.points), runs=table.to_dict(orient="records"))


def frontier_sweep(
    cfg: ExperimentConfig,
    budget_scales: list[float] | None = None,
    policies: list[str] | None = None,
) -> SweepResult:
    """Run each policy at each budget level and place every (policy, budget, seed) run against the frontier.

    C is the lambda-weighted total cost, P the configured performance measure.
    """
    scales = budget_scales or cfg.sweep.budget_scales
    policies = policies or cfg.sweep.policies
    if len(scales) < 2:
        logger.error("frontier_sweep needs at least two budget levels")
        raise ConfigError("frontier_sweep needs at least two budget levels")

    points, labels = [], []
    for policy in policies:
        for scale in scales:
            caps = cfg.costs.caps.scaled(scale).model_dump(mode="json")
            run_cfg = override(with_policy(cfg, policy), {"costs": {"caps": caps}})
            summary = run_experiment(run_cfg, write=False)
            for s in summary.per_seed:
                points.append((s.C, s.P))
                labels.append({"policy": policy, "budget_scale": scale, "seed": s.seed})
    return _frontier_result(points, labels, cfg.metrics.frontier_normalization)


def frontier_from_runs(run_dirs: list[Path], normalization: str = "minmax") -> SweepResult:
    """Frontier over the per-seed (C, P) points stored in existing run directories."""
    points, labels = [], []
    for run_dir in run_dirs:
        summary_path = Path(run_dir) / "summary.json"
        if not summary_path.exists():
            logger.error(f"No summary.json in {run_dir}")
            raise ConfigError(f"No summary.json in {run_dir}")
        summary = RunSummary.model_validate(json.loads(summary_path.read_text()))
        for s in summary.per_seed:
            points.append((s.C, s.P))
            labels.append({"run": str(run_dir), "policy": summary.policy, "seed": s.seed})
    return _frontier_result(points, labels, normalization)
