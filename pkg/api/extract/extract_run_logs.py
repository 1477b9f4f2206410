import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from api.budget.ledger import CHANNELS, COST_FIELDS, objective_J, weighted_total_cost
from api.config.experiment import ExperimentConfig
from api.errors import VerificationError
from api.metrics.information import plug_in_directed_information
from api.metrics.unification import (
    action_inefficiency,
    communication_inefficiency,
    observation_inefficiency,
    unification_score,
)
from api.sim.interface import BottleneckConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BOTTLENECK_FIELDS = ("coarsen_k", "noise_eps", "latency_ticks", "patch_radius", "action_cardinality", "slip_prob")


class SeedSummary(BaseModel):
    """Everything reported for one seed, recomputable from its step log."""

    model_config = ConfigDict(extra="forbid")

    seed: int
    ticks: int
    J: float
    totals: dict[str, float]
    mean_learning_progress: float
    cumulative_learning_progress: float
    empowerment_samples: list[float]
    empowerment_belief_samples: list[float]
    empowerment_skipped: int
    plasticity: float
    update_magnitudes: list[float]
    unification: float
    C: float
    P: float
    meta_action_allocation: dict[str, float]
    purchases: int
    task_score: float
    viability_exhausted: bool


class RunSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    policy: str
    config_hash: str
    seeds: list[int]
    per_seed: list[SeedSummary]
    mean_J: float
    mean_learning_progress: float
    mean_unification: float

    def frame(self) -> pd.DataFrame:
        """Tidy one-row-per-seed table of the scalar fields."""
        records = []
        for s in self.per_seed:
            record = {
                "name": self.name,
                "policy": self.policy,
                "seed": s.seed,
                "ticks": s.ticks,
                "J": s.J,
                "mean_learning_progress": s.mean_learning_progress,
                "cumulative_learning_progress": s.cumulative_learning_progress,
                "mean_empowerment": float(np.mean(s.empowerment_samples)) if s.empowerment_samples else None,
                "mean_belief_empowerment": (
                    float(np.mean(s.empowerment_belief_samples)) if s.empowerment_belief_samples else None
                ),
                "empowerment_skipped": s.empowerment_skipped,
                "plasticity": s.plasticity,
                "mean_update_magnitude": float(np.mean(s.update_magnitudes)) if s.update_magnitudes else 0.0,
                "unification": s.unification,
                "C": s.C,
                "P": s.P,
                "purchases": s.purchases,
                "task_score": s.task_score,
                "viability_exhausted": s.viability_exhausted,
            }
            record.update({f"total_{k}": v for k, v in s.totals.items()})
            record.update({f"share_{k}": v for k, v in s.meta_action_allocation.items()})
            records.append(record)
        return pd.DataFrame(records)


def write_jsonl(rows: list[dict], path: Path) -> None:
    """Write step rows, one sorted-key JSON object per line."""
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path: Path) -> list[dict]:
    """
    Read a step log back into row dictionaries.

    Parameters
    ----------
    path : Path
        A ``steps_seed{seed}.jsonl`` file.

    Returns
    -------
    list of dict
        The rows in tick order, with floats restored exactly.
    """
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def _final_bottleneck(rows: list[dict], cfg: ExperimentConfig) -> BottleneckConfig:
    if not rows:
        return cfg.env.bottleneck
    return BottleneckConfig(**{k: rows[-1][k] for k in BOTTLENECK_FIELDS})


def summarize_rows(rows: list[dict], cfg: ExperimentConfig, seed: int) -> SeedSummary:
    """
    Build a seed summary from step rows.

    The same function runs in-process and from parsed JSONL, so both paths
    agree bit-exactly.

    Parameters
    ----------
    rows : list of dict
        Step rows of one episode.
    cfg : ExperimentConfig
        The config the episode ran under.
    seed : int
        The episode seed.

    Returns
    -------
    SeedSummary
    """
    totals = {COST_FIELDS[c]: 0.0 for c in CHANNELS}
    for row in rows:
        for name in totals:
            totals[name] += row[name]

    rewards = [row["reward"] for row in rows]
    cumulative = 0.0
    for r in rewards:
        cumulative += r
    mean_lp = cumulative / len(rewards) if rewards else 0.0

    samples = [row["empowerment"] for row in rows if row["empowerment"] is not None]
    privileged = [s["privileged"] for s in samples if "privileged" in s]
    belief = [s["belief"] for s in samples if "belief" in s]

    plasticity = plug_in_directed_information(
        [row["observation"] for row in rows],
        [row["kind"] for row in rows],
        window=cfg.metrics.plasticity_window,
    ).bits

    b = _final_bottleneck(rows, cfg)
    r_o, r_o_max = observation_inefficiency(b, cfg.env, cfg.env.enumeration_cap)
    r_a, r_a_max = action_inefficiency(b, cfg.env.palette)
    r_l, r_l_max = communication_inefficiency(cfg.agent.memory, cfg.agent.tape_alphabet, cfg.agent.tape_noise)
    unification = unification_score(r_o, r_a, r_l, (r_o_max, r_a_max, r_l_max), cfg.metrics.unification)

    task = rows[-1]["task_score"] if rows else 0.0
    performance = cumulative if cfg.metrics.performance == "learning_progress" else task

    counts = {letter: 0 for letter in "OADW"}
    for row in rows:
        counts[row["kind"]] += 1
    allocation = {k: (v / len(rows) if rows else 0.0) for k, v in counts.items()}

    return SeedSummary(
        seed=seed,
        ticks=len(rows),
        J=objective_J(rows, cfg.costs.weights, intrinsic=cfg.costs.intrinsic_reward),
        totals=totals,
        mean_learning_progress=mean_lp,
        cumulative_learning_progress=cumulative,
        empowerment_samples=privileged,
        empowerment_belief_samples=belief,
        empowerment_skipped=sum(1 for row in rows if row["empowerment_skipped"]),
        plasticity=plasticity,
        update_magnitudes=[row["update_magnitude"] for row in rows],
        unification=unification,
        C=weighted_total_cost(totals, cfg.costs.weights),
        P=performance,
        meta_action_allocation=allocation,
        purchases=sum(1 for row in rows if row["interface"] != "none" and not row["saturated"]),
        task_score=task,
        viability_exhausted=len(rows) < cfg.episode_length,
    )


def build_run_summary(cfg: ExperimentConfig, policy: str, per_seed: list[SeedSummary]) -> RunSummary:
    def mean(values: list[float]) -> float:
        total = 0.0
        for v in values:
            total += v
        return total / len(values) if values else 0.0

    return RunSummary(
        name=cfg.name,
        policy=policy,
        config_hash=cfg.config_hash,
        seeds=[s.seed for s in per_seed],
        per_seed=per_seed,
        mean_J=mean([s.J for s in per_seed]),
        mean_learning_progress=mean([s.mean_learning_progress for s in per_seed]),
        mean_unification=mean([s.unification for s in per_seed]),
    )


def load_run(run_dir: Path) -> tuple[ExperimentConfig, dict, RunSummary]:
    """Config, manifest and stored summary of a run directory."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    cfg = ExperimentConfig.model_validate(manifest["config"])
    summary = RunSummary.model_validate(json.loads((run_dir / "summary.json").read_text()))
    return cfg, manifest, summary


def verify_run(run_dir: Path) -> list[str]:
    """
    Recompute every summary field from the step logs of a run directory.

    Returns
    -------
    list of str
        Descriptions of discrepancies; empty when logs and summary agree.
    """
    run_dir = Path(run_dir)
    cfg, manifest, stored = load_run(run_dir)
    problems = []
    if manifest["config_hash"] != cfg.config_hash:
        problems.append(f"config hash {manifest['config_hash']} does not match the stored config")

    per_seed = []
    for seed in manifest["seeds"]:
        path = run_dir / f"steps_seed{seed}.jsonl"
        if not path.exists():
            problems.append(f"missing step log {path.name}")
            continue
        per_seed.append(summarize_rows(read_jsonl(path), cfg, seed))
    recomputed = build_run_summary(cfg, stored.policy, per_seed).model_dump(mode="json")
    expected = json.loads((run_dir / "summary.json").read_text())

    for key in sorted(set(recomputed) | set(expected)):
        if recomputed.get(key) != expected.get(key):
            problems.append(f"summary field {key!r} differs from the value recomputed from logs")
    return problems


def assert_verified(run_dir: Path) -> None:
    problems = verify_run(run_dir)
    if problems:
        for problem in problems:
            logger.error(problem)
        raise VerificationError(f"{len(problems)} discrepancies in {run_dir}: " + "; ".join(problems))
