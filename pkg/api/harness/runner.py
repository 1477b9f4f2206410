"""run_experiment: seeds in a bounded worker pool, deterministic artifacts.

Artifacts per run directory: ``steps_seed{seed}.jsonl``, ``summary.json``,
``summary.csv`` and ``manifest.json``. None of them carries a timestamp.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import json
import logging
from pathlib import Path

from api.agent.controller import PolicyParams
from api.agent.training import train_policy
from api.config.experiment import ExperimentConfig, policy_label
from api.config.settings import settings
from api.extract.extract_run_logs import (
    SCHEMA_VERSION,
    RunSummary,
    build_run_summary,
    summarize_rows,
    write_jsonl,
)
from api.harness.episode import run_episode

logger = logging.getLogger(__name__)


@dataclass
class SeedRun:
    seed: int
    rows: list[dict]
    policy_weights: list[list[float]] | None = None
    training_curve: list[float] | None = None


def run_seed(cfg_json: str, seed: int) -> SeedRun:
    """Train (when configured) and run the evaluation episode for one seed.

    Takes the config as JSON so the job pickles cheaply into worker processes.
    """
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    policy = None
    curve = None
    if cfg.agent.controller == "adaptive":
        if cfg.agent.training.iterations > 0:
            trained = train_policy(cfg, seed)
            policy, curve = trained.params, trained.mean_J
        else:
            policy = PolicyParams.from_config(cfg.agent.initial_weights, cfg.agent.temperature)
    result = run_episode(cfg, seed, policy=policy)
    return SeedRun(
        seed=seed,
        rows=result.rows,
        policy_weights=policy.to_list() if policy is not None else None,
        training_curve=curve,
    )


def run_seeds(cfg: ExperimentConfig, max_workers: int | None = None) -> list[SeedRun]:
    """Run every seed; results come back in seed-list order."""
    workers = max_workers or settings.LAB_MAX_WORKERS
    cfg_json = cfg.model_dump_json()
    if workers <= 1 or len(cfg.seeds) == 1:
        return [run_seed(cfg_json, seed) for seed in cfg.seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_seed, cfg_json, seed) for seed in cfg.seeds]
        return [f.result() for f in futures]


def summarize(cfg: ExperimentConfig, runs: list[SeedRun]) -> RunSummary:
    return build_run_summary(cfg, policy_label(cfg), [summarize_rows(r.rows, cfg, r.seed) for r in runs])


def resolve_output_dir(cfg: ExperimentConfig, output_dir: Path | None = None) -> Path:
    if output_dir is not None:
        return Path(output_dir)
    if cfg.output_dir is not None:
        return Path(cfg.output_dir)
    return Path(settings.LAB_OUTPUT_ROOT) / cfg.name


def write_run(cfg: ExperimentConfig, runs: list[SeedRun], summary: RunSummary, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for run in runs:
        write_jsonl(run.rows, out / f"steps_seed{run.seed}.jsonl")
    (out / "summary.json").write_text(json.dumps(summary.model_dump(mode="json"), sort_keys=True, indent=2))
    summary.frame().to_csv(out / "summary.csv", index=False)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "policy": summary.policy,
        "config": cfg.model_dump(mode="json"),
        "config_hash": cfg.config_hash,
        "seeds": list(cfg.seeds),
        "policy_weights": {str(r.seed): r.policy_weights for r in runs},
        "training_curves": {str(r.seed): r.training_curve for r in runs},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))


def run_experiment(
    cfg: ExperimentConfig,
    output_dir: Path | None = None,
    write: bool = True,
    max_workers: int | None = None,
) -> RunSummary:
    """Run all seeds of ``cfg`` and, unless ``write`` is off, write the run directory."""
    logger.info(f"Running {cfg.name!r} ({policy_label(cfg)}) over seeds {cfg.seeds}")
    runs = run_seeds(cfg, max_workers)
    summary = summarize(cfg, runs)
    if write:
        out = resolve_output_dir(cfg, output_dir)
        write_run(cfg, runs, summary, out)
        logger.info(f"Wrote run artifacts to {out}")
    logger.info(f"{cfg.name!r}: mean J {summary.mean_J:.4f}")
    return summary
