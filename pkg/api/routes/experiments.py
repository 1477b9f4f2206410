from contextlib import contextmanager
import json
import logging
from pathlib import Path

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, ValidationError

from api.config.experiment import ExperimentConfig
from api.errors import ConfigError, LabError, UnknownProbeError
from api.extract.extract_run_logs import verify_run
from api.harness.compare import ablation_grid, compare_policies
from api.harness.probes import hypothesis_probe
from api.harness.runner import run_experiment
from api.harness.sweep import frontier_from_runs, frontier_sweep

logger = logging.getLogger(__name__)

router = APIRouter()


class ExperimentRequest(BaseModel):
    """
    An experiment config as JSON; missing blocks take their defaults.
    """
    config: dict = {}


class RunRequest(ExperimentRequest):
    write: bool = False
    output_dir: str | None = None


class CompareRequest(ExperimentRequest):
    policies: list[str]
    baseline: str | None = None


class SweepRequest(ExperimentRequest):
    budget_scales: list[float] | None = None
    policies: list[str] | None = None


class VerifyRequest(BaseModel):
    run_dir: str


class FrontierRequest(BaseModel):
    run_dirs: list[str]
    normalization: str = "minmax"


def parse_config(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        logger.error(f"Invalid experiment config: {e}")
        raise ConfigError(f"Invalid experiment config: {e}") from e


@contextmanager
def lab_errors():
    """Config problems become 422, everything else from the lab becomes 500."""
    try:
        yield
    except (ConfigError, UnknownProbeError) as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    except LabError as e:
        logger.error(f"Experiment failed: {e}")
        raise HTTPException(status_code=500, detail=str(e)) from e


def records(frame) -> list[dict]:
    return json.loads(frame.to_json(orient="records"))


@router.post("/run")
def run_endpoint(request: RunRequest):
    """Run every seed of a config and return its summary."""
    with lab_errors():
        cfg = parse_config(request.config)
        output_dir = Path(request.output_dir) if request.output_dir else None
        summary = run_experiment(cfg, output_dir=output_dir, write=request.write)
    return {"summary": summary.model_dump(mode="json"), "table": records(summary.frame())}


@router.post("/compare")
def compare_endpoint(request: CompareRequest):
    with lab_errors():
        cfg = parse_config(request.config)
        report = compare_policies(cfg, request.policies, baseline=request.baseline)
    return report.model_dump(mode="json")


@router.post("/sweep")
def sweep_endpoint(request: SweepRequest):
    with lab_errors():
        cfg = parse_config(request.config)
        result = frontier_sweep(cfg, request.budget_scales, request.policies)
    return result.model_dump(mode="json")


@router.post("/probe/{probe_id}")
def probe_endpoint(probe_id: str, request: ExperimentRequest):
    with lab_errors():
        cfg = parse_config(request.config)
        report = hypothesis_probe(cfg, probe_id)
    return report.model_dump(mode="json")


@router.post("/verify")
def verify_endpoint(request: VerifyRequest):
    """Recompute a run directory's summary from its step logs."""
    run_dir = Path(request.run_dir)
    if not (run_dir / "manifest.json").exists():
        raise HTTPException(status_code=404, detail=f"No run found at {run_dir}")
    with lab_errors():
        problems = verify_run(run_dir)
    return {"run_dir": str(run_dir), "verified": not problems, "problems": problems}


@router.post("/frontier")
def frontier_endpoint(request: FrontierRequest):
    with lab_errors():
        result = frontier_from_runs([Path(d) for d in request.run_dirs], request.normalization)
    return result.model_dump(mode="json")


@router.post("/ablate")
def ablate_endpoint(request: ExperimentRequest):
    with lab_errors():
        cfg = parse_config(request.config)
        table = ablation_grid(cfg)
    return {"cells": records(table)}
