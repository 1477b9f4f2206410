"""Experiment config schema.

One JSON file validated by ``ExperimentConfig``. Every field has a default
and unknown keys are rejected at every level. A ``null`` upgrade price means
the upgrade is not for sale.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from api.budget.ledger import BudgetCaps, CostWeights
from api.errors import ConfigError
from api.metrics.unification import UnificationWeights
from api.sim.interface import BottleneckConfig, UpgradeCatalogue, check_catalogue

logger = logging.getLogger(__name__)

SCHEDULE_LETTERS = set("OADW")


class ObjectSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    position: tuple[int, int]
    color: int = Field(ge=0)
    rule: Literal["static", "cycle_h", "cycle_v", "bounce_h", "bounce_v"] = "cycle_h"
    heading: Literal[-1, 1] = 1


class EnvConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    grid_size: int = Field(8, ge=1)
    palette: int = Field(4, ge=1)
    render_avatar: bool = True
    grid_init: Literal["random", "stripes", "zeros"] = "random"
    objects: list[ObjectSpec] = Field(
        default_factory=lambda: [
            ObjectSpec(position=(1, 0), color=1, rule="cycle_h"),
            ObjectSpec(position=(0, 5), color=2, rule="bounce_v"),
        ]
    )
    avatar_start: tuple[int, int] | None = None
    variant: Literal["standard", "varying", "delayed_cue"] = "standard"
    phase_length: int = Field(10, ge=1)
    cue_ticks: int = Field(3, ge=1)
    target_pattern: list[list[int]] | None = None
    bottleneck: BottleneckConfig = BottleneckConfig()
    compute_per_tick: int = Field(4, ge=0)
    catalogue: UpgradeCatalogue = UpgradeCatalogue()
    move_energy: float = Field(1.0, ge=0.0)
    enumeration_cap: int = Field(1_000_000, ge=1)

    @model_validator(mode="after")
    def _check_geometry(self):
        size = self.grid_size
        full_actions = 5 + self.palette + 1
        if self.bottleneck.patch_side > size:
            raise ValueError(f"patch side {self.bottleneck.patch_side} is wider than the {size}x{size} grid")
        if self.bottleneck.action_cardinality > full_actions:
            raise ValueError(
                f"action_cardinality {self.bottleneck.action_cardinality} exceeds the {full_actions} canonical actions"
            )
        for obj in self.objects:
            if not all(0 <= p < size for p in obj.position):
                raise ValueError(f"object position {obj.position} is outside the grid")
            if obj.color >= self.palette:
                raise ValueError(f"object color {obj.color} is outside the palette")
        if self.avatar_start is not None and not all(0 <= p < size for p in self.avatar_start):
            raise ValueError(f"avatar_start {self.avatar_start} is outside the grid")
        if self.target_pattern is not None:
            if len(self.target_pattern) != size or any(len(row) != size for row in self.target_pattern):
                raise ValueError("target_pattern must be grid_size x grid_size")
        if self.variant == "delayed_cue" and self.palette < 2:
            raise ValueError("delayed_cue needs at least two colors")
        try:
            check_catalogue(self.catalogue, full_actions)
        except ConfigError as e:
            raise ValueError(str(e)) from e
        return self


class PredictorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    horizon: int = Field(4, ge=1)
    context_length: int = Field(1, ge=0)
    alpha: float = Field(1.0, gt=0.0)
    update_steps: int = Field(1, ge=0)
    alphabet_size: int | None = Field(None, ge=2)


class CostConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    weights: CostWeights = CostWeights()
    caps: BudgetCaps = BudgetCaps()
    memory_coefficient: float = Field(0.01, ge=0.0)
    intrinsic_reward: bool = True


class TrainingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    iterations: int = Field(0, ge=0)
    episodes_per_update: int = Field(4, ge=1)
    learning_rate: float = Field(0.05, gt=0.0)


class AgentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    controller: Literal["adaptive", "schedule"] = "adaptive"
    schedule: str = "OAD"
    memory: Literal["latent", "tape"] = "latent"
    force_no_write: bool = False
    temperature: float = Field(1.0, gt=0.0)
    feature_mask: Literal["full", "blind"] = "full"
    initial_weights: list[list[float]] | None = None
    tape_cap: int = Field(8, ge=1)
    tape_alphabet: int = Field(8, ge=1)
    tape_bandwidth: int = Field(1, ge=0)
    tape_noise: float = Field(0.0, ge=0.0, le=1.0)
    latent_decay: float = Field(0.5, ge=0.0, le=1.0)
    deliberation_depth: int = Field(1, ge=1)
    rollout_cap: int = Field(4, ge=1)
    task_proxy_weight: float = Field(0.0, ge=0.0)
    interface_policy: Literal["never", "greedy_info"] = "never"
    interface_value: float = Field(1.0, ge=0.0)
    training: TrainingConfig = TrainingConfig()

    @field_validator("schedule")
    @classmethod
    def _check_schedule(cls, value: str) -> str:
        if not value or not set(value) <= SCHEDULE_LETTERS:
            raise ValueError(f"schedule {value!r} must be a non-empty string over O, A, D, W")
        return value

    @model_validator(mode="after")
    def _check_tape(self):
        if "W" in self.schedule and self.controller == "schedule" and self.memory != "tape":
            raise ValueError("schedule letter W needs the tape memory variant")
        return self


class MetricsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    empowerment_k: int = Field(1, ge=1)
    empowerment_every: int = Field(10, ge=0)
    empowerment_mode: Literal["privileged", "belief", "both"] = "both"
    plasticity_window: int = Field(1, ge=1)
    unification: UnificationWeights = UnificationWeights()
    frontier_normalization: Literal["minmax", "none"] = "minmax"
    performance: Literal["learning_progress", "task_score"] = "learning_progress"


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    budget_scales: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    policies: list[str] = Field(default_factory=lambda: ["adaptive", "OAD"])

    @field_validator("budget_scales")
    @classmethod
    def _positive(cls, value: list[float]) -> list[float]:
        if any(s <= 0 for s in value):
            raise ValueError("budget scales must be positive")
        return value


class ProbeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    h1_interventions: list[dict] = Field(
        default_factory=lambda: [{}, {"noise_eps": 0.1}, {"noise_eps": 0.3}, {"slip_prob": 0.2}, {"coarsen_k": 3}]
    )
    h2_kind: Literal["widen_patch", "reduce_noise", "unlock_actions", "raise_compute"] = "reduce_noise"
    h2_prices: list[float | None] = Field(default_factory=lambda: [None, 0.0, 0.5, 1.0, 2.0, 4.0])
    h2_noise: float = Field(0.2, ge=0.0, le=1.0)
    h3_cost_scales: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    h3_intrinsic_off: bool = True
    h4_schedules: list[str] = Field(default_factory=lambda: ["O", "A", "OA", "OAD", "OOAD"])
    h5_threshold: float = 0.0


class BootstrapConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    resamples: int = Field(10_000, ge=1)
    seed: int = 0
    confidence: float = Field(0.95, gt=0.0, lt=1.0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "default"
    env: EnvConfig = EnvConfig()
    predictor: PredictorConfig = PredictorConfig()
    costs: CostConfig = CostConfig()
    agent: AgentConfig = AgentConfig()
    metrics: MetricsConfig = MetricsConfig()
    sweep: SweepConfig = SweepConfig()
    probes: ProbeConfig = ProbeConfig()
    bootstrap: BootstrapConfig = BootstrapConfig()
    episode_length: int = Field(50, ge=0)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])
    output_dir: Path | None = None

    @field_validator("seeds")
    @classmethod
    def _unique_seeds(cls, value: list[int]) -> list[int]:
        if not value or len(set(value)) != len(value):
            raise ValueError("seeds must be a non-empty list without duplicates")
        return value

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True)

    @property
    def config_hash(self) -> str:
        return hashlib.md5(self.canonical_json().encode()).hexdigest()


def _deep_merge(base: dict, patch: dict) -> dict:
    merged = dict(base)
    for key, value in patch.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def override(cfg: ExperimentConfig, patch: dict) -> ExperimentConfig:
    """Return a re-validated copy of ``cfg`` with ``patch`` deep-merged in."""
    try:
        return ExperimentConfig.model_validate(_deep_merge(cfg.model_dump(mode="json"), patch))
    except ValidationError as e:
        logger.error(f"Invalid config override {patch}: {e}")
        raise ConfigError(f"Invalid config override {patch}: {e}") from e


def with_policy(cfg: ExperimentConfig, policy: str) -> ExperimentConfig:
    """``adaptive`` or a schedule string such as ``OAD``."""
    if policy == "adaptive":
        return override(cfg, {"agent": {"controller": "adaptive"}})
    return override(cfg, {"agent": {"controller": "schedule", "schedule": policy}})


def policy_label(cfg: ExperimentConfig) -> str:
    return "adaptive" if cfg.agent.controller == "adaptive" else cfg.agent.schedule


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON experiment config."""
    path = Path(path)
    if not path.exists():
        logger.error(f"Config file not found: {path}")
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        logger.error(f"Config {path} is not valid JSON: {e}")
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        logger.error(f"Config {path} failed validation: {e}")
        raise ConfigError(f"Config {path} failed validation:\n{e}") from e
