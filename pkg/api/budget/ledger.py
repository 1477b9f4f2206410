"""Cost ledger and the discounted budgeted objective.

Cost routing: consumed observation tokens go to C_O; executed control actions
and interface prices to C_E; deliberation rollout steps, private writes and
predictor updates to C_C; retained state size to C_M.
"""

from dataclasses import dataclass, field
import logging
import math

from pydantic import BaseModel, ConfigDict, Field

from api.errors import NonMonotoneTickError

logger = logging.getLogger(__name__)

CHANNELS = ("obs", "energy", "compute", "memory")
COST_FIELDS = {
    "obs": "c_obs_tokens",
    "energy": "c_energy",
    "compute": "c_compute_tokens",
    "memory": "c_memory",
}


class CostWeights(BaseModel):
    """lambda_O, lambda_E, lambda_C, lambda_M and the discount gamma."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    lambda_O: float = Field(0.01, ge=0.0)
    lambda_E: float = Field(0.05, ge=0.0)
    lambda_C: float = Field(0.01, ge=0.0)
    lambda_M: float = Field(0.001, ge=0.0)
    gamma: float = Field(0.99, gt=0.0, le=1.0)

    def scaled(self, factor: float) -> "CostWeights":
        return self.model_copy(
            update={
                "lambda_O": self.lambda_O * factor,
                "lambda_E": self.lambda_E * factor,
                "lambda_C": self.lambda_C * factor,
                "lambda_M": self.lambda_M * factor,
            }
        )


class StepCosts(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    c_obs_tokens: int = Field(0, ge=0)
    c_energy: float = Field(0.0, ge=0.0)
    c_compute_tokens: int = Field(0, ge=0)
    c_memory: float = Field(0.0, ge=0.0)

    def __add__(self, other: "StepCosts") -> "StepCosts":
        return StepCosts(
            c_obs_tokens=self.c_obs_tokens + other.c_obs_tokens,
            c_energy=self.c_energy + other.c_energy,
            c_compute_tokens=self.c_compute_tokens + other.c_compute_tokens,
            c_memory=self.c_memory + other.c_memory,
        )

    def channel(self, name: str) -> float:
        return getattr(self, COST_FIELDS[name])


class BudgetCaps(BaseModel):
    """Episode caps per channel; ``None`` leaves a channel uncapped."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    obs: float | None = Field(400.0, ge=0.0)
    energy: float | None = Field(40.0, ge=0.0)
    compute: float | None = Field(200.0, ge=0.0)
    memory: float | None = Field(None, ge=0.0)

    def cap(self, channel: str) -> float:
        value = getattr(self, channel)
        return math.inf if value is None else value

    def scaled(self, factor: float) -> "BudgetCaps":
        return self.model_copy(
            update={c: (None if getattr(self, c) is None else getattr(self, c) * factor) for c in CHANNELS}
        )


@dataclass(frozen=True)
class LedgerRow:
    tick: int
    reward: float
    costs: StepCosts

    def as_record(self) -> dict:
        return {"tick": self.tick, "reward": self.reward, **self.costs.model_dump()}


@dataclass
class Ledger:
    """Append-only per-episode record of rewards and costs."""

    caps: BudgetCaps = field(default_factory=BudgetCaps)
    rows: list[LedgerRow] = field(default_factory=list)
    totals: dict = field(default_factory=lambda: {c: 0 for c in CHANNELS})

    @property
    def last_tick(self) -> int | None:
        return self.rows[-1].tick if self.rows else None

    def remaining(self, channel: str) -> float:
        return self.caps.cap(channel) - self.totals[channel]

    def fraction_remaining(self, channel: str) -> float:
        cap = self.caps.cap(channel)
        if math.isinf(cap):
            return 1.0
        if cap == 0:
            return 0.0
        return max(0.0, self.remaining(channel) / cap)

    def exceeded_channel(self, costs: StepCosts) -> str | None:
        for channel in CHANNELS:
            if self.totals[channel] + costs.channel(channel) > self.caps.cap(channel):
                return channel
        return None

    def charge(self, tick: int, costs: StepCosts, reward: float = 0.0) -> bool:
        """Append one tick; return False (ledger unchanged) if a cap would be exceeded."""
        if self.last_tick is not None and tick <= self.last_tick:
            logger.error(f"Non-monotone ledger tick {tick} after {self.last_tick}")
            raise NonMonotoneTickError(f"Ledger tick {tick} does not follow {self.last_tick}")
        channel = self.exceeded_channel(costs)
        if channel is not None:
            logger.debug(f"Charge at tick {tick} refused: {channel} cap would be exceeded")
            return False
        self.rows.append(LedgerRow(tick=tick, reward=reward, costs=costs))
        for name in CHANNELS:
            self.totals[name] = self.totals[name] + costs.channel(name)
        return True


def charge(ledger: Ledger, tick: int, costs: StepCosts, reward: float = 0.0) -> tuple[Ledger, bool]:
    """Charge one tick. Returns the ledger and a refusal flag."""
    accepted = ledger.charge(tick, costs, reward)
    return ledger, not accepted


def discounted_terms(records: list[dict], w: CostWeights, intrinsic: bool = True) -> list[float]:
    """Per-tick gamma^(t-1) (r_t - lambda . C(t)) over ledger records in order."""
    terms = []
    discount = 1.0
    for record in records:
        reward = record["reward"] if intrinsic else 0.0
        net = (
            reward
            - w.lambda_O * record["c_obs_tokens"]
            - w.lambda_E * record["c_energy"]
            - w.lambda_C * record["c_compute_tokens"]
            - w.lambda_M * record["c_memory"]
        )
        terms.append(discount * net)
        discount *= w.gamma
    return terms


def objective_J(ledger: Ledger | list[dict], w: CostWeights, intrinsic: bool = True) -> float:
    """Realised single-trajectory value of the budgeted objective.

    ``intrinsic=False`` drops the learning-progress reward and keeps costs only.
    """
    records = [row.as_record() for row in ledger.rows] if isinstance(ledger, Ledger) else ledger
    total = 0.0
    for term in discounted_terms(records, w, intrinsic):
        total += term
    return total


def memory_cost(state_size: int, coefficient: float) -> float:
    """Per-tick memory charge, linear in retained state size."""
    return coefficient * state_size


def weighted_total_cost(totals: dict, w: CostWeights) -> float:
    """Undiscounted lambda-weighted total cost, the C coordinate of a frontier point."""
    return (
        w.lambda_O * totals["c_obs_tokens"]
        + w.lambda_E * totals["c_energy"]
        + w.lambda_C * totals["c_compute_tokens"]
        + w.lambda_M * totals["c_memory"]
    )
