"""Meta-actions and fixed schedules.

Kinds in index order (used for tie-breaks): Observe=0, Act=1, Deliberate=2,
WritePrivate=3. Schedule letters are O, A, D, W.
"""

from dataclasses import dataclass, field

from pydantic import BaseModel, ConfigDict, field_validator

from api.budget.ledger import StepCosts
from api.sim.gridpatch import STAY, ControlAction, action_name
from api.sim.interface import InterfaceAction

OBSERVE, ACT, DELIBERATE, WRITE = range(4)
KINDS = ("observe", "act", "deliberate", "write_private")
LETTERS = "OADW"


@dataclass(frozen=True)
class MetaAction:
    kind: int
    focus: tuple[int, int] | None = None
    control: ControlAction = field(default_factory=ControlAction.stay)
    interface: InterfaceAction = field(default_factory=InterfaceAction.none)
    n_rollouts: int = 0
    symbol: int | None = None
    forced_noop: bool = False

    @classmethod
    def noop(cls) -> "MetaAction":
        """Act(stay) with no interface action, charged nothing."""
        return cls(kind=ACT, forced_noop=True)

    @property
    def letter(self) -> str:
        return LETTERS[self.kind]

    def token(self, palette: int) -> str:
        """Action symbol used in predictor contexts."""
        if self.kind == ACT:
            return f"A:{action_name(self.control.index, palette)}"
        return self.letter

    def costs(self, move_energy: float, obs_tokens: int, depth: int) -> StepCosts:
        if self.forced_noop:
            return StepCosts()
        if self.kind == OBSERVE:
            return StepCosts(c_obs_tokens=obs_tokens)
        if self.kind == ACT:
            energy = 0.0 if self.control.index == STAY else move_energy
            return StepCosts(c_energy=energy + self.interface.price)
        if self.kind == DELIBERATE:
            return StepCosts(c_compute_tokens=self.n_rollouts * depth)
        return StepCosts(c_compute_tokens=1)


class Schedule(BaseModel):
    """A repeating pattern of meta-action letters, e.g. ``OAD``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    pattern: str

    @field_validator("pattern")
    @classmethod
    def _letters(cls, value: str) -> str:
        if not value or any(c not in LETTERS for c in value):
            raise ValueError(f"Schedule {value!r} must be a non-empty string over {LETTERS}")
        return value

    def kind_at(self, tick: int) -> int:
        """Kind scheduled for 1-based ``tick``."""
        return LETTERS.index(self.pattern[(tick - 1) % len(self.pattern)])
