"""GridPatch: a seedable hidden-state gridworld with bottlenecked observations.

Canonical action list (``action_cardinality`` selects a prefix):

    0 N, 1 S, 2 E, 3 W, 4 stay, 5.. paint(color) for each palette color, last: toggle

The observable view of the hidden state overlays object colors on the grid
and, when ``render_avatar`` is set, marks the avatar with the extra symbol
``palette``. Observations pool that view in k x k blocks (majority, ties to
the lowest symbol) and flip each pooled cell to a uniformly random other
symbol with probability ``noise_eps``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
import logging
from typing import TYPE_CHECKING

import numpy as np

from api.errors import InvalidActionError
from api.sim.interface import BottleneckConfig

if TYPE_CHECKING:
    from api.config.experiment import EnvConfig

logger = logging.getLogger(__name__)

MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, 1), 3: (0, -1)}
MOVE_NAMES = ("N", "S", "E", "W")
STAY = 4
BLANK = -1
BLANK_SYMBOL = "blank"
NONE_SYMBOL = "-"


def full_action_count(palette: int) -> int:
    return 5 + palette + 1


def action_name(index: int, palette: int) -> str:
    if index < 4:
        return MOVE_NAMES[index]
    if index == STAY:
        return "stay"
    if index < 5 + palette:
        return f"paint{index - 5}"
    if index == 5 + palette:
        return "toggle"
    raise InvalidActionError(f"Action index {index} outside the canonical list")


@dataclass(frozen=True)
class ControlAction:
    """U_t, identified by its index in the canonical action list."""

    index: int

    @classmethod
    def stay(cls) -> "ControlAction":
        return cls(STAY)

    def name(self, palette: int) -> str:
        return action_name(self.index, palette)


@dataclass(frozen=True)
class WorldObject:
    position: tuple[int, int]
    color: int
    rule: str
    heading: int = 1


@dataclass(frozen=True)
class HiddenWorldState:
    """X_t. ``cue`` holds the delayed-cue color after it leaves the grid."""

    grid: np.ndarray
    objects: tuple[WorldObject, ...]
    avatar_pos: tuple[int, int]
    tick: int = 0
    cue: int | None = None

    @property
    def size(self) -> int:
        return self.grid.shape[0]

    def key(self) -> tuple:
        return (self.grid.tobytes(), self.objects, self.avatar_pos, self.tick, self.cue)


@dataclass(frozen=True)
class Observation:
    """O_t: a pooled (possibly noisy, possibly stale) patch."""

    patch: np.ndarray
    patch_origin: tuple[int, int]
    stale_by: int
    token_count: int
    blank: bool = False

    @property
    def symbol(self) -> str:
        if self.blank:
            return BLANK_SYMBOL
        return patch_symbol(self.patch)


def patch_symbol(patch: np.ndarray) -> str:
    """Injective string form of a pooled patch: side, then row-major values."""
    return f"{patch.shape[0]}|" + ".".join(str(int(v)) for v in patch.ravel())


def observation_symbols(env: "EnvConfig") -> int:
    return env.palette + (1 if env.render_avatar else 0)


# -- object dynamics: pure functions of (object, grid size, active) --------------


def _cycle(obj: WorldObject, size: int, axis: int) -> WorldObject:
    r, c = obj.position
    if axis == 1:
        return replace(obj, position=(r, (c + obj.heading) % size))
    return replace(obj, position=((r + obj.heading) % size, c))


def _bounce(obj: WorldObject, size: int, axis: int) -> WorldObject:
    r, c = obj.position
    heading = obj.heading
    coord = c if axis == 1 else r
    if size == 1:
        return obj
    if not 0 <= coord + heading < size:
        heading = -heading
    coord = coord + heading
    position = (r, coord) if axis == 1 else (coord, c)
    return replace(obj, position=position, heading=heading)


MOVEMENT_RULES = {
    "static": lambda obj, size: obj,
    "cycle_h": lambda obj, size: _cycle(obj, size, 1),
    "cycle_v": lambda obj, size: _cycle(obj, size, 0),
    "bounce_h": lambda obj, size: _bounce(obj, size, 1),
    "bounce_v": lambda obj, size: _bounce(obj, size, 0),
}


def objects_active(state: HiddenWorldState, env: "EnvConfig") -> bool:
    """In the ``varying`` variant objects only move in alternate phases."""
    if env.variant != "varying":
        return True
    return (state.tick // env.phase_length) % 2 == 0


def move_objects(state: HiddenWorldState, env: "EnvConfig") -> tuple[WorldObject, ...]:
    if not objects_active(state, env):
        return state.objects
    return tuple(MOVEMENT_RULES[obj.rule](obj, state.size) for obj in state.objects)


# -- environment --------------------------------------------------------------


def initial_state(env: "EnvConfig", rng: np.random.Generator) -> HiddenWorldState:
    """Build X_0 from the env config, drawing random content from ``rng``."""
    size = env.grid_size
    if env.grid_init == "random":
        grid = rng.integers(0, env.palette, size=(size, size)).astype(np.int64)
    elif env.grid_init == "stripes":
        grid = np.tile(np.arange(size) % env.palette, (size, 1)).astype(np.int64)
    else:
        grid = np.zeros((size, size), dtype=np.int64)

    cue = None
    if env.variant == "delayed_cue":
        cue = int(rng.integers(1, env.palette))
        grid[0, 0] = cue

    objects = tuple(
        WorldObject(position=tuple(spec.position), color=spec.color, rule=spec.rule, heading=spec.heading)
        for spec in env.objects
    )
    avatar = tuple(env.avatar_start) if env.avatar_start is not None else (size // 2, size // 2)
    return HiddenWorldState(grid=grid, objects=objects, avatar_pos=avatar, tick=0, cue=cue)


def step_env(
    state: HiddenWorldState,
    u: ControlAction,
    rng: np.random.Generator,
    env: "EnvConfig",
    b: BottleneckConfig,
) -> HiddenWorldState:
    """X_{t+1} ~ p_X(. | X_t, U_t).

    With probability ``slip_prob`` the control action is replaced by stay.
    One uniform draw is consumed per step regardless of ``slip_prob``.
    """
    if not 0 <= u.index < b.action_cardinality:
        logger.error(f"Action index {u.index} outside available cardinality {b.action_cardinality}")
        raise InvalidActionError(
            f"Action index {u.index} is not available (action_cardinality={b.action_cardinality})"
        )

    index = u.index
    if rng.random() < b.slip_prob:
        index = STAY
    return transition(state, index, env)


def transition(state: HiddenWorldState, index: int, env: "EnvConfig") -> HiddenWorldState:
    """Deterministic effect of the realised action ``index`` (after any slip)."""
    grid = state.grid.copy()
    r, c = state.avatar_pos
    size = state.size
    if index in MOVES:
        dr, dc = MOVES[index]
        nr, nc = r + dr, c + dc
        if 0 <= nr < size and 0 <= nc < size:
            r, c = nr, nc
    elif 5 <= index < 5 + env.palette:
        grid[r, c] = index - 5
    elif index == 5 + env.palette:
        grid[r, c] = (grid[r, c] + 1) % env.palette

    tick = state.tick + 1
    if env.variant == "delayed_cue" and tick == env.cue_ticks and state.grid[0, 0] == state.cue:
        grid[0, 0] = 0

    return HiddenWorldState(
        grid=grid,
        objects=move_objects(state, env),
        avatar_pos=(r, c),
        tick=tick,
        cue=state.cue,
    )


def render(state: HiddenWorldState, env: "EnvConfig") -> np.ndarray:
    """The observable view: grid colors, then objects, then the avatar marker."""
    view = state.grid.copy()
    for obj in state.objects:
        view[obj.position] = obj.color
    if env.render_avatar:
        view[state.avatar_pos] = env.palette
    return view


def task_score(state: HiddenWorldState, env: "EnvConfig") -> float:
    """Extrinsic score: cells matching the target pattern, or the delayed-cue condition."""
    if env.variant == "delayed_cue":
        return float(state.cue is not None and state.grid[state.avatar_pos] == state.cue)
    if env.target_pattern is None:
        return 0.0
    return float((state.grid == np.asarray(env.target_pattern)).sum())


# -- observation ----------------------------------------------------------------


def patch_origin(focus: tuple[int, int], b: BottleneckConfig, size: int) -> tuple[int, int]:
    """Top-left corner of the patch window, clamped to lie inside the grid."""
    side = b.patch_side
    return tuple(int(min(max(f - b.patch_radius, 0), size - side)) for f in focus)


def pool_patch(view: np.ndarray, origin: tuple[int, int], b: BottleneckConfig, n_symbols: int) -> np.ndarray:
    """Majority symbol per k x k block; ties go to the lowest symbol index."""
    side, k = b.patch_side, b.coarsen_k
    nb = side // k
    window = view[origin[0] : origin[0] + side, origin[1] : origin[1] + side]
    blocks = window.reshape(nb, k, nb, k).transpose(0, 2, 1, 3).reshape(nb * nb, k * k)
    counts = (blocks[:, :, None] == np.arange(n_symbols)[None, None, :]).sum(axis=1)
    return counts.argmax(axis=1).reshape(nb, nb)


def corrupt(pooled: np.ndarray, noise_eps: float, n_symbols: int, rng: np.random.Generator) -> np.ndarray:
    """Flip each cell to a uniformly random other symbol with probability noise_eps."""
    flat = pooled.ravel()
    draws = rng.random(flat.size)
    if n_symbols < 2:
        return pooled.copy()
    others = rng.integers(0, n_symbols - 1, size=flat.size)
    flipped = others + (others >= flat)
    return np.where(draws < noise_eps, flipped, flat).reshape(pooled.shape)


class LatencyBuffer:
    """Recent hidden states by tick, for delayed observations."""

    def __init__(self, capacity: int):
        self._states: deque = deque(maxlen=max(1, capacity + 1))

    def push(self, state: HiddenWorldState) -> None:
        self._states.append(state)

    def states(self) -> list[HiddenWorldState]:
        return list(self._states)

    def lookup(self, tick: int) -> HiddenWorldState | None:
        for state in reversed(self._states):
            if state.tick == tick:
                return state
        return None

    def __len__(self) -> int:
        return len(self._states)


def blank_observation(b: BottleneckConfig, origin: tuple[int, int]) -> Observation:
    nb = b.blocks_per_side
    return Observation(
        patch=np.full((nb, nb), BLANK, dtype=np.int64),
        patch_origin=origin,
        stale_by=b.latency_ticks,
        token_count=b.token_count,
        blank=True,
    )


def observe(
    state: HiddenWorldState,
    focus: tuple[int, int],
    b: BottleneckConfig,
    rng: np.random.Generator,
    env: "EnvConfig",
    buffer: LatencyBuffer | None = None,
) -> Observation:
    """O_t ~ p_O(. | X_{t - latency}; b).

    Reads the state ``latency_ticks`` in the past from ``buffer``. Before the
    buffer holds that state the result is the all-blank sentinel patch.
    """
    size = state.size
    if not (0 <= focus[0] < size and 0 <= focus[1] < size):
        logger.error(f"Focus {focus} outside the {size}x{size} grid")
        raise ValueError(f"Focus {focus} is outside the grid")

    origin = patch_origin(focus, b, size)
    source = state
    if b.latency_ticks > 0:
        source = buffer.lookup(state.tick - b.latency_ticks) if buffer is not None else None
        if source is None:
            return blank_observation(b, origin)

    n_symbols = observation_symbols(env)
    pooled = pool_patch(render(source, env), origin, b, n_symbols)
    noisy = corrupt(pooled, b.noise_eps, n_symbols, rng)
    return Observation(
        patch=noisy,
        patch_origin=origin,
        stale_by=b.latency_ticks,
        token_count=b.token_count,
    )
