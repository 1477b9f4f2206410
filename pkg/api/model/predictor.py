"""Online Dirichlet-categorical predictor of the next observation.

Parameters are count tables keyed by a context of the last m
(observation, action) symbol pairs. The posterior predictive is

    p(o | ctx) = (count(ctx, o) + alpha) / (total(ctx) + alpha * |alphabet|)

All losses are in bits. Parameters are treated as immutable: ``update``
returns a new version and shares untouched context tables with the old one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
import json
import logging
import math
from typing import TYPE_CHECKING

import numpy as np

from api.errors import MissingSnapshotError, SegmentTooShortError
from api.sim.gridpatch import observation_symbols

if TYPE_CHECKING:
    from api.config.experiment import EnvConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContextKey:
    """The last m (observation, action) pairs, oldest first."""

    pairs: tuple[tuple[str, str], ...] = ()

    @classmethod
    def from_history(cls, observations, actions, m: int) -> "ContextKey":
        """Context after the final (observation, action) pair of aligned histories."""
        if m == 0:
            return cls()
        n = min(len(observations), len(actions))
        start = max(0, n - m)
        return cls(tuple((observations[i], actions[i]) for i in range(start, n)))

    def serialize(self) -> str:
        return json.dumps([list(p) for p in self.pairs])


@dataclass(frozen=True)
class PredictorParams:
    alpha: float = 1.0
    alphabet_size: int = 2
    context_length: int = 1
    counts: dict = field(default_factory=dict)
    version: int = 0

    def table(self, ctx: ContextKey) -> dict:
        return self.counts.get(ctx.serialize(), {})

    def to_json(self) -> str:
        return json.dumps(
            {
                "alpha": self.alpha,
                "alphabet_size": self.alphabet_size,
                "context_length": self.context_length,
                "version": self.version,
                "counts": self.counts,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PredictorParams":
        data = json.loads(text)
        return cls(
            alpha=data["alpha"],
            alphabet_size=data["alphabet_size"],
            context_length=data["context_length"],
            counts={ctx: dict(table) for ctx, table in data["counts"].items()},
            version=data["version"],
        )


def empty_params(alpha: float, alphabet_size: int, context_length: int) -> PredictorParams:
    return PredictorParams(alpha=alpha, alphabet_size=alphabet_size, context_length=context_length)


def default_alphabet_size(env: "EnvConfig") -> int:
    """Patch strings for every patch side reachable through the catalogue, plus blank and none."""
    b = env.bottleneck
    n_symbols = observation_symbols(env)
    radii = [b.patch_radius]
    widen = env.catalogue.widen_patch
    if widen.price is not None:
        radius = b.patch_radius + b.coarsen_k
        while radius <= widen.ceiling and 2 * radius + 1 <= env.grid_size:
            radii.append(radius)
            radius += b.coarsen_k
    total = sum(n_symbols ** (((2 * r + 1) // b.coarsen_k) ** 2) for r in radii)
    return total + 2


def predictive_probability(theta: PredictorParams, ctx: ContextKey, o: str) -> float:
    table = theta.table(ctx)
    total = sum(table.values())
    return (table.get(o, 0) + theta.alpha) / (total + theta.alpha * theta.alphabet_size)


def predictive_distribution(theta: PredictorParams, ctx: ContextKey, symbols) -> np.ndarray:
    """Probabilities of ``symbols`` under the context; sums to 1 when they cover the alphabet."""
    return np.array([predictive_probability(theta, ctx, o) for o in symbols])


@dataclass(frozen=True)
class Segment:
    """D_{a:b}: observations O_a..O_b and the actions A_a..A_{b-1} between them."""

    observations: tuple[str, ...]
    actions: tuple[str, ...]

    def __post_init__(self):
        if len(self.observations) != len(self.actions) + 1:
            raise ValueError(
                f"Segment needs one more observation than actions, got {len(self.observations)} and {len(self.actions)}"
            )

    @property
    def steps(self) -> int:
        return len(self.actions)


def l_pred(theta: PredictorParams, seg: Segment, H: int) -> float:
    """Cumulative NLL of the first H predicted observations of ``seg``, theta held fixed.

    Contexts are truncated to the segment.
    """
    if seg.steps < H:
        logger.error(f"Segment with {seg.steps} steps is shorter than horizon {H}")
        raise SegmentTooShortError(f"Segment spans {seg.steps} observation steps, horizon is {H}")
    total = 0.0
    for h in range(1, H + 1):
        ctx = ContextKey.from_history(seg.observations[:h], seg.actions[:h], theta.context_length)
        total += -math.log2(predictive_probability(theta, ctx, seg.observations[h]))
    return total


def update(theta: PredictorParams, ctx: ContextKey, o: str, n_steps: int = 1) -> PredictorParams:
    """Learn one example. ``n_steps`` = 0 is the budget-starved case and changes nothing."""
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if n_steps == 0:
        return theta
    key = ctx.serialize()
    table = dict(theta.counts.get(key, {}))
    table[o] = table.get(o, 0) + 1
    counts = dict(theta.counts)
    counts[key] = table
    return PredictorParams(
        alpha=theta.alpha,
        alphabet_size=theta.alphabet_size,
        context_length=theta.context_length,
        counts=counts,
        version=theta.version + 1,
    )


class SnapshotRing:
    """The most recent parameter snapshots, looked up by exact tick."""

    def __init__(self, capacity: int):
        self._entries: deque = deque(maxlen=capacity)

    def push(self, tick: int, params: PredictorParams) -> None:
        if self._entries and tick <= self._entries[-1][0]:
            raise ValueError(f"Snapshot tick {tick} does not follow {self._entries[-1][0]}")
        self._entries.append((tick, params))

    def get(self, tick: int) -> PredictorParams:
        for t, params in self._entries:
            if t == tick:
                return params
        logger.error(f"No predictor snapshot at tick {tick}")
        raise MissingSnapshotError(f"No predictor snapshot at tick {tick}")

    @property
    def ticks(self) -> list[int]:
        return [t for t, _ in self._entries]

    def __len__(self) -> int:
        return len(self._entries)


def learning_progress(ring: SnapshotRing, seg: Segment, t: int, H: int) -> float:
    """r_t = L(theta_{t-H-1}; D_{t-H:t}) - L(theta_{t-H}; D_{t-H:t}), and 0 for t <= H."""
    if t <= H:
        return 0.0
    older = ring.get(t - H - 1)
    newer = ring.get(t - H)
    return l_pred(older, seg, H) - l_pred(newer, seg, H)


def _unseen_l1(theta_new: PredictorParams, theta_old: PredictorParams, table_new: dict, table_old: dict) -> float:
    seen = set(table_new) | set(table_old)
    unseen = theta_new.alphabet_size - len(seen)
    if unseen <= 0:
        return 0.0
    p_new = theta_new.alpha / (sum(table_new.values()) + theta_new.alpha * theta_new.alphabet_size)
    p_old = theta_old.alpha / (sum(table_old.values()) + theta_old.alpha * theta_old.alphabet_size)
    return unseen * abs(p_new - p_old)


def update_magnitude(theta_new: PredictorParams, theta_old: PredictorParams) -> float:
    """L1 distance between predictive tables, summed over contexts present in either."""
    total = 0.0
    for key in sorted(set(theta_new.counts) | set(theta_old.counts)):
        table_new = theta_new.counts.get(key, {})
        table_old = theta_old.counts.get(key, {})
        n_new = sum(table_new.values()) + theta_new.alpha * theta_new.alphabet_size
        n_old = sum(table_old.values()) + theta_old.alpha * theta_old.alphabet_size
        for o in sorted(set(table_new) | set(table_old)):
            p_new = (table_new.get(o, 0) + theta_new.alpha) / n_new
            p_old = (table_old.get(o, 0) + theta_old.alpha) / n_old
            total += abs(p_new - p_old)
        total += _unseen_l1(theta_new, theta_old, table_new, table_old)
    return total


def expected_nll_reduction(theta: PredictorParams, ctx: ContextKey) -> float:
    """Expected drop in next-step NLL at ``ctx`` from learning one sample drawn from the predictive."""
    table = theta.table(ctx)
    n = sum(table.values())
    k = theta.alphabet_size
    a = theta.alpha
    denom, denom_after = n + a * k, n + 1 + a * k

    gain = 0.0
    for count in table.values():
        p = (count + a) / denom
        gain += p * (math.log2((count + 1 + a) / denom_after) - math.log2(p))
    unseen = k - len(table)
    if unseen > 0:
        p = a / denom
        gain += unseen * p * (math.log2((1 + a) / denom_after) - math.log2(p))
    return max(gain, 0.0)


def stored_entries(theta: PredictorParams) -> int:
    """Number of non-zero (context, symbol) counts."""
    return sum(1 for table in theta.counts.values() for c in table.values() if c > 0)
