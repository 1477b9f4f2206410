"""Budget-aware meta-controller: features, softmax kind policy and sub-policies."""

from dataclasses import dataclass, field
import hashlib
import itertools
import json
import logging
import math

import numpy as np

from api.agent.meta_actions import ACT, DELIBERATE, KINDS, OBSERVE, WRITE
from api.budget.ledger import CostWeights, Ledger, StepCosts
from api.errors import InvalidActionError
from api.metrics.unification import UnificationWeights, interface_unification
from api.model.predictor import ContextKey, PredictorParams, expected_nll_reduction
from api.sim.gridpatch import STAY, action_name
from api.sim.interface import (
    INTERFACE_KINDS,
    BottleneckConfig,
    CapacityState,
    InterfaceAction,
    UpgradeCatalogue,
    apply_interface_action,
)

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "bias",
    "obs_remaining",
    "energy_remaining",
    "compute_remaining",
    "last_nll",
    "staleness",
    "tick_phase",
    "has_plan",
    "latent_0",
    "latent_1",
    "tape_fill",
    "tape_last",
)
BLIND_FEATURES = ("bias", "obs_remaining", "energy_remaining", "compute_remaining")
N_FEATURES = len(FEATURE_NAMES)
GREEDY_TEMPERATURE = 1e-6
UNSEEN_SYMBOL = "\x00unseen"


def symbol_digest(symbol: str) -> np.ndarray:
    """Two numbers in [0, 1) derived from the md5 of an observation symbol."""
    raw = hashlib.md5(symbol.encode()).digest()
    return np.array([int.from_bytes(raw[:4], "big"), int.from_bytes(raw[4:8], "big")], dtype=float) / 2**32


def private_symbol(observation: str, tape_alphabet: int) -> int:
    """Tape symbol written for an observation: its md5 modulo the tape alphabet."""
    return int(hashlib.md5(observation.encode()).hexdigest(), 16) % tape_alphabet


@dataclass
class AgentState:
    """S_t: predictor, capacities, histories and memory of one episode's agent."""

    theta: PredictorParams
    capacity: CapacityState
    bottleneck: BottleneckConfig
    memory: str = "latent"
    observations: list[str] = field(default_factory=list)
    actions: list[str] = field(default_factory=list)
    latest_patch: str | None = None
    last_observe_tick: int | None = None
    last_nll: float = 1.0
    plan: list[int] = field(default_factory=list)
    latent: np.ndarray = field(default_factory=lambda: np.zeros(2))
    tape: list[int] = field(default_factory=list)

    def context(self) -> ContextKey:
        """Context for predicting the result of the action about to be chosen."""
        return ContextKey.from_history(self.observations, self.actions, self.theta.context_length)

    def absorb(self, observation: str, decay: float) -> None:
        """Roll the latent digest toward the newest observation."""
        self.latent = decay * self.latent + (1.0 - decay) * symbol_digest(observation)


@dataclass(frozen=True)
class PolicyParams:
    """Linear softmax policy: one weight row per meta-action kind."""

    weights: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (len(KINDS), N_FEATURES):
            raise ValueError(f"Policy weights must have shape {(len(KINDS), N_FEATURES)}, got {weights.shape}")
        if not np.isfinite(weights).all():
            raise ValueError("Policy weights must be finite")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def zeros(cls, temperature: float = 1.0) -> "PolicyParams":
        return cls(np.zeros((len(KINDS), N_FEATURES)), temperature)

    @classmethod
    def from_config(cls, initial_weights: list[list[float]] | None, temperature: float) -> "PolicyParams":
        if initial_weights is None:
            return cls.zeros(temperature)
        return cls(np.asarray(initial_weights, dtype=float), temperature)

    def to_list(self) -> list[list[float]]:
        return self.weights.tolist()


def featurize(
    s: AgentState,
    ledger: Ledger,
    tick: int,
    episode_length: int,
    feature_mask: str = "full",
    tape_cap: int = 1,
    tape_alphabet: int = 1,
) -> np.ndarray:
    """Feature vector in FEATURE_NAMES order; ``blind`` zeroes all but budget features."""
    staleness = 1.0
    if s.last_observe_tick is not None:
        staleness = min(1.0, (tick - s.last_observe_tick) / max(episode_length, 1))
    features = np.array(
        [
            1.0,
            ledger.fraction_remaining("obs"),
            ledger.fraction_remaining("energy"),
            ledger.fraction_remaining("compute"),
            s.last_nll,
            staleness,
            tick / max(episode_length, 1),
            1.0 if s.plan else 0.0,
            s.latent[0],
            s.latent[1],
            len(s.tape) / tape_cap,
            (s.tape[-1] + 1) / tape_alphabet if s.tape else 0.0,
        ]
    )
    if feature_mask == "blind":
        keep = np.array([name in BLIND_FEATURES for name in FEATURE_NAMES])
        features = np.where(keep, features, 0.0)
    return features


def kind_probabilities(p: PolicyParams, features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over affordable kinds; unaffordable kinds get exactly 0."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("No affordable meta-action kind")
    scores = p.weights @ features / p.temperature
    scores = np.where(mask, scores, -np.inf)
    shifted = np.exp(scores - scores[mask].max())
    probs = np.where(mask, shifted, 0.0)
    return probs / probs.sum()


def select_kind(p: PolicyParams, features: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> int:
    """Sample a kind by inverse CDF on one uniform draw.

    At or below GREEDY_TEMPERATURE the choice is the argmax over affordable
    kinds, ties to the lowest index, and no draw is consumed.
    """
    if p.temperature <= GREEDY_TEMPERATURE:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("No affordable meta-action kind")
        scores = np.where(mask, p.weights @ features, -np.inf)
        return int(np.argmax(scores))
    probs = kind_probabilities(p, features, mask)
    u = rng.random()
    index = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    if index >= len(probs) or not mask[index]:
        index = int(np.flatnonzero(mask)[-1])
    return index


def affordable_kinds(
    s: AgentState,
    ledger: Ledger,
    mandatory: StepCosts,
    move_energy: float,
    depth: int,
    write_allowed: bool,
) -> np.ndarray:
    """Which kinds fit the remaining caps once this tick's mandatory costs are paid."""
    obs_left = ledger.remaining("obs") - mandatory.c_obs_tokens
    energy_left = ledger.remaining("energy") - mandatory.c_energy
    compute_left = ledger.remaining("compute") - mandatory.c_compute_tokens
    mask = np.zeros(len(KINDS), dtype=bool)
    mask[OBSERVE] = obs_left >= s.bottleneck.token_count
    mask[ACT] = energy_left >= move_energy
    mask[DELIBERATE] = s.capacity.c_compute >= 1 and compute_left >= depth
    mask[WRITE] = s.memory == "tape" and write_allowed and compute_left >= 1
    return mask


@dataclass(frozen=True)
class DeliberationResult:
    plan: tuple[int, ...]
    tokens: int
    truncated: bool
    score: float


def known_symbols(theta: PredictorParams) -> list[str]:
    """Observation symbols stored anywhere in the predictor, as outcome or in a context."""
    symbols: set[str] = set()
    for key, table in theta.counts.items():
        symbols.update(o for o, c in table.items() if c > 0)
        symbols.update(o for o, _ in json.loads(key))
    return sorted(symbols)


def plan_score(
    s: AgentState,
    plan: tuple[int, ...],
    palette: int,
    task_proxy_weight: float,
    symbols: list[str] | None = None,
) -> float:
    """Expected NLL reduction along the plan, plus the task proxy.

    After each planned action the next observation is drawn from the
    predictor's own predictive distribution at the resulting context and
    interleaved into the history before the next action; the score is the
    exact expectation over those draws. Symbols the predictor has never
    stored share one branch, since every context holding them is empty.
    The task proxy counts grid-changing steps (paint or toggle).
    """
    theta = s.theta
    m = theta.context_length
    known = known_symbols(theta) if symbols is None else symbols
    unseen = theta.alphabet_size - len(known)
    tokens = [f"A:{action_name(index, palette)}" for index in plan]
    memo: dict = {}

    def expected(observations: tuple[str, ...], actions: tuple[str, ...], j: int) -> float:
        if j == len(tokens):
            return 0.0
        key = (observations[-m:], actions[-m:], j) if m else j
        if key in memo:
            return memo[key]
        acted = actions + (tokens[j],)
        ctx = ContextKey.from_history(observations, acted, m)
        value = expected_nll_reduction(theta, ctx)
        if j + 1 < len(tokens):
            table = theta.table(ctx)
            denom = sum(table.values()) + theta.alpha * theta.alphabet_size
            for o in known:
                value += (table.get(o, 0) + theta.alpha) / denom * expected(observations + (o,), acted, j + 1)
            if unseen > 0:
                value += unseen * theta.alpha / denom * expected(observations + (UNSEEN_SYMBOL,), acted, j + 1)
        memo[key] = value
        return value

    proxy = task_proxy_weight * sum(1 for index in plan if index > STAY)
    return expected(tuple(s.observations), tuple(s.actions), 0) + proxy


def search_plans(
    s: AgentState,
    n_rollouts: int,
    depth: int,
    palette: int,
    remaining_compute: float,
    rng: np.random.Generator,
    task_proxy_weight: float = 0.0,
) -> DeliberationResult:
    """Score up to ``n_rollouts`` depth-``depth`` plans without touching the agent.

    Candidates are a policy-stream permutation of all plans over the available
    actions. Ties go to the lowest canonical plan index. Each candidate costs
    ``depth`` compute tokens; when the remaining compute cannot pay for all of
    them the count is truncated, and with nothing payable the current plan is
    returned at zero tokens.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be at least 1")
    affordable = int(remaining_compute // depth) if math.isfinite(remaining_compute) else n_rollouts
    truncated = affordable < n_rollouts
    n = min(n_rollouts, affordable)
    if n <= 0:
        logger.debug("Deliberation has no compute left; plan unchanged")
        return DeliberationResult(plan=tuple(s.plan), tokens=0, truncated=True, score=0.0)

    plans = list(itertools.product(range(s.bottleneck.action_cardinality), repeat=depth))
    order = rng.permutation(len(plans))[:n]
    symbols = known_symbols(s.theta)
    best_index, best_score = None, -math.inf
    for index in sorted(int(i) for i in order):
        score = plan_score(s, plans[index], palette, task_proxy_weight, symbols)
        if score > best_score:
            best_index, best_score = index, score
    return DeliberationResult(plan=plans[best_index], tokens=n * depth, truncated=truncated, score=best_score)


def deliberate(
    s: AgentState,
    n_rollouts: int,
    depth: int,
    palette: int,
    remaining_compute: float,
    rng: np.random.Generator,
    task_proxy_weight: float = 0.0,
) -> DeliberationResult:
    """search_plans, then cache the best plan in the agent."""
    result = search_plans(s, n_rollouts, depth, palette, remaining_compute, rng, task_proxy_weight)
    if result.tokens > 0:
        s.plan = list(result.plan)
    return result


def write_private(
    s: AgentState,
    symbol: int,
    tape_cap: int,
    tape_alphabet: int,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[AgentState, bool]:
    """Append a symbol to the private tape, evicting the oldest at the cap.

    With ``noise`` > 0 the stored symbol is replaced by a uniformly random
    other symbol with that probability. Returns the state and an eviction flag.
    """
    if s.memory != "tape":
        logger.error("write_private called on a latent-memory agent")
        raise InvalidActionError("write_private is only available in the tape memory variant")
    if not 0 <= symbol < tape_alphabet:
        raise InvalidActionError(f"Tape symbol {symbol} outside alphabet of size {tape_alphabet}")
    stored = symbol
    if noise > 0 and tape_alphabet > 1 and rng is not None:
        if rng.random() < noise:
            other = int(rng.integers(0, tape_alphabet - 1))
            stored = other + (other >= symbol)
    evicted = len(s.tape) >= tape_cap
    if evicted:
        logger.info(f"Tape at cap {tape_cap}; evicting oldest symbol")
        s.tape.pop(0)
    s.tape.append(stored)
    return s, evicted


def choose_interface_action(
    s: AgentState,
    env,
    catalogue: UpgradeCatalogue,
    weights: CostWeights,
    unification: UnificationWeights,
    interface_value: float,
    energy_left: float,
    tape_alphabet: int,
    tape_noise: float,
) -> InterfaceAction:
    """greedy_info: the upgrade with the largest positive interface_value * dU - lambda_E * price."""
    before = interface_unification(s.bottleneck, env, s.memory, tape_alphabet, tape_noise, unification, env.enumeration_cap)
    best, best_value = InterfaceAction.none(), 0.0
    for kind in INTERFACE_KINDS[1:]:
        offer = catalogue.offer(kind)
        if offer.price is None or offer.price > energy_left:
            continue
        v = InterfaceAction(kind=kind, price=offer.price)
        outcome = apply_interface_action(s.capacity, s.bottleneck, v, catalogue, env.grid_size)
        if outcome.saturated:
            continue
        after = interface_unification(
            outcome.bottleneck, env, s.memory, tape_alphabet, tape_noise, unification, env.enumeration_cap
        )
        value = interface_value * (after - before) - weights.lambda_E * offer.price
        if value > best_value:
            best, best_value = v, value
    return best


def act_control(s: AgentState, rng: np.random.Generator) -> int:
    """Head of the cached plan, else uniform over the available actions."""
    if s.plan:
        index = s.plan.pop(0)
        if index < s.bottleneck.action_cardinality:
            return index
    return int(rng.integers(0, s.bottleneck.action_cardinality))
