import math

import numpy as np
import pytest

from api.agent.controller import (
    BLIND_FEATURES,
    FEATURE_NAMES,
    GREEDY_TEMPERATURE,
    AgentState,
    PolicyParams,
    affordable_kinds,
    deliberate,
    featurize,
    kind_probabilities,
    plan_score,
    private_symbol,
    search_plans,
    select_kind,
    write_private,
)
from api.agent.meta_actions import ACT, DELIBERATE, OBSERVE, WRITE, MetaAction, Schedule
from api.budget.ledger import BudgetCaps, Ledger, StepCosts
from api.errors import InvalidActionError
from api.model.predictor import ContextKey, empty_params, update
from api.sim.gridpatch import ControlAction
from api.sim.interface import BottleneckConfig, CapacityState, InterfaceAction
from api.sim.rng import make_stream


@pytest.fixture
def agent():
    b = BottleneckConfig()
    return AgentState(
        theta=empty_params(1.0, 16, 1),
        capacity=CapacityState.from_bottleneck(b, 4),
        bottleneck=b,
        memory="tape",
        observations=["-"],
    )


def test_unaffordable_kinds_get_zero_probability():
    p = PolicyParams(np.ones((4, len(FEATURE_NAMES))))
    features = np.ones(len(FEATURE_NAMES))
    mask = np.array([True, False, True, False])

    probs = kind_probabilities(p, features, mask)

    assert probs[ACT] == 0.0
    assert probs[WRITE] == 0.0
    assert probs.sum() == pytest.approx(1.0)


def test_select_kind_is_reproducible_and_masked():
    p = PolicyParams.zeros()
    features = np.ones(len(FEATURE_NAMES))
    mask = np.array([False, True, True, False])

    first = [select_kind(p, features, mask, make_stream(4, "policy")) for _ in range(3)]

    assert len(set(first)) == 1
    assert first[0] in (ACT, DELIBERATE)


def test_blind_mask_keeps_only_budget_features(agent):
    agent.tape = [3]
    ledger = Ledger()

    features = featurize(agent, ledger, tick=5, episode_length=10, feature_mask="blind", tape_cap=8, tape_alphabet=8)

    for name, value in zip(FEATURE_NAMES, features):
        if name not in BLIND_FEATURES:
            assert value == 0.0
    assert features[0] == 1.0


def test_affordability_follows_remaining_budget(agent):
    # Arrange
    ledger = Ledger(caps=BudgetCaps(obs=5, energy=0.5, compute=10, memory=None))

    # Act
    mask = affordable_kinds(agent, ledger, StepCosts(c_compute_tokens=1), move_energy=1.0, depth=2, write_allowed=True)

    # Assert
    assert not mask[OBSERVE]
    assert not mask[ACT]
    assert mask[DELIBERATE]
    assert mask[WRITE]


def test_latent_agent_cannot_write(agent):
    agent.memory = "latent"

    mask = affordable_kinds(agent, Ledger(), StepCosts(), 1.0, 1, write_allowed=True)

    assert not mask[WRITE]
    with pytest.raises(InvalidActionError):
        write_private(agent, 1, 4, 8)


def test_tape_evicts_oldest_symbol_at_cap(agent):
    for symbol in (1, 2):
        write_private(agent, symbol, tape_cap=2, tape_alphabet=4)

    _, evicted = write_private(agent, 3, tape_cap=2, tape_alphabet=4)

    assert evicted
    assert agent.tape == [2, 3]


def test_private_symbol_is_stable():
    assert private_symbol("3|0.1.0", 8) == private_symbol("3|0.1.0", 8)
    assert 0 <= private_symbol("3|0.1.0", 8) < 8


def test_deliberation_ties_go_to_lowest_plan(agent):
    result = deliberate(agent, n_rollouts=5, depth=1, palette=2, remaining_compute=100, rng=make_stream(0, "policy"))

    assert result.plan == (0,)
    assert agent.plan == [0]
    assert result.tokens == 5
    assert not result.truncated


def test_deliberation_is_truncated_by_compute(agent):
    result = deliberate(agent, n_rollouts=4, depth=2, palette=2, remaining_compute=5, rng=make_stream(0, "policy"))

    assert result.truncated
    assert result.tokens == 4


def test_deliberation_without_compute_keeps_plan(agent):
    agent.plan = [2]

    result = deliberate(agent, n_rollouts=2, depth=1, palette=2, remaining_compute=0, rng=make_stream(0, "policy"))

    assert result.tokens == 0
    assert agent.plan == [2]


def test_meta_action_costs():
    assert MetaAction(kind=OBSERVE).costs(1.0, 9, 2) == StepCosts(c_obs_tokens=9)
    assert MetaAction(kind=ACT).costs(1.0, 9, 2) == StepCosts()
    assert MetaAction(kind=ACT, control=ControlAction(0), interface=InterfaceAction(kind="reduce_noise", price=0.5)).costs(
        1.0, 9, 2
    ) == StepCosts(c_energy=1.5)
    assert MetaAction(kind=DELIBERATE, n_rollouts=3).costs(1.0, 9, 2) == StepCosts(c_compute_tokens=6)
    assert MetaAction(kind=WRITE, symbol=1).costs(1.0, 9, 2) == StepCosts(c_compute_tokens=1)
    assert MetaAction.noop().costs(1.0, 9, 2) == StepCosts()


def test_schedule_repeats_pattern():
    schedule = Schedule(pattern="OOAD")

    kinds = [schedule.kind_at(t) for t in range(1, 7)]

    assert kinds == [OBSERVE, OBSERVE, ACT, DELIBERATE, OBSERVE, OBSERVE]


def test_schedule_rejects_unknown_letters():
    with pytest.raises(ValueError):
        Schedule(pattern="OXA")


def nll_gain(counts, alphabet_size, alpha=1.0):
    """Expected NLL drop at a context with the given counts, written out by hand."""
    n = sum(counts)
    denom, after = n + alpha * alphabet_size, n + 1 + alpha * alphabet_size
    gain = sum((c + alpha) / denom * math.log2(((c + 1 + alpha) / after) / ((c + alpha) / denom)) for c in counts)
    unseen = alphabet_size - len(counts)
    gain += unseen * alpha / denom * math.log2(((1 + alpha) / after) / (alpha / denom))
    return gain


@pytest.fixture
def informed_agent():
    """Binary-alphabet predictor that has twice seen x after (o, A:N)."""
    b = BottleneckConfig()
    theta = empty_params(1.0, 2, 1)
    for _ in range(2):
        theta = update(theta, ContextKey((("o", "A:N"),)), "x")
    return AgentState(
        theta=theta,
        capacity=CapacityState.from_bottleneck(b, 4),
        bottleneck=b,
        observations=["o"],
    )


def test_plan_score_takes_expectation_over_predicted_observations(informed_agent):
    # Arrange
    known, fresh = nll_gain([2], 2), nll_gain([], 2)

    # Act
    score = plan_score(informed_agent, (0, 0), palette=2, task_proxy_weight=0.0)

    # Assert
    # x follows with 3/4 and leads to a fresh context; o with 1/4 and repeats the known one
    assert score == pytest.approx(known + 0.75 * fresh + 0.25 * known, abs=1e-12)


def test_deliberation_prefers_the_least_predictable_action(informed_agent):
    # Act
    result = deliberate(
        informed_agent, n_rollouts=5, depth=1, palette=2, remaining_compute=100, rng=make_stream(0, "policy")
    )

    # Assert
    assert result.plan == (1,)
    assert result.score == pytest.approx(math.log2(4 / 3), abs=1e-12)
    assert informed_agent.plan == [1]


def test_search_plans_leaves_agent_untouched(informed_agent):
    result = search_plans(
        informed_agent, n_rollouts=5, depth=1, palette=2, remaining_compute=100, rng=make_stream(0, "policy")
    )

    assert result.plan == (1,)
    assert informed_agent.plan == []


def test_zero_weights_select_kinds_uniformly():
    # Arrange
    p = PolicyParams.zeros()
    features = np.ones(len(FEATURE_NAMES))
    mask = np.ones(4, dtype=bool)
    rng = make_stream(5, "policy")
    draws = 8000

    # Act
    counts = np.bincount([select_kind(p, features, mask, rng) for _ in range(draws)], minlength=4)

    # Assert
    np.testing.assert_allclose(kind_probabilities(p, features, mask), 0.25)
    sigma = np.sqrt(0.25 * 0.75 / draws)
    assert np.all(np.abs(counts / draws - 0.25) <= 4 * sigma)


def test_near_zero_temperature_picks_lowest_argmax_without_drawing():
    # Arrange
    weights = np.zeros((4, len(FEATURE_NAMES)))
    weights[ACT, 0] = weights[DELIBERATE, 0] = 1.0
    p = PolicyParams(weights, temperature=GREEDY_TEMPERATURE)
    features = np.ones(len(FEATURE_NAMES))
    rng = make_stream(6, "policy")

    # Act
    picked = select_kind(p, features, np.ones(4, dtype=bool), rng)
    without_act = select_kind(p, features, np.array([True, False, True, True]), rng)

    # Assert
    assert picked == ACT
    assert without_act == DELIBERATE
    assert rng.random() == make_stream(6, "policy").random()
