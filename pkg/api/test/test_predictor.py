import math

import numpy as np
import pytest

from api.errors import MissingSnapshotError, SegmentTooShortError
from api.model.predictor import (
    ContextKey,
    PredictorParams,
    Segment,
    SnapshotRing,
    default_alphabet_size,
    empty_params,
    expected_nll_reduction,
    l_pred,
    learning_progress,
    predictive_distribution,
    stored_entries,
    update,
    update_magnitude,
)


def test_single_update_learning_progress_matches_hand_computation():
    # Arrange
    theta0 = empty_params(alpha=1.0, alphabet_size=2, context_length=0)
    theta1 = update(theta0, ContextKey(), "a")
    ring = SnapshotRing(3)
    ring.push(0, theta0)
    ring.push(1, theta1)
    segment = Segment(observations=("x", "a"), actions=("A:stay",))

    # Act
    r = learning_progress(ring, segment, t=2, H=1)

    # Assert
    assert r == pytest.approx(1 - math.log2(1.5), abs=1e-9)
    assert r == pytest.approx(0.41504, abs=1e-5)


def test_frozen_predictor_gives_zero_reward():
    theta = update(empty_params(1.0, 4, 1), ContextKey((("a", "O"),)), "b")
    ring = SnapshotRing(4)
    for tick in range(4):
        ring.push(tick, update(theta, ContextKey(), "a", n_steps=0))
    segment = Segment(observations=("a", "b", "a"), actions=("O", "O"))

    assert learning_progress(ring, segment, t=3, H=2) == 0.0


def test_no_reward_before_horizon():
    ring = SnapshotRing(2)

    assert learning_progress(ring, Segment(observations=("a",), actions=()), t=2, H=2) == 0.0


def test_ring_matches_full_history_replay():
    # Arrange
    H = 2
    observations = ["-", "a", "b", "a", "a", "c", "a", "b"]
    actions = ["O", "A:N", "O", "D", "O", "A:S", "O"]
    history = [empty_params(1.0, 5, 1), empty_params(1.0, 5, 1)]
    ring = SnapshotRing(H + 2)
    ring.push(0, history[0])
    ring.push(1, history[1])
    rewards, replayed = [], []

    # Act
    for t in range(2, len(observations)):
        ctx = ContextKey.from_history(observations[: t - 1], actions[: t - 1], 1)
        history.append(update(history[-1], ctx, observations[t - 1]))
        ring.push(t, history[-1])
        if t > H:
            seg = Segment(observations=tuple(observations[t - H - 1 : t]), actions=tuple(actions[t - H - 1 : t - 1]))
            rewards.append(learning_progress(ring, seg, t, H))
            replayed.append(l_pred(history[t - H - 1], seg, H) - l_pred(history[t - H], seg, H))

    # Assert
    assert rewards == replayed
    assert len(ring) == H + 2


def test_missing_snapshot_raises():
    ring = SnapshotRing(2)
    ring.push(5, empty_params(1.0, 2, 0))

    with pytest.raises(MissingSnapshotError):
        ring.get(4)


def test_segment_shorter_than_horizon_raises():
    theta = empty_params(1.0, 2, 0)

    with pytest.raises(SegmentTooShortError):
        l_pred(theta, Segment(observations=("a", "b"), actions=("O",)), H=2)


def test_update_with_no_budget_returns_same_parameters():
    theta = empty_params(1.0, 2, 0)

    assert update(theta, ContextKey(), "a", n_steps=0) is theta


def test_predictive_distribution_sums_to_one_over_alphabet():
    theta = update(empty_params(0.5, 3, 0), ContextKey(), "a")

    probs = predictive_distribution(theta, ContextKey(), ["a", "b", "c"])

    assert probs.sum() == pytest.approx(1.0)
    assert probs[0] > probs[1] == probs[2]


def test_update_magnitude_counts_unseen_symbols():
    theta0 = empty_params(1.0, 2, 0)
    theta1 = update(theta0, ContextKey(), "a")

    assert update_magnitude(theta1, theta0) == pytest.approx(1 / 3)
    assert update_magnitude(theta0, theta0) == 0.0


def test_expected_nll_reduction_shrinks_with_evidence():
    ctx = ContextKey()
    theta = empty_params(1.0, 4, 0)
    trained = theta
    for _ in range(20):
        trained = update(trained, ctx, "a")

    assert expected_nll_reduction(theta, ctx) > expected_nll_reduction(trained, ctx) >= 0.0


def test_snapshot_json_keeps_counts():
    theta = update(empty_params(1.0, 3, 1), ContextKey((("a", "O"),)), "b")

    restored = PredictorParams.from_json(theta.to_json())

    assert restored == theta
    assert stored_entries(restored) == 1


def test_context_key_keeps_last_pairs():
    ctx = ContextKey.from_history(["a", "b", "c"], ["O", "A:N"], m=1)

    assert ctx.pairs == (("b", "A:N"),)


def test_default_alphabet_size_of_micro_env(micro_cfg):
    assert default_alphabet_size(micro_cfg.env) == 2 ** 9 + 2


def test_predictive_probabilities_are_positive():
    theta = empty_params(1.0, 10, 2)

    assert np.all(predictive_distribution(theta, ContextKey(), ["x", "y"]) > 0)


def sequence_probability(theta, symbols):
    """Probability of ``symbols`` under sequential updating with the empty context."""
    total = 1.0
    for o in symbols:
        total *= predictive_distribution(theta, ContextKey(), [o])[0]
        theta = update(theta, ContextKey(), o)
    return total


@pytest.mark.parametrize(
    "symbols, permuted",
    [
        (("a", "a", "b"), ("b", "a", "a")),
        (("a", "b", "c", "a"), ("c", "a", "a", "b")),
        (("x", "y", "x", "y", "z"), ("z", "y", "y", "x", "x")),
    ],
)
@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_memoryless_predictor_is_exchangeable(symbols, permuted, alpha):
    theta = empty_params(alpha, 4, 0)

    assert sequence_probability(theta, symbols) == pytest.approx(sequence_probability(theta, permuted), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("probs", [[0.7, 0.2, 0.1], [0.25, 0.25, 0.25, 0.25]])
def test_learning_progress_is_positive_on_average_for_stationary_source(seed, probs):
    # Arrange
    H = 2
    alphabet = [f"s{i}" for i in range(len(probs))]
    rng = np.random.default_rng(seed)
    observations = ["-"] + [str(o) for o in rng.choice(alphabet, size=300, p=probs)]
    actions = ["O"] * (len(observations) - 1)
    history = [empty_params(1.0, len(probs) + 1, 0)] * 2
    rewards = []

    # Act
    for t in range(2, len(observations)):
        history.append(update(history[-1], ContextKey(), observations[t - 1]))
        if t > H:
            seg = Segment(observations=tuple(observations[t - H - 1 : t]), actions=tuple(actions[t - H - 1 : t - 1]))
            rewards.append(l_pred(history[t - H - 1], seg, H) - l_pred(history[t - H], seg, H))

    # Assert
    assert np.mean(rewards) > 0.0


@pytest.mark.parametrize("m", [0, 1])
def test_l_pred_adds_over_concatenated_segments(m):
    # Arrange
    theta = empty_params(1.0, 4, m)
    for ctx, o in [((("a", "O"),), "b"), ((("b", "O"),), "a"), ((), "a"), ((("a", "A:N"),), "c")]:
        theta = update(theta, ContextKey(ctx[-m:] if m else ()), o)
    first = Segment(observations=("a", "b", "a"), actions=("O", "O"))
    second = Segment(observations=("a", "c", "c", "b"), actions=("A:N", "O", "D"))
    joined = Segment(observations=first.observations + second.observations[1:], actions=first.actions + second.actions)

    # Act
    total = l_pred(theta, joined, joined.steps)

    # Assert
    assert total == pytest.approx(l_pred(theta, first, first.steps) + l_pred(theta, second, second.steps), abs=1e-12)


def test_l_pred_worked_values():
    # Arrange
    blank_slate = empty_params(1.0, 8, 0)
    seen_once = update(empty_params(1.0, 2, 0), ContextKey(), "a")
    segment = Segment(observations=("x", "a"), actions=("O",))

    # Act
    uniform = l_pred(blank_slate, segment, H=1)
    informed = l_pred(seen_once, segment, H=1)

    # Assert
    assert uniform == pytest.approx(3.0, abs=1e-12)
    assert informed == pytest.approx(0.58496, abs=1e-5)
