import itertools
from collections import Counter

import numpy as np
import pytest

from api.config.experiment import EnvConfig
from api.errors import EnumerationTooLargeError
from api.extract.extract_run_logs import summarize_rows
from api.harness.episode import observe_focus, run_episode
from api.metrics.empowerment import empowerment_k
from api.metrics.information import ChannelMatrix, blahut_arimoto, equivocation, joint_from_channel
from api.sim.channels import enumerate_action_channel, enumerate_observation_channel, pooled_rows
from api.sim.gridpatch import (
    ControlAction,
    HiddenWorldState,
    LatencyBuffer,
    initial_state,
    observe,
    step_env,
)
from api.sim.interface import BottleneckConfig
from api.sim.rng import make_stream


@pytest.fixture
def stripes_env():
    """5x5 two-colour column stripes with the avatar rendered, no objects."""
    return EnvConfig(grid_size=5, palette=2, render_avatar=True, grid_init="stripes", objects=[], avatar_start=(2, 2))


def start_of(env):
    return initial_state(env, make_stream(0, "env"))


def full_noisy_channel(pooled, noise_eps, n_symbols):
    """Reference channel over every possible observed patch."""
    flat = np.stack([z.ravel() for z in pooled])
    outputs = list(itertools.product(range(n_symbols), repeat=flat.shape[1]))
    stay, flip = 1.0 - noise_eps, noise_eps / (n_symbols - 1)
    matrix = np.array(
        [[np.prod(np.where(np.array(o) == row, stay, flip)) for o in outputs] for row in flat]
    )
    return ChannelMatrix(matrix)


def test_latency_reaching_horizon_gives_constant_channel_on_wide_grid(stripes_env):
    # Arrange
    state = start_of(stripes_env)
    b = BottleneckConfig(patch_radius=1, latency_ticks=1)

    # Act
    channel = enumerate_action_channel(state, 1, b, stripes_env)

    # Assert
    assert channel.shape[1] == 1
    assert empowerment_k(state, 1, b, stripes_env) == 0.0


@pytest.mark.parametrize("noise_eps", [0.0, 0.1])
def test_one_tick_latency_shifts_horizon_by_one(stripes_env, noise_eps):
    # Arrange
    state = start_of(stripes_env)
    lagged = BottleneckConfig(patch_radius=1, latency_ticks=1, noise_eps=noise_eps)
    prompt = BottleneckConfig(patch_radius=1, latency_ticks=0, noise_eps=noise_eps)

    # Act
    e_lagged = empowerment_k(state, 2, lagged, stripes_env)
    e_prompt = empowerment_k(state, 1, prompt, stripes_env)

    # Assert
    assert e_prompt > 0.0
    assert e_lagged == pytest.approx(e_prompt, abs=1e-8)


@pytest.mark.parametrize(
    "bottleneck, sequence",
    [
        (BottleneckConfig(patch_radius=1, slip_prob=0.3), (2,)),
        (BottleneckConfig(patch_radius=1, slip_prob=0.3, latency_ticks=1), (2, 0)),
    ],
)
def test_sampled_action_outcomes_match_enumerated_row(stripes_env, bottleneck, sequence):
    # Arrange
    start = start_of(stripes_env)
    channel = enumerate_action_channel(start, len(sequence), bottleneck, stripes_env)
    row = channel.matrix[_sequence_row(sequence, bottleneck)]
    env_rng, obs_rng = make_stream(1, "env"), make_stream(1, "obs")
    draws = 20_000

    # Act
    seen = Counter()
    for _ in range(draws):
        state, buffer = start, LatencyBuffer(bottleneck.latency_ticks)
        buffer.push(state)
        for index in sequence:
            state = step_env(state, ControlAction(index), env_rng, stripes_env, bottleneck)
            buffer.push(state)
        focus = observe_focus(state, buffer, bottleneck)
        seen[observe(state, focus, bottleneck, obs_rng, stripes_env, buffer).symbol] += 1

    # Assert
    assert set(seen) <= set(channel.outputs)
    for label, p in zip(channel.outputs, row):
        sigma = np.sqrt(p * (1 - p) / draws)
        assert abs(seen[label] / draws - p) <= 4 * sigma + 1e-12


def _sequence_row(sequence, b):
    return int(np.ravel_multi_index(sequence, (b.action_cardinality,) * len(sequence)))


def test_sampled_noisy_observations_match_enumerated_row(binary_env):
    # Arrange
    clean = HiddenWorldState(grid=np.zeros((3, 3), dtype=np.int64), objects=(), avatar_pos=(1, 1))
    marked_grid = np.zeros((3, 3), dtype=np.int64)
    marked_grid[0, 0] = marked_grid[2, 2] = 1
    marked = HiddenWorldState(grid=marked_grid, objects=(), avatar_pos=(1, 1))
    b = BottleneckConfig(patch_radius=1, noise_eps=0.1)
    channel = enumerate_observation_channel([clean, marked], b, binary_env)
    rng = make_stream(2, "obs")
    draws = 100_000

    # Act
    seen = Counter()
    for _ in range(draws):
        patch = observe(clean, (1, 1), b, rng, binary_env).patch.ravel()
        matches = [int(patch[0] == 0) + int(patch[8] == 0), int(patch[0] == 1) + int(patch[8] == 1)]
        seen["match:" + ",".join(map(str, matches))] += 1

    # Assert
    expected = {"match:2,0": 0.81, "match:1,1": 0.18, "match:0,2": 0.01}
    np.testing.assert_allclose(channel.matrix[0], [expected[o] for o in channel.outputs], atol=1e-12)
    for label, p in expected.items():
        sigma = np.sqrt(p * (1 - p) / draws)
        assert abs(seen[label] / draws - p) <= 4 * sigma


def test_compressed_noisy_channel_keeps_capacity_and_equivocation():
    # Arrange
    pooled = [np.array([[0, 1], [2, 0]]), np.array([[0, 2], [2, 1]]), np.array([[1, 1], [2, 0]])]
    full = full_noisy_channel(pooled, 0.15, 3)

    # Act
    compressed = pooled_rows(pooled, 0.15, 3, cap=10_000)

    # Assert
    assert compressed.shape[1] < full.shape[1]
    assert blahut_arimoto(compressed).capacity == pytest.approx(blahut_arimoto(full).capacity, abs=1e-8)
    prior = [0.5, 0.3, 0.2]
    assert equivocation(joint_from_channel(prior, compressed))[0] == pytest.approx(
        equivocation(joint_from_channel(prior, full))[0], abs=1e-9
    )


def test_noise_level_changes_empowerment_on_default_sized_grid():
    # Arrange
    env = EnvConfig(grid_size=8, palette=4, grid_init="random", objects=[])
    state = initial_state(env, make_stream(3, "env"))
    low = BottleneckConfig(patch_radius=1, noise_eps=0.1, slip_prob=0.05)
    high = BottleneckConfig(patch_radius=1, noise_eps=0.3, slip_prob=0.05)

    # Act
    e_low = empowerment_k(state, 1, low, env, cap=env.enumeration_cap)
    e_high = empowerment_k(state, 1, high, env, cap=env.enumeration_cap)

    # Assert
    assert 0.0 < e_high < e_low


def test_over_cap_empowerment_is_counted_as_skipped(micro_cfg, mocker):
    # Arrange
    mocker.patch(
        "api.harness.episode.empowerment_k", side_effect=EnumerationTooLargeError("Action channel over cap")
    )

    # Act
    result = run_episode(micro_cfg, seed=0)
    summary = summarize_rows(result.rows, seed=0, cfg=micro_cfg)

    # Assert
    sampled = [row for row in result.rows if (row["tick"] - 1) % micro_cfg.metrics.empowerment_every == 0]
    assert all(row["empowerment"] is None and row["empowerment_skipped"] for row in sampled)
    assert summary.empowerment_skipped == len(sampled)
    assert summary.empowerment_samples == []
