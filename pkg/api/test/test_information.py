import itertools

import numpy as np
import pytest

from api.errors import ConvergenceError, NotNormalizedError
from api.metrics.information import (
    ChannelMatrix,
    JointDistribution,
    binary_entropy,
    blahut_arimoto,
    directed_information,
    equivocation,
    joint_from_channel,
    mutual_information,
    plug_in_directed_information,
)


def bsc(eps):
    return ChannelMatrix(np.array([[1 - eps, eps], [eps, 1 - eps]]))


def test_blahut_arimoto_binary_symmetric_channel():
    # Arrange
    channel = bsc(0.1)

    # Act
    result = blahut_arimoto(channel, tol=1e-10)

    # Assert
    assert result.capacity == pytest.approx(1 - binary_entropy(0.1), abs=1e-6)
    assert result.capacity == pytest.approx(0.531004, abs=1e-6)
    assert result.lower <= result.upper
    np.testing.assert_allclose(result.input_distribution, [0.5, 0.5])


def test_blahut_arimoto_identity_and_useless_channels():
    assert blahut_arimoto(ChannelMatrix(np.eye(4))).capacity == pytest.approx(2.0, abs=1e-12)
    assert blahut_arimoto(bsc(0.5)).capacity == 0.0


def test_blahut_arimoto_z_channel_matches_mutual_information():
    # Arrange
    channel = ChannelMatrix(np.array([[1.0, 0.0], [0.5, 0.5]]))

    # Act
    result = blahut_arimoto(channel, tol=1e-10)

    # Assert
    # closed form for the Z-channel with crossover 1/2: log2(5/4)
    assert result.capacity == pytest.approx(np.log2(1.25), abs=1e-8)
    assert mutual_information(result.input_distribution, channel) == pytest.approx(result.capacity, abs=1e-12)


def test_blahut_arimoto_reports_bracket_on_non_convergence():
    channel = ChannelMatrix(np.array([[1.0, 0.0], [0.5, 0.5]]))

    with pytest.raises(ConvergenceError) as info:
        blahut_arimoto(channel, tol=1e-14, max_iter=1)

    assert info.value.lower <= info.value.upper


def test_channel_rows_must_sum_to_one():
    with pytest.raises(NotNormalizedError):
        ChannelMatrix(np.array([[0.6, 0.6], [0.5, 0.5]]))


def test_channel_deleting_duplicate_row_keeps_capacity():
    channel = ChannelMatrix(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))

    assert blahut_arimoto(channel.delete_rows([1])).capacity == pytest.approx(
        blahut_arimoto(channel).capacity, abs=1e-9
    )


def test_equivocation_of_binary_symmetric_channel():
    # Arrange
    joint = joint_from_channel([0.5, 0.5], bsc(0.2))

    # Act
    h_x_given_o, h_x = equivocation(joint)

    # Assert
    assert h_x == pytest.approx(1.0)
    assert h_x_given_o == pytest.approx(binary_entropy(0.2), abs=1e-12)


def test_directed_information_of_copy_policy_is_six_bits():
    # Arrange
    symbols = range(4)
    mapping = {(o, o): 1 / 64 for o in itertools.product(symbols, repeat=3)}
    joint = JointDistribution.from_mapping(mapping)

    # Act
    estimate = directed_information(joint)

    # Assert
    assert estimate.bits == pytest.approx(6.0, abs=1e-9)
    assert estimate.mode == "exact"
    assert len(estimate.terms) == 3


def test_directed_information_of_observation_blind_policy_is_zero():
    # Arrange
    sequences = list(itertools.product("ab", repeat=2))
    mapping = {(o, a): 1 / 16 for o in sequences for a in sequences}
    joint = JointDistribution.from_mapping(mapping)

    # Act
    estimate = directed_information(joint)

    # Assert
    assert estimate.bits == 0.0


def test_plug_in_directed_information_window_longer_than_trace():
    estimate = plug_in_directed_information(["a", "b"], ["O", "A"], window=3)

    assert estimate.bits == 0.0
    assert estimate.mode == "plug_in"


def test_joint_must_be_normalized():
    with pytest.raises(NotNormalizedError):
        JointDistribution(((("a",), ("b",)),), np.array([0.5]))


def simplex_points(n_inputs, steps):
    """All input distributions with probabilities in multiples of 1/steps."""
    for bars in itertools.combinations(range(steps + n_inputs - 1), n_inputs - 1):
        edges = (-1,) + bars + (steps + n_inputs - 1,)
        yield [edges[i + 1] - edges[i] - 1 for i in range(n_inputs)]


def random_channel(seed, n_inputs, n_outputs):
    rng = np.random.default_rng(seed)
    return ChannelMatrix(rng.dirichlet(np.ones(n_outputs), size=n_inputs))


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("n_inputs, n_outputs, steps", [(2, 2, 2000), (2, 4, 2000), (3, 3, 150), (3, 4, 150)])
def test_blahut_arimoto_matches_simplex_search_on_random_channels(seed, n_inputs, n_outputs, steps):
    # Arrange
    channel = random_channel(seed, n_inputs, n_outputs)
    grid = np.array(list(simplex_points(n_inputs, steps)), dtype=float) / steps

    # Act
    capacity = blahut_arimoto(channel, tol=1e-10).capacity
    searched = max(mutual_information(p, channel) for p in grid)

    # Assert
    assert searched <= capacity + 1e-9
    assert capacity - searched < 1e-3


@pytest.mark.parametrize("seed", range(8))
def test_removing_inputs_never_raises_capacity(seed):
    # Arrange
    channel = random_channel(100 + seed, 4, 3)
    full = blahut_arimoto(channel, tol=1e-10).capacity

    # Act
    restricted = [blahut_arimoto(channel.delete_rows([i]), tol=1e-10).capacity for i in range(4)]
    nested = blahut_arimoto(channel.delete_rows([0, 1]), tol=1e-10).capacity

    # Assert
    assert all(c <= full + 1e-9 for c in restricted)
    assert nested <= restricted[0] + 1e-9


def test_channel_json_matches_golden_text():
    # Arrange
    channel = ChannelMatrix(np.array([[1.0, 0.0], [0.25, 0.75]]), inputs=("a", "b"), outputs=("x", "y"))
    golden = '{"inputs": ["a", "b"], "matrix": [[1.0, 0.0], [0.25, 0.75]], "outputs": ["x", "y"]}'

    # Act
    text = channel.to_json()

    # Assert
    assert text == golden
    assert ChannelMatrix.from_json(golden).to_json() == golden


def test_joint_json_matches_golden_text():
    # Arrange
    joint = JointDistribution((("a", ("x", 1)), ("b", ("y", 2))), np.array([0.5, 0.5]))
    golden = '{"p": [0.5, 0.5], "support": [["a", "x", "1"], ["b", "y", "2"]]}'

    # Act
    text = joint.to_json()
    decoded = JointDistribution.from_json(golden)

    # Assert
    assert text == golden
    assert decoded.support == (("a", "x", "1"), ("b", "y", "2"))
    assert decoded.to_json() == golden
