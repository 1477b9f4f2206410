"""Exact observation and action channels of GridPatch, for the metrics.

Both channels are computed analytically from the pooling rule and the
per-cell noise model, never by sampling.

With noise, an observed patch o enters the likelihood of a clean pooled
patch z only through the number of cells where o matches z. The noisy
channel is therefore enumerated over match-count vectors (one count per
clean patch in the candidate set) with their multiplicities, instead of
over every possible patch. Cells on which all candidates agree carry no
information and are marginalised out. Mutual information and
equivocation are unchanged by this reduction.
"""

from __future__ import annotations

import itertools
import logging
from typing import TYPE_CHECKING

import numpy as np

from api.errors import EnumerationTooLargeError
from api.metrics.information import ChannelMatrix
from api.sim.gridpatch import (
    HiddenWorldState,
    action_name,
    observation_symbols,
    patch_origin,
    patch_symbol,
    pool_patch,
    render,
    transition,
    STAY,
)
from api.sim.interface import BottleneckConfig

if TYPE_CHECKING:
    from api.config.experiment import EnvConfig

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 1_000_000


def _too_large(what: str, size: int, cap: int) -> EnumerationTooLargeError:
    logger.warning(f"{what} enumeration needs {size} entries, cap is {cap}")
    return EnumerationTooLargeError(
        f"{what} enumeration needs {size} entries (cap {cap}); sampling mode is not available, "
        "reduce the patch, palette, horizon or noise"
    )


def _match_counts(flat: np.ndarray, n_symbols: int, cap: int) -> tuple[list[tuple[int, ...]], np.ndarray, int]:
    """Match-count vectors over the informative cells, their multiplicities and the cell count.

    A vector holds, per clean patch, how many informative cells of the
    observed patch equal that patch's cell. The multiplicity is the number
    of observed patches sharing the vector.
    """
    n_patches = flat.shape[0]
    informative = [c for c in range(flat.shape[1]) if np.unique(flat[:, c]).size > 1]
    counts: dict[tuple[int, ...], int] = {(0,) * n_patches: 1}
    for c in informative:
        column = flat[:, c]
        values = np.unique(column)
        hits = [tuple(int(x == v) for x in column) for v in values]
        others = n_symbols - values.size
        grown: dict[tuple[int, ...], int] = {}
        for vector, mult in counts.items():
            for hit in hits:
                key = tuple(a + h for a, h in zip(vector, hit))
                grown[key] = grown.get(key, 0) + mult
            if others:
                grown[vector] = grown.get(vector, 0) + mult * others
        if len(grown) * n_patches > cap:
            raise _too_large("Observation channel", len(grown) * n_patches, cap)
        counts = grown
    vectors = sorted(counts)
    multiplicity = np.array([counts[v] for v in vectors], dtype=float)
    return vectors, multiplicity, len(informative)


def pooled_rows(pooled: list[np.ndarray], noise_eps: float, n_symbols: int, cap: int) -> ChannelMatrix:
    """Channel from noiseless pooled patches to (sufficient statistics of) noisy observed patches.

    Without noise the columns are the distinct patches themselves. With
    noise they are match-count vectors, labelled ``match:n_1,...,n_P`` in
    the order of ``pooled``; channels built from the same ``pooled`` list
    share their columns.
    """
    side = pooled[0].shape[0]
    flat = np.stack([z.ravel() for z in pooled]).astype(np.int64)
    noisy = noise_eps > 0 and n_symbols > 1

    if not noisy:
        symbols = sorted({tuple(int(v) for v in row) for row in flat})
        index = {s: j for j, s in enumerate(symbols)}
        matrix = np.zeros((len(pooled), len(symbols)))
        for i, row in enumerate(flat):
            matrix[i, index[tuple(int(v) for v in row)]] = 1.0
        outputs = tuple(patch_symbol(np.asarray(s).reshape(side, side)) for s in symbols)
        return ChannelMatrix(matrix, outputs=outputs)

    vectors, multiplicity, cells = _match_counts(flat, n_symbols, cap)
    hits = np.array(vectors, dtype=float).T
    stay_p = 1.0 - noise_eps
    flip_p = noise_eps / (n_symbols - 1)
    matrix = multiplicity[None, :] * stay_p ** hits * flip_p ** (cells - hits)

    keep = matrix.max(axis=0) > 0
    labels = tuple("match:" + ",".join(str(n) for n in v) for v, k in zip(vectors, keep) if k)
    return ChannelMatrix(matrix[:, keep], outputs=labels)


def enumerate_observation_channel(
    states: list[HiddenWorldState],
    b: BottleneckConfig,
    env: "EnvConfig",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> ChannelMatrix:
    """Exact p(O | X) for each state, focus on the state's avatar.

    Latency only selects which state is seen, so it does not enter the channel.
    """
    n_symbols = observation_symbols(env)
    pooled = [
        pool_patch(render(s, env), patch_origin(s.avatar_pos, b, s.size), b, n_symbols) for s in states
    ]
    channel = pooled_rows(pooled, b.noise_eps, n_symbols, cap)
    return ChannelMatrix(channel.matrix, inputs=tuple(range(len(states))), outputs=channel.outputs)


def _rollouts(state: HiddenWorldState, sequence: tuple[int, ...], slip_prob: float, env: "EnvConfig", source_depth: int):
    """(probability, observed source state) over all slip branches.

    The source is the state after ``source_depth`` of the actions.
    """
    branches = [(1.0, state, state if source_depth == 0 else None)]
    for depth, index in enumerate(sequence, start=1):
        grown = []
        for prob, current, source in branches:
            outcomes = [(1.0 - slip_prob, index), (slip_prob, STAY)] if index != STAY else [(1.0, STAY)]
            for p, realised in outcomes:
                if p == 0.0:
                    continue
                nxt = transition(current, realised, env)
                grown.append((prob * p, nxt, nxt if depth == source_depth else source))
        branches = grown
    return [(prob, source) for prob, _, source in branches]


def _action_mixtures(state, sequences, b, env, n_symbols, pooled_index, pooled_list):
    """Per action sequence, the distribution over clean pooled patches (indices into ``pooled_list``)."""
    source_depth = max(len(sequences[0]) - b.latency_ticks, 0)
    mixtures = []
    for sequence in sequences:
        mixture: dict = {}
        for prob, source in _rollouts(state, sequence, b.slip_prob, env, source_depth):
            origin = patch_origin(source.avatar_pos, b, state.size)
            z = pool_patch(render(source, env), origin, b, n_symbols)
            key = z.tobytes()
            if key not in pooled_index:
                pooled_index[key] = len(pooled_list)
                pooled_list.append(z)
            mixture[pooled_index[key]] = mixture.get(pooled_index[key], 0.0) + prob
        mixtures.append(mixture)
    return mixtures


def enumerate_action_channels(
    states: list[HiddenWorldState],
    k: int,
    b: BottleneckConfig,
    env: "EnvConfig",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> list[ChannelMatrix]:
    """Exact p(O_{t+k} | a_{t:t+k-1}) from each of ``states``, on one shared set of columns.

    Slip branches are enumerated exhaustively. The observed state is the one
    ``latency_ticks`` before t+k (the current state when latency >= k) and
    the patch is centred on that state's avatar, so with latency >= k the
    channel is constant.
    """
    if k < 1:
        raise ValueError("Empowerment horizon k must be at least 1")
    n_actions = b.action_cardinality
    n_rows = n_actions ** k
    if n_rows > cap:
        raise _too_large("Action channel", n_rows, cap)

    n_symbols = observation_symbols(env)
    sequences = list(itertools.product(range(n_actions), repeat=k))
    pooled_index: dict = {}
    pooled_list: list[np.ndarray] = []
    per_state = [_action_mixtures(s, sequences, b, env, n_symbols, pooled_index, pooled_list) for s in states]

    base = pooled_rows(pooled_list, b.noise_eps, n_symbols, cap)
    if n_rows * base.shape[1] > cap:
        raise _too_large("Action channel", n_rows * base.shape[1], cap)

    labels = tuple(",".join(action_name(a, env.palette) for a in seq) for seq in sequences)
    channels = []
    for mixtures in per_state:
        matrix = np.zeros((n_rows, base.shape[1]))
        for i, mixture in enumerate(mixtures):
            for j, prob in mixture.items():
                matrix[i] += prob * base.matrix[j]
        channels.append(ChannelMatrix(matrix, inputs=labels, outputs=base.outputs))
    return channels


def enumerate_action_channel(
    state: HiddenWorldState,
    k: int,
    b: BottleneckConfig,
    env: "EnvConfig",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> ChannelMatrix:
    """Exact p(O_{t+k} | a_{t:t+k-1}) from ``state``."""
    return enumerate_action_channels([state], k, b, env, cap)[0]
