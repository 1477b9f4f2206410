"""k-step empowerment: capacity from open-loop action sequences to O_{t+k}."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np

from api.metrics.information import ChannelMatrix, blahut_arimoto
from api.sim.channels import DEFAULT_ENUMERATION_CAP, enumerate_action_channel, enumerate_action_channels
from api.sim.gridpatch import HiddenWorldState
from api.sim.interface import BottleneckConfig

if TYPE_CHECKING:
    from api.config.experiment import EnvConfig

logger = logging.getLogger(__name__)

MODES = ("privileged", "belief")


def average_channels(weighted: list[tuple[float, ChannelMatrix]]) -> ChannelMatrix:
    """Mixture of channels sharing the same inputs, columns aligned by label."""
    labels = sorted({o for _, ch in weighted for o in ch.outputs})
    column = {o: j for j, o in enumerate(labels)}
    total = sum(w for w, _ in weighted)
    matrix = np.zeros((weighted[0][1].shape[0], len(labels)))
    for weight, ch in weighted:
        for j, o in enumerate(ch.outputs):
            matrix[:, column[o]] += (weight / total) * ch.matrix[:, j]
    matrix = matrix / matrix.sum(axis=1, keepdims=True)
    return ChannelMatrix(matrix, inputs=weighted[0][1].inputs, outputs=tuple(labels))


def empowerment_k(
    state: HiddenWorldState | list[tuple[float, HiddenWorldState]],
    k: int,
    b: BottleneckConfig,
    env: "EnvConfig",
    mode: str = "privileged",
    cap: int = DEFAULT_ENUMERATION_CAP,
    tol: float = 1e-10,
) -> float:
    """E_k in bits.

    ``privileged`` conditions on the true hidden state. ``belief`` takes a
    list of ``(weight, state)`` pairs and uses the belief-averaged channel.
    Raises EnumerationTooLargeError when the exact channel is over ``cap``.
    """
    if mode not in MODES:
        raise ValueError(f"Unknown empowerment mode {mode!r}; expected one of {MODES}")
    if mode == "privileged":
        if isinstance(state, list):
            raise ValueError("privileged empowerment needs a single hidden state")
        channel = enumerate_action_channel(state, k, b, env, cap=cap)
    else:
        belief = state if isinstance(state, list) else [(1.0, state)]
        channels = enumerate_action_channels([s for _, s in belief], k, b, env, cap=cap)
        channel = average_channels([(w, ch) for (w, _), ch in zip(belief, channels)])
    return blahut_arimoto(channel, tol=tol).capacity
