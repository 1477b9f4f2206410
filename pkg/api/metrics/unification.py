"""Task-relative unification score and the inefficiencies R_O, R_A, R_L.

R_O is calibrated on a prior where grid cells are iid uniform over the
palette: unobserved cells keep their full entropy, and each pooled block
keeps ``k^2 log2(palette) - I(Z; O)`` bits, Z being the block's majority
symbol and O its noisy observation. R_A is the equivocation of the intended
action given the realised one under the capacity-achieving intent
distribution. R_L is the equivocation of the private tape's noise channel.
"""

from __future__ import annotations

from functools import lru_cache
import itertools
import logging
import math
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from api.errors import EnumerationTooLargeError, InefficiencyBoundError
from api.metrics.information import (
    ChannelMatrix,
    blahut_arimoto,
    equivocation,
    joint_from_channel,
)
from api.sim.channels import DEFAULT_ENUMERATION_CAP, pooled_rows
from api.sim.gridpatch import STAY, full_action_count
from api.sim.interface import BottleneckConfig

if TYPE_CHECKING:
    from api.config.experiment import EnvConfig

logger = logging.getLogger(__name__)

BOUND_TOL = 1e-9


class UnificationWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    w_O: float = Field(0.5, ge=0.0)
    w_A: float = Field(0.3, ge=0.0)
    w_L: float = Field(0.2, ge=0.0)

    @model_validator(mode="after")
    def _sum_to_one(self):
        if abs(self.w_O + self.w_A + self.w_L - 1.0) > 1e-9:
            raise ValueError("unification weights must sum to 1")
        return self


def _term(r: float, r_max: float, name: str) -> float:
    if r < -BOUND_TOL or r > r_max + BOUND_TOL:
        logger.error(f"{name}={r} outside [0, {r_max}]")
        raise InefficiencyBoundError(f"{name}={r} is outside [0, {name}_max={r_max}]")
    if r_max == 0:
        return 1.0
    return 1.0 - min(max(r, 0.0), r_max) / r_max


def unification_score(
    R_O: float,
    R_A: float,
    R_L: float,
    maxes: tuple[float, float, float],
    w: UnificationWeights,
) -> float:
    """w_O(1 - R_O/R_O^max) + w_A(1 - R_A/R_A^max) + w_L(1 - R_L/R_L^max).

    A term whose maximum is 0 counts as 1.
    """
    return (
        w.w_O * _term(R_O, maxes[0], "R_O")
        + w.w_A * _term(R_A, maxes[1], "R_A")
        + w.w_L * _term(R_L, maxes[2], "R_L")
    )


@lru_cache(maxsize=256)
def _block_equivocation(coarsen_k: int, noise_eps: float, palette: int, n_symbols: int, cap: int) -> float:
    """Bits of a k x k block left unresolved by its noisy pooled observation."""
    cells = coarsen_k * coarsen_k
    configs = palette ** cells
    if configs > cap:
        raise EnumerationTooLargeError(f"{configs} block configurations exceed the enumeration cap {cap}")
    blocks = np.array(list(itertools.product(range(palette), repeat=cells)), dtype=np.int64)
    counts = (blocks[:, :, None] == np.arange(n_symbols)[None, None, :]).sum(axis=1)
    majority = counts.argmax(axis=1)
    z_values, z_counts = np.unique(majority, return_counts=True)
    prior = z_counts / configs

    channel = pooled_rows([np.array([[z]]) for z in z_values], noise_eps, n_symbols, cap)
    joint = joint_from_channel(prior, ChannelMatrix(channel.matrix, inputs=tuple(int(z) for z in z_values), outputs=channel.outputs))
    h_z_given_o, h_z = equivocation(joint)
    return cells * math.log2(palette) - h_z + h_z_given_o


def observation_inefficiency(
    b: BottleneckConfig, env: "EnvConfig", cap: int = DEFAULT_ENUMERATION_CAP
) -> tuple[float, float]:
    """(R_O, R_O^max) = (H(X|O), H(X)) under the calibration prior."""
    n_symbols = env.palette + (1 if env.render_avatar else 0)
    per_cell = math.log2(env.palette) if env.palette > 1 else 0.0
    observed_cells = b.patch_side ** 2
    unobserved = (env.grid_size ** 2 - observed_cells) * per_cell
    block = _block_equivocation(b.coarsen_k, b.noise_eps, env.palette, n_symbols, cap) if per_cell else 0.0
    r_o = unobserved + b.token_count * block
    r_max = env.grid_size ** 2 * per_cell
    return min(max(r_o, 0.0), r_max), r_max


def action_channel_matrix(b: BottleneckConfig, palette: int) -> ChannelMatrix:
    """Intended canonical action -> realised action under cardinality and slip."""
    n = full_action_count(palette)
    matrix = np.zeros((n, n))
    for intended in range(n):
        if intended >= b.action_cardinality or intended == STAY:
            matrix[intended, STAY] = 1.0
        else:
            matrix[intended, intended] += 1.0 - b.slip_prob
            matrix[intended, STAY] += b.slip_prob
    keep = matrix.max(axis=0) > 0
    return ChannelMatrix(matrix[:, keep], outputs=tuple(np.flatnonzero(keep).tolist()))


def action_inefficiency(b: BottleneckConfig, palette: int) -> tuple[float, float]:
    """(R_A, R_A^max) = (H(intended | realised), H(intended)) at the capacity-achieving intent."""
    channel = action_channel_matrix(b, palette)
    intent = blahut_arimoto(channel, tol=1e-12, max_iter=200_000).input_distribution
    r_a, r_max = equivocation(joint_from_channel(intent, channel))
    return r_a, r_max


def communication_inefficiency(memory: str, tape_alphabet: int, tape_noise: float) -> tuple[float, float]:
    """(R_L, R_L^max) of the private tape; the latent variant has no channel."""
    if memory != "tape" or tape_alphabet < 2:
        return 0.0, 0.0
    flip = tape_noise / (tape_alphabet - 1)
    matrix = np.full((tape_alphabet, tape_alphabet), flip)
    np.fill_diagonal(matrix, 1.0 - tape_noise)
    prior = np.full(tape_alphabet, 1.0 / tape_alphabet)
    r_l, r_max = equivocation(joint_from_channel(prior, ChannelMatrix(matrix)))
    return r_l, r_max


def interface_unification(
    b: BottleneckConfig,
    env: "EnvConfig",
    memory: str,
    tape_alphabet: int,
    tape_noise: float,
    w: UnificationWeights,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Unification score of the current interface configuration."""
    r_o, r_o_max = observation_inefficiency(b, env, cap)
    r_a, r_a_max = action_inefficiency(b, env.palette)
    r_l, r_l_max = communication_inefficiency(memory, tape_alphabet, tape_noise)
    return unification_score(r_o, r_a, r_l, (r_o_max, r_a_max, r_l_max), w)


def observation_term(b: BottleneckConfig, env: "EnvConfig") -> float:
    """1 - R_O/R_O^max alone."""
    r_o, r_max = observation_inefficiency(b, env)
    return 1.0 if r_max == 0 else 1.0 - r_o / r_max

