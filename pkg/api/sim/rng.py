"""Seed streams.

Every random draw in the lab comes from numpy's Philox generator, a
counter-based 64-bit bit generator, so traces reproduce bit-exactly across
platforms. Independent streams are derived from one integer seed by the
splitting rule

    stream(seed, name, index) = Generator(Philox(SeedSequence(seed, spawn_key=(NAME_ID[name], index))))

where ``index`` is the episode (or resample batch) number.
"""

import numpy as np

STREAM_IDS = {
    "env": 0,
    "obs": 1,
    "policy": 2,
    "train": 3,
    "bootstrap": 4,
}


def make_stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Return the named, indexed Philox stream for ``seed``."""
    if name not in STREAM_IDS:
        raise KeyError(f"Unknown stream name: {name}")
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAM_IDS[name], int(index)))
    return np.random.Generator(np.random.Philox(sequence))


class EpisodeStreams:
    """The env, observation-noise and policy streams of one episode."""

    def __init__(self, seed: int, index: int = 0):
        self.seed = seed
        self.index = index
        self.env = make_stream(seed, "env", index)
        self.obs = make_stream(seed, "obs", index)
        self.policy = make_stream(seed, "policy", index)
