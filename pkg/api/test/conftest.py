import pytest

from api.config.experiment import EnvConfig, ExperimentConfig

MICRO = {
    "name": "micro",
    "env": {
        "grid_size": 3,
        "palette": 2,
        "render_avatar": False,
        "grid_init": "zeros",
        "objects": [],
        "avatar_start": [1, 1],
        "bottleneck": {"patch_radius": 1, "noise_eps": 0.2},
        "catalogue": {"widen_patch": {"price": None, "ceiling": 1}},
    },
    "predictor": {"horizon": 2},
    "agent": {"controller": "schedule", "schedule": "OAD"},
    "metrics": {"empowerment_every": 3},
    "bootstrap": {"resamples": 500},
    "episode_length": 6,
    "seeds": [0, 1],
}


@pytest.fixture
def micro_cfg():
    """3x3 binary grid, full-grid patch, six ticks."""
    return ExperimentConfig.model_validate(MICRO)


@pytest.fixture
def avatar_env():
    """3x3 zero grid with the avatar rendered, no objects, noiseless."""
    return EnvConfig(grid_size=3, palette=2, render_avatar=True, grid_init="zeros", objects=[], avatar_start=(1, 1))


@pytest.fixture
def binary_env():
    """3x3 binary grid without the avatar marker, for calibration checks."""
    return EnvConfig(grid_size=3, palette=2, render_avatar=False, grid_init="zeros", objects=[])


@pytest.fixture
def micro_json():
    """The micro config as a request body."""
    return dict(MICRO)
