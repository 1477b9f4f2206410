import itertools

import numpy as np
import pytest

from api.agent.meta_actions import Schedule
from api.config.experiment import override, with_policy
from api.errors import BudgetMismatchError, ConfigError
from api.harness.compare import ablation_grid, bootstrap_interval, compare_policies
from api.harness.episode import run_fixed_schedule
from api.sim.rng import make_stream


def test_identical_arms_tie_exactly(micro_cfg):
    # Act
    report = compare_policies(micro_cfg, ["OAD", "OAD"])

    # Assert
    second = report.arms[1]
    assert second.arm == "OAD#"
    assert second.mean_difference == 0.0
    assert second.ci_low <= 0.0 <= second.ci_high
    assert report.seeds == [0, 1]


def test_single_seed_interval_is_the_point_difference(micro_cfg):
    cfg = override(micro_cfg, {"seeds": [4]})

    report = compare_policies(cfg, ["O", "OAD"])

    arm = report.arms[1]
    assert arm.ci_low == pytest.approx(arm.mean_difference)
    assert arm.ci_high == pytest.approx(arm.mean_difference)


def test_arms_with_different_caps_are_rejected(micro_cfg):
    tight = override(with_policy(micro_cfg, "OAD"), {"costs": {"caps": {"energy": 1}}})

    with pytest.raises(BudgetMismatchError):
        compare_policies(micro_cfg, [with_policy(micro_cfg, "OAD"), tight])


def test_arms_with_different_seeds_are_rejected(micro_cfg):
    other = override(micro_cfg, {"seeds": [5, 6]})

    with pytest.raises(BudgetMismatchError):
        compare_policies(micro_cfg, [micro_cfg, other])


def test_report_frame_has_one_row_per_arm(micro_cfg):
    report = compare_policies(micro_cfg, ["O", "A", "OAD"], baseline="OAD")

    frame = report.frame()

    assert list(frame["arm"]) == ["O", "A", "OAD"]
    assert (frame["baseline"] == "OAD").all()
    assert len(report.per_seed) == 6


def test_bootstrap_interval_is_seeded():
    differences = np.array([0.1, -0.2, 0.4, 0.3])

    first = bootstrap_interval(differences, 1000, 0.95, make_stream(0, "bootstrap"))
    second = bootstrap_interval(differences, 1000, 0.95, make_stream(0, "bootstrap"))

    assert first == second
    assert first[0] <= differences.mean() <= first[1]


def test_ablation_grid_covers_four_cells(micro_cfg):
    table = ablation_grid(micro_cfg)

    assert len(table) == 4
    assert set(table["bottleneck"]) == {"tight", "loose"}
    shares = table[["share_O", "share_A", "share_D", "share_W"]].sum(axis=1)
    np.testing.assert_allclose(shares, 1.0)


def test_unknown_baseline_is_a_config_error(micro_cfg):
    with pytest.raises(ConfigError):
        compare_policies(micro_cfg, ["O", "OAD"], baseline="OOD")


def test_observe_only_against_oad_matches_enumerated_oracle(micro_cfg):
    # Arrange
    cfg = override(micro_cfg, {"seeds": [0, 1, 2]})
    oracle = {
        pattern: np.array([run_fixed_schedule(Schedule(pattern=pattern), cfg, seed).J for seed in cfg.seeds])
        for pattern in ("O", "OAD")
    }
    differences = oracle["OAD"] - oracle["O"]
    # every equally likely bootstrap resample of three seeds
    resampled = [differences[list(pick)].mean() for pick in itertools.product(range(3), repeat=3)]

    # Act
    report = compare_policies(cfg, ["O", "OAD"])

    # Assert
    baseline, arm = report.arms
    assert baseline.mean_J == pytest.approx(oracle["O"].mean(), abs=1e-12)
    assert arm.mean_J == pytest.approx(oracle["OAD"].mean(), abs=1e-12)
    assert arm.mean_difference == pytest.approx(differences.mean(), abs=1e-12)
    assert min(resampled) - 1e-12 <= arm.ci_low <= arm.ci_high <= max(resampled) + 1e-12
