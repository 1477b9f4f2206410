import json

from click.testing import CliRunner
import pytest

from cli import EXIT_CONFIG, EXIT_RUNTIME, cli


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def micro_file(micro_json, tmp_path):
    path = tmp_path / "micro.json"
    path.write_text(json.dumps(micro_json))
    return path


def test_missing_config_exits_with_config_code(runner, tmp_path):
    result = runner.invoke(cli, ["run", str(tmp_path / "absent.json")])

    assert result.exit_code == EXIT_CONFIG


def test_invalid_config_exits_with_config_code(runner, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"episode_length": -1}))

    result = runner.invoke(cli, ["run", str(path)])

    assert result.exit_code == EXIT_CONFIG


def test_run_then_verify(runner, micro_file, tmp_path):
    # Arrange
    run_dir = tmp_path / "run"

    # Act
    ran = runner.invoke(cli, ["run", str(micro_file), "--output-dir", str(run_dir)])
    verified = runner.invoke(cli, ["verify", str(run_dir)])

    # Assert
    assert ran.exit_code == 0, ran.output
    assert (run_dir / "manifest.json").exists()
    assert verified.exit_code == 0, verified.output


def test_verify_tampered_run_exits_with_runtime_code(runner, micro_file, tmp_path):
    run_dir = tmp_path / "run"
    runner.invoke(cli, ["run", str(micro_file), "--output-dir", str(run_dir)])
    (run_dir / "steps_seed0.jsonl").write_text("")

    result = runner.invoke(cli, ["verify", str(run_dir)])

    assert result.exit_code == EXIT_RUNTIME


def test_compare_writes_csv(runner, micro_file, tmp_path):
    out = tmp_path / "compare.csv"

    result = runner.invoke(cli, ["compare", str(micro_file), "--policy", "O", "--policy", "OAD", "--out", str(out)])

    assert result.exit_code == 0, result.output
    header = out.read_text().splitlines()[0]
    assert header.startswith("arm,")


def test_probe_prints_report_json(runner, micro_file, mocker):
    # Arrange
    report = mocker.Mock()
    report.model_dump.return_value = {"probe": "H2", "direction": "flat"}
    probe = mocker.patch("cli.hypothesis_probe", return_value=report)

    # Act
    result = runner.invoke(cli, ["probe", str(micro_file), "h2"])

    # Assert
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout)["probe"] == "H2"
    assert probe.call_args.args[1].upper() == "H2"
