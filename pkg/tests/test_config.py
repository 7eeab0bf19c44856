"""Experiment configuration and the key=value file format."""

import pytest

from config.errors import ConfigError, DSLNetError
from config.settings import Settings
from config.train_config import (
    ABLATION_MODES,
    MODE_LABELS,
    TrainConfig,
    config_to_text,
    load_config,
    parse_config_text,
)


def test_defaults_are_valid():
    config = load_config()
    assert config.mode == "dual_geo_ot"
    assert config.fusion.num_classes == config.dataset.num_synthetic_classes == 10
    assert config.tssn.num_blocks == len(config.tssn.channels)


def test_ablation_modes_have_labels():
    assert len(ABLATION_MODES) == 6
    assert set(MODE_LABELS) == set(ABLATION_MODES)


def test_parse_nested_keys_and_lists():
    tree = parse_config_text(
        "# smaller network\n"
        "epochs=3\n"
        "tssn.channels=8,16\n"
        "tssn.num_blocks=2\n"
        "fusion.alpha_loss=0.25  # trailing comment\n"
    )
    config = TrainConfig.model_validate(tree)
    assert config.epochs == 3
    assert config.tssn.channels == [8, 16]
    assert config.fusion.alpha_loss == 0.25


def test_load_config_from_file_with_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("epochs=2\nseed=5\nmode=tssn_only\n")
    config = load_config(path, seed=9)
    assert config.epochs == 2
    assert config.seed == 9
    assert config.mode == "tssn_only"


@pytest.mark.parametrize(
    "text",
    [
        "no_such_key=1\n",
        "tssn.nope=3\n",
        "epochs 3\n",
        "mode=fancy\n",
        "fusion.num_classes=3\n",
        "tssn.channels=8,16\n",
    ],
)
def test_bad_config_raises_config_error(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_config_error_is_project_error():
    assert issubclass(ConfigError, DSLNetError)
    assert issubclass(ConfigError, ValueError)


def test_config_text_reloads_to_same_config(tmp_path):
    config = load_config(epochs=4, seed=2)
    path = tmp_path / "dump.cfg"
    path.write_text(config_to_text(config))
    assert load_config(path) == config


def test_with_overrides_validates():
    config = load_config()
    assert config.with_overrides(mode="ftde_only").mode == "ftde_only"
    with pytest.raises(ValueError):
        config.with_overrides(batch_size=0)


def test_settings_read_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("DSLNET_OUTPUT_DIR", str(tmp_path))
    monkeypatch.setenv("DSLNET_PROGRESS_BAR", "false")
    settings = Settings()
    assert settings.output_dir == tmp_path
    assert settings.progress_bar is False
