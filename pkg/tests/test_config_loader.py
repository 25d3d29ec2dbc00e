import os
import shutil

import pytest

from config_loader import ConfigLoader

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@pytest.fixture
def config_dir(tmp_path):
    shutil.copy(os.path.join(REPO_ROOT, "config_default.py"), tmp_path / "config_default.py")
    return tmp_path


def test_defaults_without_user_config(config_dir, monkeypatch):
    monkeypatch.setenv("LOBE_THREADS", "3")
    config = ConfigLoader(str(config_dir))
    assert config.TAU == 0.15
    assert config.BO_ITERATIONS == 100
    assert config.THREADS == 3


def test_user_values_win_and_missing_keys_are_appended(config_dir, monkeypatch):
    monkeypatch.delenv("LOBE_THREADS", raising=False)
    user = config_dir / "config.py"
    user.write_text("TAU = 0.3\nTHREADS = 2\n")
    config = ConfigLoader(str(config_dir))
    assert config.TAU == 0.3
    assert config.DELTA_SCALE == 0.1
    content = user.read_text()
    assert content.startswith("# New configuration items\n")
    assert "DELTA_SCALE = 0.1" in content
    assert "TAU = 0.3" in content

    # a second load finds nothing new to append
    ConfigLoader(str(config_dir))
    assert user.read_text() == content


def test_an_existing_new_items_block_is_extended(config_dir, monkeypatch):
    monkeypatch.delenv("LOBE_THREADS", raising=False)
    user = config_dir / "config.py"
    user.write_text("# New configuration items\nTAU = 0.3\n\n# mine\nTHREADS = 2\n")
    config = ConfigLoader(str(config_dir))
    assert (config.TAU, config.THREADS) == (0.3, 2)
    content = user.read_text()
    assert content.count("# New configuration items") == 1
    assert content.startswith("# New configuration items\n")
    assert content.endswith("TAU = 0.3\n\n# mine\nTHREADS = 2\n")
    assert "BO_ITERATIONS = 100" in content


@pytest.mark.parametrize("value", ["0", "-2", "many"])
def test_bad_thread_override(config_dir, monkeypatch, value):
    monkeypatch.setenv("LOBE_THREADS", value)
    with pytest.raises(ValueError, match="LOBE_THREADS"):
        ConfigLoader(str(config_dir))
