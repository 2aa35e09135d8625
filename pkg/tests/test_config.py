import pytest

from dropescape.config import CONFIG, SEED_ENV, Settings, load_settings, parse_settings, resolve_seed
from dropescape.errors import ConfigError


def test_parse_settings_skips_comments_and_blanks():
    text = "# header\n\nn = 40\nloss=logistic  # trailing\nrho = 0, 0.5\n"
    assert parse_settings(text) == {"n": "40", "loss": "logistic", "rho": "0, 0.5"}


def test_parse_settings_names_the_bad_line():
    with pytest.raises(ConfigError, match="cfg:2"):
        parse_settings("n=4\njust words\n", source="cfg")
    with pytest.raises(ConfigError):
        parse_settings("=4\n")


def test_load_settings_overlays_defaults(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("n=40\nproper=yes\n", encoding="utf-8")
    settings = load_settings(str(path))
    assert settings.get_int("n") == 40
    assert settings.get_bool("proper") is True
    assert settings.get_float("eps") == CONFIG["eps"]
    assert settings.explicit == {"n", "proper"}
    assert load_settings().get_int("n") == CONFIG["n"]
    with pytest.raises(ConfigError):
        load_settings(str(tmp_path / "missing.cfg"))


def test_typed_getters():
    settings = Settings(CONFIG)
    settings.update({"T": "1e3", "rho": "0, 0.25,", "n": "2.5", "proper": "maybe", "eps": "abc"})
    assert settings.get_int("T") == 1000
    assert settings.get_floats("rho") == [0.0, 0.25]
    assert settings.get_list("methods") == ["none", "l2", "dropout", "deterministic"]
    with pytest.raises(ConfigError, match="'n'"):
        settings.get_int("n")
    with pytest.raises(ConfigError, match="'proper'"):
        settings.get_bool("proper")
    with pytest.raises(ConfigError, match="'eps'"):
        settings.get_float("eps")
    with pytest.raises(ConfigError, match="missing"):
        settings.get_str("no_such_key")


def test_seed_resolution_order():
    settings = Settings(CONFIG)
    env = {SEED_ENV: "11"}
    assert resolve_seed(None, settings, environ={}) == CONFIG["seed"]
    assert resolve_seed(None, settings, environ=env) == 11
    settings.update({"seed": "7"})
    settings.explicit = {"seed"}
    assert resolve_seed(None, settings, environ=env) == 7
    assert resolve_seed(3, settings, environ=env) == 3
    with pytest.raises(ConfigError):
        resolve_seed(None, Settings(CONFIG), environ={SEED_ENV: "x"})
