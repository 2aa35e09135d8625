"""Defaults and the flat ``key=value`` settings files read by every subcommand."""
import logging
import os

from .errors import ConfigError

logger = logging.getLogger(__name__)

SEED_ENV = "DROPESCAPE_SEED"

# ---------------------- CONFIG ----------------------
CONFIG = {
    "seed": 0,
    "threads": 1,
    # data
    "dataset": "",
    "dataset_prime": "",
    "format": "csv",
    "synthetic": "regression",
    "n": 200,
    "p": 5,
    "noise": 0.1,
    "density": 0.5,
    # dropout SGD
    "loss": "squared",
    "keep_rate": 0.5,
    "T": 2000,
    "constraint": "l2:10",
    "lr_scale": 1.0,
    "log_every": 100,
    "risk_samples": 256,
    # privacy
    "eps": 1.0,
    "delta": 0.01,
    "sigma_cap": 1.0,
    "calibration": 1.0,
    "proper": False,
    "sensitivity": "squared",
    "audit_method": "exhaustive",
    "audit_samples": 100000,
    # network escape
    "m": 8,
    "gap": 2.0,
    "link": "identity",
    "degree": 2,
    "dist": "normal",
    "draws": 10000,
    "mc_samples": 100000,
    # bench
    "train_fraction": 0.5,
    "rho": "0,0.25,0.5",
    "removal": "adversarial",
    "methods": "none,l2,dropout,deterministic",
    "repeats": 20,
    "l2_grid": "",  # empty: 7 log-spaced values from 1e-4 to 1e1
    "cv_folds": 5,
}


def _to_int(value):
    try:
        return int(value)
    except ValueError:
        f = float(value)
        if not f.is_integer():
            raise ValueError(f"{value!r} is not an integer") from None
        return int(f)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class Settings(dict):
    """CONFIG overlaid with file values; typed getters name the key on failure."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.explicit = set()

    def _convert(self, key, kind):
        value = self.get(key, CONFIG.get(key))
        if value is None:
            raise ConfigError(f"missing setting '{key}'")
        try:
            return kind(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"setting '{key}': cannot read {value!r} ({e})") from e

    def get_str(self, key):
        return self._convert(key, str).strip()

    def get_int(self, key):
        return self._convert(key, _to_int)

    def get_float(self, key):
        return self._convert(key, float)

    def get_bool(self, key):
        value = self.get(key, CONFIG.get(key))
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ConfigError(f"setting '{key}': expected a boolean, got {value!r}")

    def get_list(self, key):
        text = self.get_str(key)
        return [item.strip() for item in text.split(",") if item.strip()]

    def get_floats(self, key):
        try:
            return [float(v) for v in self.get_list(key)]
        except ValueError as e:
            raise ConfigError(f"setting '{key}': {e}") from e


def parse_settings(text, source="<string>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        values[key] = value.strip()
    return values


def load_settings(path=None):
    settings = Settings(CONFIG)
    if path is None:
        return settings
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    values = parse_settings(text, source=str(path))
    unknown = sorted(set(values) - set(CONFIG))
    if unknown:
        logger.debug("config keys without defaults: %s", ", ".join(unknown))
    settings.update(values)
    settings.explicit = set(values)
    return settings


def resolve_seed(cli_seed, settings, environ=None):
    """``--seed`` flag, then the config file, then DROPESCAPE_SEED, then the default."""
    environ = os.environ if environ is None else environ
    if cli_seed is not None:
        return int(cli_seed)
    if "seed" in settings.explicit:
        return settings.get_int("seed")
    if environ.get(SEED_ENV, "").strip():
        try:
            return int(environ[SEED_ENV])
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from e
    return settings.get_int("seed")
