"""
opkit configuration
.env / 環境変数から設定を読み込む
"""
import logging
import os

from dotenv import load_dotenv

# .envファイルを読み込み
load_dotenv()

DEFAULT_SETTINGS = {
    "mode": "exact",            # exact | float
    "epsilon": 1e-12,           # float モードの等値判定（相対）
    "null_tolerance": 1e-8,     # float モードの零空間判定（相対）
    "budget_terms": 10**6,      # Groebner 基底の項数上限
    "dense_limit": 64,          # 行列として実体化する最大次元
    "rank_limit": 4096,         # ランク計算を許す最大次元
    "seed": 20240611,
    "log_level": "INFO",
}

# 環境変数名と型
_ENV_KEYS = {
    "mode": ("OPKIT_MODE", str),
    "epsilon": ("OPKIT_EPSILON", float),
    "null_tolerance": ("OPKIT_NULL_TOL", float),
    "budget_terms": ("OPKIT_BUDGET", int),
    "dense_limit": ("OPKIT_DENSE_LIMIT", int),
    "rank_limit": ("OPKIT_RANK_LIMIT", int),
    "seed": ("OPKIT_SEED", int),
    "log_level": ("OPKIT_LOG_LEVEL", str),
}


def _from_environment():
    values = {}
    for key, (env_name, cast) in _ENV_KEYS.items():
        raw = os.getenv(env_name)
        if raw is None or raw == "":
            continue
        try:
            values[key] = cast(raw)
        except ValueError:
            logging.warning(f"Ignoring {env_name}={raw!r}: expected {cast.__name__}")
    return values


def load_settings(**overrides):
    """Return a fresh settings dict: defaults, then overrides, then environment.

    OPKIT_BUDGET always wins over a budget passed on the command line.
    Unknown override keys are ignored with a warning.
    """
    settings = dict(DEFAULT_SETTINGS)
    for key, value in overrides.items():
        if value is None:
            continue
        if key in settings:
            settings[key] = value
        else:
            logging.warning(f"Unknown setting ignored: {key}")

    env = _from_environment()
    for key, value in env.items():
        if key in overrides and overrides[key] is not None and key != "budget_terms":
            continue
        settings[key] = value

    if settings["mode"] not in ("exact", "float"):
        logging.warning(f"Unknown mode {settings['mode']!r}, falling back to exact")
        settings["mode"] = "exact"
    return settings


settings = load_settings()


def update_settings(**overrides):
    """Re-apply defaults, overrides and environment onto the shared settings dict."""
    settings.clear()
    settings.update(load_settings(**overrides))
    return settings
