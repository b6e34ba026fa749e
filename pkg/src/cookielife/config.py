"""Run configuration: JSON file, environment, and flag overrides.

Precedence, lowest to highest: built-in defaults, config file, environment
variables prefixed COOKIELIFE_, explicit command-line flags.
"""

import json
from dataclasses import dataclass

from .errors import ConfigError

DEFAULT_RUN_CONFIG = {
    "threshold_days": 7,
    "restrictions": [30, 60, 90, 120, 360, 720],
    "alpha": 0.01,
    "winsor_q": 0.99,
    "bootstrap_reps": 1000,
    "seed": 0,
    "model": 2,
    "survival_min_lifetime": 8,
    "survival_families": ["weibull", "lognormal"],
    "market": {"revenue_eur": 10.6e9, "users": 434e6},
    "window": None,  # [start, end] ISO dates; None derives from the panel
    "sampling": {"date": None, "fraction": 1.0},
    "parse_strict": True,
    "validation": {"cohort_start": None, "cohort_days": 7,
                   "split_days": None,
                   "families": ["weibull", "lognormal", "generalized_gamma"]},
    "threads": 1,
    "gen": {},
}

_ENV_FIELDS = {
    "COOKIELIFE_SEED": ("seed", int),
    "COOKIELIFE_THREADS": ("threads", int),
    "COOKIELIFE_THRESHOLD": ("threshold_days", int),
    "COOKIELIFE_MODEL": ("model", int),
    "COOKIELIFE_ALPHA": ("alpha", float),
    "COOKIELIFE_WINSOR_Q": ("winsor_q", float),
    "COOKIELIFE_BOOTSTRAP_REPS": ("bootstrap_reps", int),
    "COOKIELIFE_RESTRICTIONS": (
        "restrictions", lambda s: [int(x) for x in s.split(",") if x]),
}


def _deep_merge(base, override):
    out = dict(base)
    for key, val in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class RunConfig:
    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    @classmethod
    def load(cls, config_path=None, env=None, overrides=None):
        raw = dict(DEFAULT_RUN_CONFIG)
        if config_path and config_path != "default":
            with open(config_path, "r", encoding="utf-8") as fh:
                try:
                    user = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"bad config JSON: {exc}") from exc
            unknown = set(user) - set(DEFAULT_RUN_CONFIG)
            if unknown:
                raise ConfigError(
                    f"unknown config keys: {sorted(unknown)}")
            raw = _deep_merge(raw, user)
        if env:
            for var, (key, parse) in _ENV_FIELDS.items():
                if var in env:
                    try:
                        raw[key] = parse(env[var])
                    except ValueError as exc:
                        raise ConfigError(f"bad {var}: {exc}") from exc
        if overrides:
            raw = _deep_merge(raw, {k: v for k, v in overrides.items()
                                    if v is not None})
        cfg = cls(raw=raw)
        cfg._validate()
        return cfg

    def _validate(self):
        raw = self.raw
        for key in ("threshold_days", "bootstrap_reps", "model",
                    "survival_min_lifetime", "threads"):
            if not isinstance(raw[key], int) or raw[key] <= 0:
                raise ConfigError(f"{key} must be a positive integer")
        if not 0.0 < raw["alpha"] < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        if not 0.5 <= raw["winsor_q"] < 1.0:
            raise ConfigError("winsor_q must be in [0.5, 1)")
        if not raw["restrictions"] or any(
                not isinstance(x, int) or x < 1 for x in raw["restrictions"]):
            raise ConfigError("restrictions must be positive integers")
        if raw["market"]["revenue_eur"] <= 0 or raw["market"]["users"] <= 0:
            raise ConfigError("market figures must be positive")
        if raw["model"] not in (1, 2, 5):
            # log-price models exist for the quality comparison only; the
            # simulation needs prices on the euro scale
            if raw["model"] in (3, 4):
                raise ConfigError(
                    "models 3 and 4 are log-scale; pick 1, 2, or 5 for the "
                    "pipeline")
            raise ConfigError(f"unknown model id {raw['model']}")
        if not 0.0 < raw["sampling"]["fraction"] <= 1.0:
            raise ConfigError("sampling.fraction must be in (0, 1]")

    def to_dict(self):
        return json.loads(json.dumps(self.raw))
