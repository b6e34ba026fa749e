"""Seeded synthetic impression-log generator with a ground-truth manifest.

Every cookie draws its birth date, lifetime, activity probability, and
price line from its own RNG stream keyed by (master seed, cookie index),
so output is byte-identical for identical (config, seed) regardless of
generation order. Cookies born before the window keep only their in-window
events, which is what produces left-censoring downstream.
"""

import json
import math
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np
import pandas as pd
from scipy import stats

from .errors import ConfigError

DEFAULT_GEN_CONFIG = {
    "n_cookies": 1000,
    "window": ["2014-03-03", "2016-07-16"],
    "birth_offset_days": 0,           # births start this many days in
    "birth_span_days": None,          # None = births anywhere in the window
    "pre_window_birth_share": 0.0,
    "pre_window_span_days": 180,
    "lifetime": {"family": "weibull", "shape": 0.979, "scale": 463.321},
    "activity_prob": {"alpha": 5.0, "beta": 2.0},
    "impressions": {"base_rate": 3.0, "per_day_trend": 0.0},
    "price": {
        "intercept_range": [0.3, 1.2],
        "mix_zero": 0.795, "mix_pos": 0.128, "mix_neg": 0.077,
        "slope_magnitude_range": [0.0005, 0.0025],
        "noise_sd": 0.05,
    },
    "covariates": {
        "video_p": 0.2, "fold_above_p": 0.45, "fold_below_p": 0.45,
        "retarget_p": 0.15,
    },
    "user_attrs": {
        "country": {"National": 0.5, "International": 0.3, "Unknown": 0.2},
        "device_type": {"desktop": 0.5, "mobile": 0.3, "Unknown": 0.2},
        "os": {"Windows": 0.4, "Android": 0.2, "iOS": 0.2, "Unknown": 0.2},
        "browser": {"Chrome": 0.4, "Firefox": 0.2, "Safari": 0.2,
                    "Unknown": 0.2},
    },
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
class GenConfig:
    """Validated generator configuration; see DEFAULT_GEN_CONFIG for the
    JSON shape and the default values."""

    raw: dict

    @classmethod
    def from_dict(cls, override=None):
        raw = _deep_merge(DEFAULT_GEN_CONFIG, override or {})
        start = date.fromisoformat(raw["window"][0])
        end = date.fromisoformat(raw["window"][1])
        if end < start:
            raise ConfigError("window end precedes window start")
        price = raw["price"]
        mix = price["mix_zero"] + price["mix_pos"] + price["mix_neg"]
        if abs(mix - 1.0) > 1e-9:
            raise ConfigError(f"slope mixture weights sum to {mix}, not 1")
        for name in ("mix_zero", "mix_pos", "mix_neg"):
            if not 0.0 <= price[name] <= 1.0:
                raise ConfigError(f"price.{name} outside [0, 1]")
        cov = raw["covariates"]
        if cov["fold_above_p"] + cov["fold_below_p"] > 1.0 + 1e-9:
            raise ConfigError("fold probabilities exceed 1")
        if raw["lifetime"]["family"] not in ("weibull", "lognormal"):
            raise ConfigError(
                f"unsupported lifetime family {raw['lifetime']['family']!r}")
        for attr, levels in raw["user_attrs"].items():
            total = sum(levels.values())
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"user_attrs.{attr} weights sum to {total}")
        return cls(raw=raw)

    @property
    def window(self):
        return (date.fromisoformat(self.raw["window"][0]),
                date.fromisoformat(self.raw["window"][1]))

    def to_dict(self):
        return json.loads(json.dumps(self.raw))


@dataclass(frozen=True)
class CookieTruth:
    cookie_id: str
    birth: date
    death: date
    lifetime_days: int
    intercept: float
    slope: float
    effect_class: str
    activity_prob: float
    impression_base: float
    impression_trend: float
    nbar: float
    attrs: dict


@dataclass(frozen=True)
class GroundTruth:
    seed: int
    config: dict
    cookies: dict  # cookie_id -> CookieTruth


_SECONDS = None


def _second_strings():
    global _SECONDS
    if _SECONDS is None:
        _SECONDS = np.asarray(
            [f"{s // 3600:02d}:{s % 3600 // 60:02d}:{s % 60:02d}"
             for s in range(86400)])
    return _SECONDS


def _draw_lifetime(rng, lifetime):
    if lifetime["family"] == "weibull":
        x = lifetime["scale"] * rng.weibull(lifetime["shape"])
    else:
        x = math.exp(rng.normal(lifetime["scale"], lifetime["shape"]))
    return max(1, math.ceil(x))


def _truncated_poisson(rng, means):
    """One draw per mean, conditioned on being at least 1."""
    floor = np.exp(-means)
    u = floor + (1.0 - floor) * rng.random(len(means))
    counts = stats.poisson.ppf(np.minimum(u, 1.0 - 1e-12), means).astype(int)
    return np.maximum(counts, 1)


def _expected_nbar(lifetime_days, base, trend):
    t = np.arange(1, lifetime_days + 1, dtype=float)
    m = np.maximum(base + trend * t, 0.1)
    return float(np.mean(m / (1.0 - np.exp(-m))))


def generate(config, seed):
    """Generate an impression log and its ground truth.

    Returns (events, truth) where events is a DataFrame in the
    impression-log column order, sorted by cookie id and time, and truth
    maps every generated cookie (including ones that never produce an
    in-window event) to its true parameters.
    """
    if not isinstance(config, GenConfig):
        config = GenConfig.from_dict(config)
    raw = config.raw
    start, end = config.window
    window_days = (end - start).days + 1
    offset = raw["birth_offset_days"]
    if offset >= window_days:
        raise ConfigError("birth_offset_days beyond the window")
    birth_span = raw["birth_span_days"] or (window_days - offset)
    birth_span = min(birth_span, window_days - offset)
    price_cfg = raw["price"]
    cov = raw["covariates"]
    imp = raw["impressions"]
    act = raw["activity_prob"]
    fold_levels = np.asarray(["above", "below", "unknown"])
    fold_p = np.asarray([cov["fold_above_p"], cov["fold_below_p"],
                         1.0 - cov["fold_above_p"] - cov["fold_below_p"]])
    attr_names = ("country", "device_type", "os", "browser")
    attr_choices = {a: (list(raw["user_attrs"][a].keys()),
                        list(raw["user_attrs"][a].values()))
                    for a in attr_names}
    seconds = _second_strings()
    master = np.random.SeedSequence(seed)
    cols = {name: [] for name in (
        "cookie_id", "timestamp", "price_cpm", "media_type", "fold",
        "retargeted", "country", "device_type", "os", "browser")}
    truth_cookies = {}
    for i in range(raw["n_cookies"]):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        cid = str(10_000_000 + i)

        pre = rng.random() < raw["pre_window_birth_share"]
        if pre:
            birth = start - timedelta(
                days=int(rng.integers(1, raw["pre_window_span_days"] + 1)))
        else:
            birth = start + timedelta(
                days=offset + int(rng.integers(0, birth_span)))
        lifetime = _draw_lifetime(rng, raw["lifetime"])
        death = birth + timedelta(days=lifetime - 1)
        p_act = float(rng.beta(act["alpha"], act["beta"]))

        u_cls = rng.random()
        magnitude = float(rng.uniform(*price_cfg["slope_magnitude_range"]))
        if u_cls < price_cfg["mix_zero"]:
            slope, cls = 0.0, "zero"
        elif u_cls < price_cfg["mix_zero"] + price_cfg["mix_pos"]:
            slope, cls = magnitude, "positive"
        else:
            slope, cls = -magnitude, "negative"
        intercept = float(rng.uniform(*price_cfg["intercept_range"]))
        attrs = {a: str(rng.choice(levels, p=probs))
                 for a, (levels, probs) in attr_choices.items()}
        truth_cookies[cid] = CookieTruth(
            cookie_id=cid, birth=birth, death=death,
            lifetime_days=lifetime, intercept=intercept, slope=slope,
            effect_class=cls, activity_prob=p_act,
            impression_base=imp["base_rate"],
            impression_trend=imp["per_day_trend"],
            nbar=_expected_nbar(lifetime, imp["base_rate"],
                                imp["per_day_trend"]),
            attrs=attrs)

        lo = max(birth, start)
        hi = min(death, end)
        if lo > hi:
            continue
        n_days = (hi - lo).days + 1
        head_gap = (lo - birth).days  # day index of the first visible day - 1
        active = rng.random(n_days) < p_act
        day_idx = np.nonzero(active)[0]
        if len(day_idx) == 0:
            continue
        t_vals = day_idx + head_gap + 1.0
        means = np.maximum(
            imp["base_rate"] + imp["per_day_trend"] * t_vals, 0.1)
        counts = _truncated_poisson(rng, means)
        total = int(counts.sum())

        prices = intercept + slope * np.repeat(t_vals, counts)
        if price_cfg["noise_sd"] > 0:
            prices = prices + rng.normal(0.0, price_cfg["noise_sd"], total)
        prices = np.maximum(prices, 0.0)
        video = rng.random(total) < cov["video_p"]
        folds = fold_levels[rng.choice(3, size=total, p=fold_p)]
        retarget = rng.random(total) < cov["retarget_p"]
        secs = rng.integers(0, 86400, size=total)
        day_rep = np.repeat(day_idx, counts)
        order = np.lexsort((secs, day_rep))

        day_iso = np.asarray([(lo + timedelta(days=d)).isoformat()
                              for d in range(n_days)])
        stamps = [f"{d}T{s}Z" for d, s in
                  zip(day_iso[day_rep[order]], seconds[secs[order]])]

        cols["cookie_id"].extend([cid] * total)
        cols["timestamp"].extend(stamps)
        cols["price_cpm"].extend(prices[order].tolist())
        cols["media_type"].extend(
            np.where(video[order], "video", "display").tolist())
        cols["fold"].extend(folds[order].tolist())
        cols["retargeted"].extend(retarget[order].astype(int).tolist())
        cols["country"].extend([attrs["country"]] * total)
        cols["device_type"].extend([attrs["device_type"]] * total)
        cols["os"].extend([attrs["os"]] * total)
        cols["browser"].extend([attrs["browser"]] * total)

    events = pd.DataFrame(cols)
    truth = GroundTruth(seed=seed, config=config.to_dict(),
                        cookies=truth_cookies)
    return events, truth


def write_impressions_csv(events, path):
    """Write the log with prices at 6 decimal places; byte-stable."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("cookie_id,timestamp,price_cpm,media_type,fold,"
                 "retargeted,country,device_type,os,browser\n")
        for row in events.itertuples(index=False):
            fh.write(f"{row.cookie_id},{row.timestamp},{row.price_cpm:.6f},"
                     f"{row.media_type},{row.fold},{row.retargeted},"
                     f"{row.country},{row.device_type},{row.os},"
                     f"{row.browser}\n")


def truth_to_dict(truth):
    return {
        "seed": truth.seed,
        "config": truth.config,
        "cookies": {
            cid: {
                "birth": c.birth.isoformat(),
                "death": c.death.isoformat(),
                "lifetime_days": c.lifetime_days,
                "intercept": round(c.intercept, 9),
                "slope": round(c.slope, 9),
                "effect_class": c.effect_class,
                "activity_prob": round(c.activity_prob, 9),
                "impression_base": c.impression_base,
                "impression_trend": c.impression_trend,
                "nbar": round(c.nbar, 9),
                "attrs": c.attrs,
            } for cid, c in truth.cookies.items()
        },
    }


def truth_from_dict(payload):
    cookies = {}
    for cid, c in payload["cookies"].items():
        cookies[cid] = CookieTruth(
            cookie_id=cid,
            birth=date.fromisoformat(c["birth"]),
            death=date.fromisoformat(c["death"]),
            lifetime_days=c["lifetime_days"],
            intercept=c["intercept"], slope=c["slope"],
            effect_class=c["effect_class"],
            activity_prob=c["activity_prob"],
            impression_base=c["impression_base"],
            impression_trend=c["impression_trend"],
            nbar=c["nbar"], attrs=c["attrs"])
    return GroundTruth(seed=payload["seed"], config=payload["config"],
                       cookies=cookies)


def rebirth_day_gap_sum(lifetime_days, limit_days):
    """Closed form of sum_{t=1..T} (t - effective day t) under a limit."""
    full, rem = divmod(lifetime_days, limit_days)
    return limit_days * (limit_days * full * (full - 1) // 2 + rem * full)


def analytic_expected_loss(truth, limit_days):
    """Noiseless total loss implied by the ground truth, in euros.

    Per cookie with a true nonzero slope and lifetime beyond the limit:
    slope * nbar / 1000 * activity_prob * sum_t (t - effective day t).
    """
    total = 0.0
    for c in truth.cookies.values():
        if c.effect_class == "zero" or c.lifetime_days <= limit_days:
            continue
        gaps = rebirth_day_gap_sum(c.lifetime_days, limit_days)
        total += c.slope * c.nbar / 1000.0 * c.activity_prob * gaps
    return total
