"""Lifetime valuation and the deletion-and-rebirth restriction simulation.

Under a lifetime limit of L days a cookie is deleted every L days and a
fresh cookie restarts the day count at 1, so day t is priced as if it were
day ((t - 1) mod L) + 1. Cookies whose fitted day-count effect is not
significant lose nothing by construction; everyone still contributes to
the "all cookies" denominators.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LifetimeValuation:
    """Model-based value accounting for one cookie, in euros."""

    cookie_id: str
    observed_lvc: float
    predicted_censored_lvc: float
    ape: float | None
    predicted_residual_lvc: float
    uncensored_lvc: float


@dataclass(frozen=True)
class RestrictionPolicy:
    limit_days: int

    def __post_init__(self):
        if self.limit_days < 1:
            raise ValueError("limit_days must be at least 1")


DEFAULT_POLICY_GRID = (30, 60, 90, 120, 360, 720)


@dataclass(frozen=True)
class CookiePolicyOutcome:
    cookie_id: str
    survived: bool
    effect_class: str
    unrestricted_value: float
    restricted_value: float
    loss: float


@dataclass(frozen=True)
class GroupStats:
    n: int
    share_of_all: float
    avg_lvc: float
    avg_loss: float
    avg_loss_ci: tuple
    pct_loss: float
    pct_loss_ci: tuple


@dataclass(frozen=True)
class PolicyReport:
    limit_days: int
    n_cookies: int
    n_survived: int
    survived_share: float
    cond2_given_1: float
    cond3_given_1: float
    groups: dict  # pos | neg | all -> GroupStats


@dataclass(frozen=True)
class MarketImpact:
    pct_loss: float
    revenue_base: float
    internet_users: float
    affected_revenue: float
    loss_per_user: float


def predicted_price(fit, day):
    """Model price (euros CPM) at a day index, covariates held at the
    cookie's mean shares; never negative."""
    val = fit.params.get("const", 0.0)
    val += fit.params.get("daycount", 0.0) * day
    val += fit.params.get("daycount_sq", 0.0) * day * day
    for name, mean in fit.covariate_means.items():
        val += fit.params[name] * mean
    return max(val, 0.0)


def restricted_day(day, limit_days):
    """Effective day index under a limit: identity up to the limit, then
    the rebirth cycle ((day - 1) mod L) + 1."""
    return (day - 1) % limit_days + 1


def _price_series(fit, horizon, limit_days=None):
    t = np.arange(1, horizon + 1, dtype=float)
    if limit_days is not None:
        t = (t - 1) % limit_days + 1
    base = fit.params.get("const", 0.0)
    for name, mean in fit.covariate_means.items():
        base += fit.params[name] * mean
    prices = base + fit.params.get("daycount", 0.0) * t
    if "daycount_sq" in fit.params:
        prices = prices + fit.params["daycount_sq"] * t * t
    return np.maximum(prices, 0.0)


def value_lifetime(record, valuefit, quantityfit, uncensored_days,
                   restriction=None):
    """Euros earned over ``uncensored_days`` days, optionally under a limit.

    For cookies with a significant day-count effect this is

        activity_share * nbar * sum_t price(effective day t) / 1000,

    with nbar the detrended daily impression count. Cookies classified
    zero or not estimable fall back to their observed accounting extended
    at the observed per-day rate, and a restriction changes nothing for
    them.
    """
    if uncensored_days < record.observed_lifetime_days:
        raise ValueError("uncensored lifetime below the observed lifetime")
    if valuefit is None or valuefit.effect_class in ("zero", "not_estimable"):
        per_day = record.observed_lvc / record.observed_lifetime_days
        return record.observed_lvc + per_day * (
            uncensored_days - record.observed_lifetime_days)
    prices = _price_series(valuefit, uncensored_days, restriction)
    return (record.activity_share * quantityfit.nbar
            * float(np.sum(prices)) / 1000.0)


def valuation_rows(record, valuefit, quantityfit, uncensored_days):
    """Observed, predicted-censored, residual, and uncensored value of one
    cookie; the uncensored value is censored + residual by construction."""
    observed = record.observed_lvc
    censored_part = value_lifetime(
        record, valuefit, quantityfit, record.observed_lifetime_days)
    full = value_lifetime(record, valuefit, quantityfit, uncensored_days)
    residual = full - censored_part
    ape = abs(observed - censored_part) / observed if observed > 0 else None
    return LifetimeValuation(
        cookie_id=record.cookie_id,
        observed_lvc=observed,
        predicted_censored_lvc=censored_part,
        ape=ape,
        predicted_residual_lvc=residual,
        uncensored_lvc=censored_part + residual,
    )


def simulate_policy(records, fits, quantity_fits, uncensored, valuations,
                    limit_days):
    """One CookiePolicyOutcome per cookie under a lifetime limit.

    Only survivors (uncensored lifetime strictly above the limit) with a
    significant positive or negative day-count effect can gain or lose;
    everyone else keeps their unrestricted value.
    """
    outcomes = []
    for r in records:
        cid = r.cookie_id
        fit = fits[cid]
        days = uncensored[cid]
        unrestricted = valuations[cid].uncensored_lvc
        survived = days > limit_days
        if survived and fit.effect_class in ("positive", "negative"):
            restricted = value_lifetime(
                r, fit, quantity_fits[cid], days, restriction=limit_days)
            loss = unrestricted - restricted
        else:
            restricted = unrestricted
            loss = 0.0
        outcomes.append(CookiePolicyOutcome(
            cookie_id=cid, survived=survived,
            effect_class=fit.effect_class,
            unrestricted_value=unrestricted,
            restricted_value=restricted, loss=loss))
    return outcomes


def bootstrap_ci(outcomes, statistic, n_boot=1000, seed=0):
    """Percentile bootstrap 95% interval, resampling cookies with
    replacement; deterministic for a fixed seed."""
    n = len(outcomes)
    if n < 2:
        raise ValueError("need at least two outcomes to bootstrap")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_boot, n))
    stats_ = np.asarray([statistic([outcomes[i] for i in row])
                         for row in idx], dtype=float)
    lo, hi = np.percentile(stats_, [2.5, 97.5])
    return float(lo), float(hi)


def _bootstrap_group(losses, values, n_boot, seed):
    """Joint percentile CIs for the mean loss and the ratio-of-means
    percentage loss, on one shared set of resamples."""
    n = len(losses)
    if n == 0:
        return (0.0, 0.0), (0.0, 0.0)
    if n == 1:
        pct = losses[0] / values[0] if values[0] > 0 else 0.0
        return (float(losses[0]), float(losses[0])), (pct, pct)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_boot, n))
    loss_mean = losses[idx].mean(axis=1)
    value_mean = values[idx].mean(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        pct = np.where(value_mean > 0, loss_mean / value_mean, 0.0)
    lo_a, hi_a = np.percentile(loss_mean, [2.5, 97.5])
    lo_p, hi_p = np.percentile(pct, [2.5, 97.5])
    return (float(lo_a), float(hi_a)), (float(lo_p), float(hi_p))


def aggregate_policy(outcomes, limit_days, n_boot=1000, seed=0):
    """Collapse per-cookie outcomes into the per-restriction report.

    Percentage losses are ratio-of-means: the group's mean absolute loss
    over its mean unrestricted value. Groups are the surviving gainers
    ("pos"), the surviving losers ("neg"), and all cookies ("all").
    """
    n = len(outcomes)
    survivors = [o for o in outcomes if o.survived]
    members = {
        "pos": [o for o in survivors if o.effect_class == "positive"],
        "neg": [o for o in survivors if o.effect_class == "negative"],
        "all": list(outcomes),
    }
    groups = {}
    seeds = np.random.SeedSequence(seed).spawn(len(members))
    for gi, (name, group) in enumerate(members.items()):
        losses = np.asarray([o.loss for o in group], dtype=float)
        values = np.asarray([o.unrestricted_value for o in group],
                            dtype=float)
        avg_loss = float(losses.mean()) if len(group) else 0.0
        avg_lvc = float(values.mean()) if len(group) else 0.0
        pct = avg_loss / avg_lvc if avg_lvc > 0 else 0.0
        loss_ci, pct_ci = _bootstrap_group(losses, values, n_boot, seeds[gi])
        groups[name] = GroupStats(
            n=len(group), share_of_all=len(group) / n if n else 0.0,
            avg_lvc=avg_lvc, avg_loss=avg_loss, avg_loss_ci=loss_ci,
            pct_loss=pct, pct_loss_ci=pct_ci)
    n_surv = len(survivors)
    return PolicyReport(
        limit_days=limit_days, n_cookies=n, n_survived=n_surv,
        survived_share=n_surv / n if n else 0.0,
        cond2_given_1=len(members["pos"]) / n_surv if n_surv else 0.0,
        cond3_given_1=len(members["neg"]) / n_surv if n_surv else 0.0,
        groups=groups)


def extrapolate_market(pct_loss, revenue_base, internet_users):
    """Scale a percentage loss to a yearly market figure and a per-user one."""
    if revenue_base <= 0 or internet_users <= 0:
        raise ValueError("revenue base and user count must be positive")
    affected = pct_loss * revenue_base
    return MarketImpact(
        pct_loss=pct_loss, revenue_base=revenue_base,
        internet_users=internet_users, affected_revenue=affected,
        loss_per_user=affected / internet_users)
