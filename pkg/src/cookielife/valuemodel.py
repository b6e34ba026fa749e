"""Per-cookie price regressions and their significance classification.

Each cookie gets its own ordinary least squares fit of the daily average
impression price on the calendar day index (plus optional ad-inventory
shares), estimated over active days only. The sign and significance of the
day-count coefficient decide whether the cookie gains, loses, or holds its
value over time.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .errors import DataError

COVARIATES = ("video_share", "above_fold_share", "retarget_share")

EFFECT_CLASSES = ("positive", "negative", "zero", "not_estimable")


@dataclass(frozen=True)
class ModelSpec:
    """Regression specification; ids follow the standard comparison set.

    1: price ~ daycount                    3: log price ~ daycount
    2: price ~ daycount + inventory        4: log price ~ daycount + inventory
    (the preferred default)                5: price ~ daycount + daycount^2
                                              + inventory
    """

    model_id: int
    dv: str                    # price | log_price
    daycount_squared: bool
    ad_inventory: bool

    @classmethod
    def from_id(cls, model_id):
        table = {
            1: ("price", False, False),
            2: ("price", False, True),
            3: ("log_price", False, False),
            4: ("log_price", False, True),
            5: ("price", True, True),
        }
        if model_id not in table:
            raise ValueError(f"unknown model id {model_id}")
        dv, sq, inv = table[model_id]
        return cls(model_id=model_id, dv=dv, daycount_squared=sq,
                   ad_inventory=inv)


@dataclass(frozen=True)
class ValueModelFit:
    """OLS result for one cookie, in euros CPM.

    ``params``/``se``/``p_values`` are keyed by regressor name ('const',
    'daycount', 'daycount_sq', and the inventory share columns actually
    kept). ``dropped`` lists covariates removed as constant or collinear.
    """

    cookie_id: str
    model_id: int
    n_obs: int
    params: dict
    se: dict
    p_values: dict
    covariate_means: dict
    dropped: tuple
    r2: float
    loglik: float
    aic: float
    bic: float
    effect_class: str
    n_zero_price_dropped: int = 0

    @property
    def estimable(self):
        return self.effect_class != "not_estimable"

    @property
    def intercept(self):
        return self.params.get("const", math.nan)

    @property
    def time_param(self):
        return self.params.get("daycount", math.nan)


def _not_estimable(record, spec, n_obs, n_zero=0):
    return ValueModelFit(
        cookie_id=record.cookie_id, model_id=spec.model_id, n_obs=n_obs,
        params={}, se={}, p_values={}, covariate_means={}, dropped=(),
        r2=math.nan, loglik=math.nan, aic=math.nan, bic=math.nan,
        effect_class="not_estimable", n_zero_price_dropped=n_zero)


def _design_columns(days, spec):
    x = np.asarray([d.day_index for d in days], dtype=float)
    cols = [("daycount", x)]
    if spec.daycount_squared:
        cols.append(("daycount_sq", x * x))
    if spec.ad_inventory:
        for name in COVARIATES:
            cols.append((name, np.asarray(
                [getattr(d, name) for d in days], dtype=float)))
    return cols


def fit_value_model(record, spec=None):
    """OLS of daily average price on day count (+ inventory shares).

    Only active days contribute rows. Cookies with fewer than k + 2 rows
    for k regressors are returned as not_estimable (no degrees of freedom
    for the t test otherwise). For the log-price models, zero-price days
    are dropped and counted. Constant or collinear covariate columns are
    dropped and recorded; the day-count column is always kept. P-values
    are two-sided from the t distribution with n - k - 1 degrees of
    freedom.
    """
    if spec is None:
        spec = ModelSpec.from_id(2)
    elif isinstance(spec, int):
        spec = ModelSpec.from_id(spec)
    days = record.days
    n_zero = 0
    if spec.dv == "log_price":
        kept = [d for d in days if d.avg_price_cpm > 0.0]
        n_zero = len(days) - len(kept)
        days = kept
    if len(days) == 0:
        return _not_estimable(record, spec, 0, n_zero)
    y = np.asarray([d.avg_price_cpm for d in days], dtype=float)
    if spec.dv == "log_price":
        y = np.log(y)
    cols = _design_columns(days, spec)

    dropped = [name for name, v in cols
               if name != "daycount" and np.ptp(v) == 0.0]
    cols = [(name, v) for name, v in cols if name not in dropped]
    n = len(days)
    if n < len(cols) + 2:
        return _not_estimable(record, spec, n, n_zero)

    names = ["const"] + [name for name, _ in cols]
    X = np.column_stack([np.ones(n)] + [v for _, v in cols])
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        # collinear inventory columns: rebuild greedily, keeping daycount
        keep = [0, 1] + ([2] if spec.daycount_squared else [])
        base = X[:, keep]
        kept_names = [names[i] for i in keep]
        for i in range(len(keep), X.shape[1]):
            cand = np.column_stack([base, X[:, i]])
            if np.linalg.matrix_rank(cand) > np.linalg.matrix_rank(base):
                base = cand
                kept_names.append(names[i])
            else:
                dropped.append(names[i])
        X, names = base, kept_names
        if n < X.shape[1] + 1:
            return _not_estimable(record, spec, n, n_zero)
        beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)

    resid = y - X @ beta
    rss = float(resid @ resid)
    df = n - X.shape[1]
    if df > 0 and rss > 1e-300:
        sigma2 = rss / df
        cov = sigma2 * np.linalg.inv(X.T @ X)
        se_vec = np.sqrt(np.diag(cov))
        with np.errstate(divide="ignore"):
            t_stats = beta / se_vec
        p_vec = 2.0 * stats.t.sf(np.abs(t_stats), df)
    else:
        # perfect fit: zero residual variance
        se_vec = np.zeros(X.shape[1])
        p_vec = np.where(np.abs(beta) > 0, 0.0, 1.0)

    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss <= 1e-300 else 0.0)
    if rss > 1e-300:
        loglik = -0.5 * n * (math.log(2 * math.pi) + math.log(rss / n) + 1.0)
    else:
        loglik = math.inf
    n_par = X.shape[1] + 1  # coefficients plus error variance
    aic = 2.0 * n_par - 2.0 * loglik
    bic = n_par * math.log(n) - 2.0 * loglik

    params = dict(zip(names, (float(b) for b in beta)))
    se = dict(zip(names, (float(s) for s in se_vec)))
    p_values = dict(zip(names, (float(p) for p in p_vec)))
    cov_means = {name: float(np.mean(X[:, i]))
                 for i, name in enumerate(names) if name in COVARIATES}
    fit = ValueModelFit(
        cookie_id=record.cookie_id, model_id=spec.model_id, n_obs=n,
        params=params, se=se, p_values=p_values, covariate_means=cov_means,
        dropped=tuple(dropped), r2=r2, loglik=loglik, aic=aic, bic=bic,
        effect_class="zero", n_zero_price_dropped=n_zero)
    return replace(fit, effect_class=classify_effect(fit))


def classify_effect(fit, alpha=0.01):
    """positive/negative when the day-count coefficient is significant at
    ``alpha`` and signed accordingly; zero otherwise."""
    if not fit.params:
        return "not_estimable"
    slope = fit.params["daycount"]
    p = fit.p_values["daycount"]
    if p <= alpha and slope > 0:
        return "positive"
    if p <= alpha and slope < 0:
        return "negative"
    return "zero"


def is_significant_zero(fit, alpha=0.01, min_obs=10):
    """Diagnostic subgroup: estimable, insignificant day-count coefficient,
    and enough observations that the insignificance is informative."""
    return (fit.estimable and fit.n_obs >= min_obs
            and fit.p_values["daycount"] > alpha)


def winsorize_fits(fits, q=0.99):
    """Clamp intercepts and day-count coefficients at the empirical
    (1 - q) and q quantiles (type-7 interpolation), across estimable fits.

    Classification is not recomputed; non-estimable fits pass through.
    """
    est = [f for f in fits if f.estimable]
    if len(est) < 2:
        raise DataError("need at least two estimable fits to winsorize")
    out = []
    bounds = {}
    for key in ("const", "daycount"):
        vals = np.asarray([f.params[key] for f in est])
        bounds[key] = (float(np.quantile(vals, 1.0 - q)),
                       float(np.quantile(vals, q)))
    for f in fits:
        if not f.estimable:
            out.append(f)
            continue
        params = dict(f.params)
        for key, (lo, hi) in bounds.items():
            params[key] = min(max(params[key], lo), hi)
        out.append(replace(f, params=params))
    return out


@dataclass(frozen=True)
class QuantityFit:
    """OLS of daily impressions on day index; ``nbar`` is the prediction at
    the mean active day, which equals the active-day mean of impressions."""

    cookie_id: str
    intercept: float
    slope: float
    nbar: float


def fit_quantity_model(record):
    counts = np.asarray([d.impressions for d in record.days], dtype=float)
    x = np.asarray([d.day_index for d in record.days], dtype=float)
    if len(counts) < 2:
        return QuantityFit(record.cookie_id, float(counts.mean()), 0.0,
                           float(counts.mean()))
    X = np.column_stack([np.ones(len(x)), x])
    beta, _, _, _ = np.linalg.lstsq(X, counts, rcond=None)
    nbar = float(beta[0] + beta[1] * x.mean())
    return QuantityFit(record.cookie_id, float(beta[0]), float(beta[1]), nbar)


@dataclass(frozen=True)
class QualityMetrics:
    cookie_id: str
    model_id: int
    r2: float
    mae: float
    rmse: float
    mape: float


def prediction_quality(record, spec):
    """Out-of-sample quality on a consecutive 80/20 split of active days.

    Requires at least ten active days. The model trains on the first
    ceil(0.8 n) rows and scores r2/mae/rmse on the rest; mape compares the
    observed lifetime value with the full-series in-sample prediction
    (model price times actual impressions, summed over active days).
    """
    if isinstance(spec, int):
        spec = ModelSpec.from_id(spec)
    days = record.days
    if spec.dv == "log_price":
        days = tuple(d for d in days if d.avg_price_cpm > 0.0)
    if len(days) < 10:
        raise DataError(
            f"cookie {record.cookie_id} has fewer than 10 usable days")
    n_train = math.ceil(0.8 * len(days))
    train = _subrecord(record, days[:n_train])
    fit = fit_value_model(train, spec)
    if not fit.estimable:
        raise DataError(f"cookie {record.cookie_id} not estimable on split")
    test = days[n_train:]
    y = np.asarray([d.avg_price_cpm for d in test], dtype=float)
    if spec.dv == "log_price":
        y = np.log(y)
    yhat = np.asarray([_predict_row(fit, d, spec) for d in test])
    err = yhat - y
    ss_res = float(np.sum(err ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (
        1.0 if ss_res < 1e-12 else 0.0)

    full_fit = fit_value_model(record, spec)
    pred_lvc = _predicted_lvc(full_fit, record, spec)
    obs_lvc = record.observed_lvc
    mape = abs(obs_lvc - pred_lvc) / obs_lvc if obs_lvc > 0 else math.nan
    return QualityMetrics(
        cookie_id=record.cookie_id, model_id=spec.model_id, r2=r2,
        mae=float(np.mean(np.abs(err))),
        rmse=float(math.sqrt(np.mean(err ** 2))), mape=mape)


def _subrecord(record, days):
    return replace(record, days=tuple(days), last_date=days[-1].date)


def _predict_row(fit, day, spec):
    val = fit.params.get("const", 0.0)
    val += fit.params.get("daycount", 0.0) * day.day_index
    val += fit.params.get("daycount_sq", 0.0) * day.day_index ** 2
    for name in COVARIATES:
        if name in fit.params:
            val += fit.params[name] * getattr(day, name)
    return val


def _predicted_lvc(fit, record, spec):
    total = 0.0
    for d in record.days:
        if spec.dv == "log_price" and d.avg_price_cpm <= 0.0:
            continue
        price = _predict_row(fit, d, spec)
        if spec.dv == "log_price":
            price = math.exp(price)
        total += d.impressions * max(price, 0.0) / 1000.0
    return total


def describe_parameters(fits, user_attrs, scale_slope=1000.0):
    """Pooled regressions of the per-cookie intercepts and slopes on the
    four user attributes, dummy-coded against the reference level 'Unknown'.

    Returns one table per dependent variable with rows
    (attribute, level, coefficient, p_value); slope coefficients are
    multiplied by ``scale_slope`` for readability. Levels never observed or
    collinear with the kept set are dropped and reported.
    """
    est = [f for f in fits if f.estimable]
    if not est:
        raise DataError("no estimable fits to describe")
    attrs = ("country", "device_type", "os", "browser")
    columns = []
    for attr in attrs:
        levels = sorted({user_attrs[f.cookie_id][attr] for f in est}
                        - {"Unknown"})
        for level in levels:
            ind = np.asarray(
                [1.0 if user_attrs[f.cookie_id][attr] == level else 0.0
                 for f in est])
            columns.append(((attr, level), ind))
    n = len(est)
    X = np.ones((n, 1))
    kept = []
    dropped = []
    for key, col in columns:
        cand = np.column_stack([X, col])
        if np.linalg.matrix_rank(cand) > X.shape[1]:
            X = cand
            kept.append(key)
        else:
            dropped.append(key)
    tables = {}
    for dv_name, values, factor in (
            ("intercept", [f.params["const"] for f in est], 1.0),
            ("time_param", [f.params["daycount"] for f in est], scale_slope)):
        y = np.asarray(values, dtype=float) * factor
        beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ beta
        df = n - X.shape[1]
        rss = float(resid @ resid)
        if df > 0 and rss > 1e-300:
            cov = rss / df * np.linalg.inv(X.T @ X)
            se = np.sqrt(np.diag(cov))
            p = 2.0 * stats.t.sf(np.abs(beta / se), df)
        else:
            se = np.zeros(X.shape[1])
            p = np.where(np.abs(beta) > 0, 0.0, 1.0)
        tss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - rss / tss if tss > 0 else 0.0
        adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / df if df > 0 else math.nan
        rows = [{"attribute": "const", "level": "", "coef": float(beta[0]),
                 "p_value": float(p[0])}]
        for i, (attr, level) in enumerate(kept, start=1):
            rows.append({"attribute": attr, "level": level,
                         "coef": float(beta[i]), "p_value": float(p[i])})
        tables[dv_name] = {"rows": rows, "adj_r2": float(adj_r2), "n": n,
                           "dropped": [f"{a}={l}" for a, l in dropped]}
    return tables
