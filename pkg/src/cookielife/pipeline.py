"""Pipeline stages and their file formats.

Every stage reads only the files earlier stages wrote under the output
directory, so any stage can rerun standalone. All emitted numbers use
fixed-point rendering (euros at 6 decimals, percents at 3), which keeps
repeated runs byte-identical.
"""

import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import date

import numpy as np

from . import panel as panel_mod
from . import policysim, survival, synthgen, valuemodel
from .errors import ConfigError, DataError

CLASS_CODES = {"positive": "pos", "negative": "neg", "zero": "zero",
               "not_estimable": "na"}
CLASS_NAMES = {v: k for k, v in CLASS_CODES.items()}

FITS_HEADER = ["cookie_id", "model", "n_obs", "intercept", "slope",
               "slope_se", "slope_p", "beta_video", "beta_fold",
               "beta_retarget", "r2", "aic", "bic", "class"]


def _fmt(x, nd=6):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return f"{x:.{nd}f}"


def _pct(x):
    return round(100.0 * x, 3)


def _eur(x):
    return round(float(x), 6)


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def parallel_map(fn, items, threads):
    """Order-preserving map; results are independent of the thread count."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def child_seed(master, *key):
    """Deterministic derived seed for a named parallel workload."""
    ss = np.random.SeedSequence(entropy=master, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------- stages

def run_gen(out_dir, cfg, seed=None):
    gen_cfg = synthgen.GenConfig.from_dict(cfg["gen"])
    seed = cfg["seed"] if seed is None else seed
    events, truth = synthgen.generate(gen_cfg, seed)
    synthgen.write_impressions_csv(events, out_dir / "impressions.csv")
    write_json(out_dir / "truth.json", synthgen.truth_to_dict(truth))
    write_json(out_dir / "gen_config.json",
               {"seed": seed, "config": gen_cfg.to_dict()})
    return events, truth


def run_panel(input_csv, out_dir, cfg):
    sampling = cfg["sampling"]
    ids = None
    if sampling["date"]:
        events = panel_mod.parse_impressions(
            input_csv, strict=cfg["parse_strict"])
        ids = panel_mod.sample_cookie_ids(
            events, date.fromisoformat(sampling["date"]),
            sampling["fraction"], cfg["seed"])
    errors = []
    events = panel_mod.parse_impressions(
        input_csv, strict=cfg["parse_strict"], error_sink=errors)
    records = panel_mod.build_daily_panel(events, ids)
    if errors:
        print(f"panel: skipped {len(errors)} malformed rows", file=sys.stderr)
    if not records:
        raise DataError("no cookies in the panel")
    panel_mod.write_panel_csv(records, out_dir / "panel.csv")
    panel_mod.write_attrs_csv(records, out_dir / "attrs.csv")
    return records


def load_panel(out_dir):
    return panel_mod.read_panel_csv(out_dir / "panel.csv",
                                    out_dir / "attrs.csv")


def run_survival(out_dir, cfg, records=None):
    if records is None:
        records = load_panel(out_dir)
    window = (min(r.first_date for r in records),
              max(r.last_date for r in records))
    threshold = cfg["threshold_days"]
    statuses = {r.cookie_id: survival.classify_censoring(r, window, threshold)
                for r in records}
    sample = survival.filter_survival_sample(
        records, statuses, cfg["survival_min_lifetime"])
    if not sample:
        raise DataError("no lifetimes above the survival eligibility floor")
    fits = [survival.fit_survival(sample, family)
            for family in cfg["survival_families"]]
    selected = survival.select_model(fits) if len(fits) > 1 else fits[0]
    shares = survival.censoring_shares(statuses)
    payload = {
        "families": {
            f.family: {
                "shape": round(f.shape, 6),
                "scale": round(f.scale, 6),
                "extra": None if f.extra is None else round(f.extra, 6),
                "se": {k: round(v, 6) for k, v in f.se.items()},
                "ci95": {k: [round(v[0], 6), round(v[1], 6)]
                         for k, v in f.ci95.items()},
                "loglik": round(f.loglik, 6),
                "aic": round(f.aic, 6),
                "bic": round(f.bic, 6),
                "n": f.n,
            } for f in fits
        },
        "selected_family": selected.family,
        "censored_share": round(shares["censored_share"], 6),
        "censored_breakdown": {
            "left": round(shares["left"], 6),
            "right": round(shares["right"], 6),
            "both": round(shares["both"], 6),
        },
        "window": [window[0].isoformat(), window[1].isoformat()],
        "threshold_days": threshold,
        "n_panel_cookies": len(records),
    }
    write_json(out_dir / "survival.json", payload)
    return payload


def load_survival_fit(payload, family=None):
    family = family or payload["selected_family"]
    f = payload["families"][family]
    return survival.SurvivalFit(
        family=family, shape=f["shape"], scale=f["scale"], extra=f["extra"],
        se=f["se"], ci95={k: tuple(v) for k, v in f["ci95"].items()},
        loglik=f["loglik"], aic=f["aic"], bic=f["bic"], n=f["n"])


def run_regress(out_dir, cfg, records=None):
    if records is None:
        records = load_panel(out_dir)
    spec = valuemodel.ModelSpec.from_id(cfg["model"])
    fits = parallel_map(lambda r: valuemodel.fit_value_model(r, spec),
                        records, cfg["threads"])
    with open(out_dir / "fits.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(FITS_HEADER) + "\n")
        for f in fits:
            if f.estimable:
                row = [
                    f.cookie_id, str(f.model_id), str(f.n_obs),
                    _fmt(f.params.get("const"), 9),
                    _fmt(f.params.get("daycount"), 9),
                    _fmt(f.se.get("daycount"), 9),
                    _fmt(f.p_values.get("daycount"), 9),
                    _fmt(f.params.get("video_share"), 9),
                    _fmt(f.params.get("above_fold_share"), 9),
                    _fmt(f.params.get("retarget_share"), 9),
                    _fmt(f.r2, 9), _fmt(f.aic, 6), _fmt(f.bic, 6),
                    CLASS_CODES[f.effect_class],
                ]
            else:
                row = [f.cookie_id, str(f.model_id), str(f.n_obs)] + \
                    [""] * 10 + ["na"]
            fh.write(",".join(row) + "\n")
    return fits


def load_fits(out_dir, records, cfg):
    """Rebuild per-cookie fits from fits.csv; covariate means over active
    days come from the panel so the stage stays self-contained."""
    spec = valuemodel.ModelSpec.from_id(cfg["model"])
    by_id = {r.cookie_id: r for r in records}
    fits = {}
    with open(out_dir / "fits.csv", "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header != FITS_HEADER:
            raise ConfigError(f"bad fits.csv header {header!r}")
        for line in fh:
            vals = line.rstrip("\n").split(",")
            row = dict(zip(FITS_HEADER, vals))
            cid = row["cookie_id"]
            cls = CLASS_NAMES[row["class"]]
            if cls == "not_estimable":
                fits[cid] = valuemodel.ValueModelFit(
                    cookie_id=cid, model_id=int(row["model"]),
                    n_obs=int(row["n_obs"]), params={}, se={}, p_values={},
                    covariate_means={}, dropped=(), r2=math.nan,
                    loglik=math.nan, aic=math.nan, bic=math.nan,
                    effect_class=cls)
                continue
            params = {"const": float(row["intercept"]),
                      "daycount": float(row["slope"])}
            cov_cols = {"video_share": "beta_video",
                        "above_fold_share": "beta_fold",
                        "retarget_share": "beta_retarget"}
            for name, col in cov_cols.items():
                if row[col] != "":
                    params[name] = float(row[col])
            record = by_id[cid]
            cov_means = {}
            for name in params:
                if name in valuemodel.COVARIATES:
                    cov_means[name] = float(np.mean(
                        [getattr(d, name) for d in record.days]))
            blank = lambda s: float(s) if s != "" else math.nan
            fits[cid] = valuemodel.ValueModelFit(
                cookie_id=cid, model_id=int(row["model"]),
                n_obs=int(row["n_obs"]), params=params,
                se={"daycount": float(row["slope_se"])},
                p_values={"daycount": float(row["slope_p"])},
                covariate_means=cov_means, dropped=(),
                r2=blank(row["r2"]), loglik=math.nan,
                aic=blank(row["aic"]), bic=blank(row["bic"]),
                effect_class=cls)
    missing = set(by_id) - set(fits)
    if missing:
        raise DataError(f"fits.csv lacks {len(missing)} panel cookies")
    return fits


def run_simulate(out_dir, cfg, records=None):
    if records is None:
        records = load_panel(out_dir)
    surv = read_json(out_dir / "survival.json")
    window = (date.fromisoformat(surv["window"][0]),
              date.fromisoformat(surv["window"][1]))
    threshold = surv["threshold_days"]
    statuses = {r.cookie_id: survival.classify_censoring(r, window, threshold)
                for r in records}
    fit = load_survival_fit(surv)
    uncensored = survival.uncensor_lifetimes(records, fit, statuses)
    fits = load_fits(out_dir, records, cfg)
    qfits = {r.cookie_id: valuemodel.fit_quantity_model(r) for r in records}
    valuations = {
        r.cookie_id: policysim.valuation_rows(
            r, fits[r.cookie_id], qfits[r.cookie_id],
            uncensored[r.cookie_id])
        for r in records}

    _write_valuations(out_dir, records, fits, valuations, uncensored)
    reports = []
    for li, limit in enumerate(cfg["restrictions"]):
        outcomes = policysim.simulate_policy(
            records, fits, qfits, uncensored, valuations, limit)
        reports.append(policysim.aggregate_policy(
            outcomes, limit, n_boot=cfg["bootstrap_reps"],
            seed=child_seed(cfg["seed"], 7, li)))
    _write_policy_report(out_dir, reports, cfg)
    return reports


def _write_valuations(out_dir, records, fits, valuations, uncensored):
    with open(out_dir / "valuations.csv", "w", encoding="utf-8",
              newline="") as fh:
        fh.write("cookie_id,observed_lvc,predicted_censored_lvc,ape,"
                 "predicted_residual_lvc,uncensored_lvc,uncensored_days,"
                 "class\n")
        for r in records:
            v = valuations[r.cookie_id]
            fh.write(
                f"{r.cookie_id},{v.observed_lvc:.6f},"
                f"{v.predicted_censored_lvc:.6f},{_fmt(v.ape)},"
                f"{v.predicted_residual_lvc:.6f},{v.uncensored_lvc:.6f},"
                f"{uncensored[r.cookie_id]},"
                f"{CLASS_CODES[fits[r.cookie_id].effect_class]}\n")


def _market_entry(report, cfg):
    market = cfg["market"]
    g = report.groups["all"]
    impact = policysim.extrapolate_market(
        g.pct_loss, market["revenue_eur"], market["users"])
    rev, users = market["revenue_eur"], market["users"]
    return {
        "revenue_base": rev,
        "users": users,
        "affected_revenue": _eur(impact.affected_revenue),
        "affected_revenue_ci": [_eur(g.pct_loss_ci[0] * rev),
                                _eur(g.pct_loss_ci[1] * rev)],
        "per_user": _eur(impact.loss_per_user),
        "per_user_ci": [_eur(g.pct_loss_ci[0] * rev / users),
                        _eur(g.pct_loss_ci[1] * rev / users)],
    }


def _group_entry(g):
    return {
        "n": g.n,
        "share": _pct(g.share_of_all),
        "avg_lvc": _eur(g.avg_lvc),
        "avg_loss": _eur(g.avg_loss),
        "avg_loss_ci": [_eur(g.avg_loss_ci[0]), _eur(g.avg_loss_ci[1])],
        "pct_loss": _pct(g.pct_loss),
        "pct_loss_ci": [_pct(g.pct_loss_ci[0]), _pct(g.pct_loss_ci[1])],
    }


def _write_policy_report(out_dir, reports, cfg):
    payload = []
    for rep in reports:
        payload.append({
            "limit_days": rep.limit_days,
            "n_cookies": rep.n_cookies,
            "n_survived": rep.n_survived,
            "survived_share": _pct(rep.survived_share),
            "cond2_given_1": _pct(rep.cond2_given_1),
            "cond3_given_1": _pct(rep.cond3_given_1),
            "groups": {name: _group_entry(rep.groups[name])
                       for name in ("pos", "neg", "all")},
            "market": _market_entry(rep, cfg),
        })
    write_json(out_dir / "policy_report.json", payload)

    cols = ["limit_days", "n_cookies", "n_survived", "survived_share",
            "cond2_given_1", "cond3_given_1"]
    for g in ("pos", "neg", "all"):
        cols += [f"{g}_n", f"{g}_share", f"{g}_avg_lvc", f"{g}_avg_loss",
                 f"{g}_avg_loss_ci_lo", f"{g}_avg_loss_ci_hi",
                 f"{g}_pct_loss", f"{g}_pct_loss_ci_lo",
                 f"{g}_pct_loss_ci_hi"]
    cols += ["market_affected_revenue", "market_affected_revenue_ci_lo",
             "market_affected_revenue_ci_hi", "market_per_user",
             "market_per_user_ci_lo", "market_per_user_ci_hi"]
    with open(out_dir / "policy_report.csv", "w", encoding="utf-8",
              newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for entry in payload:
            row = [str(entry["limit_days"]), str(entry["n_cookies"]),
                   str(entry["n_survived"]),
                   f"{entry['survived_share']:.3f}",
                   f"{entry['cond2_given_1']:.3f}",
                   f"{entry['cond3_given_1']:.3f}"]
            for g in ("pos", "neg", "all"):
                e = entry["groups"][g]
                row += [str(e["n"]), f"{e['share']:.3f}",
                        f"{e['avg_lvc']:.6f}", f"{e['avg_loss']:.6f}",
                        f"{e['avg_loss_ci'][0]:.6f}",
                        f"{e['avg_loss_ci'][1]:.6f}",
                        f"{e['pct_loss']:.3f}",
                        f"{e['pct_loss_ci'][0]:.3f}",
                        f"{e['pct_loss_ci'][1]:.3f}"]
            m = entry["market"]
            row += [f"{m['affected_revenue']:.6f}",
                    f"{m['affected_revenue_ci'][0]:.6f}",
                    f"{m['affected_revenue_ci'][1]:.6f}",
                    f"{m['per_user']:.6f}",
                    f"{m['per_user_ci'][0]:.6f}",
                    f"{m['per_user_ci'][1]:.6f}"]
            fh.write(",".join(row) + "\n")


def run_validate(out_dir, cfg, records=None):
    if records is None:
        records = load_panel(out_dir)
    window = (min(r.first_date for r in records),
              max(r.last_date for r in records))
    vcfg = cfg["validation"]
    if vcfg["cohort_start"]:
        cohort_start = date.fromisoformat(vcfg["cohort_start"])
    else:
        cohort_start = date.fromordinal(window[0].toordinal() + 70)
    cohort = survival.select_newborn_cohort(
        records, cohort_start, vcfg["cohort_days"])
    window_days = (window[1] - window[0]).days + 1
    split = vcfg["split_days"] or max(int(round(0.63 * window_days)),
                                      cfg["survival_min_lifetime"] + 1)
    report = survival.validate_holdout(
        cohort, split, families=tuple(vcfg["families"]),
        min_lifetime_days=cfg["survival_min_lifetime"])
    payload = {
        "n": report.n,
        "split_days": report.split_days,
        "cohort_start": cohort_start.isoformat(),
        "observed_mean": round(report.observed_mean, 6),
        "observed_ci": [round(report.observed_ci[0], 6),
                        round(report.observed_ci[1], 6)],
        "fits": {
            family: {"shape": round(f.shape, 6), "scale": round(f.scale, 6),
                     "extra": None if f.extra is None else round(f.extra, 6),
                     "loglik": round(f.loglik, 6), "aic": round(f.aic, 6),
                     "bic": round(f.bic, 6), "n": f.n}
            for family, f in report.fits.items()},
        "results": {
            family: {
                stat: {
                    "uncensored_mean": round(res["uncensored_mean"], 6),
                    "ci95": [round(res["ci95"][0], 6),
                             round(res["ci95"][1], 6)],
                    "r2": round(res["r2"], 6),
                    "mae": round(res["mae"], 6),
                    "rmse": round(res["rmse"], 6),
                    "mape": round(res["mape"], 6),
                }
                for (fam, stat), res in report.results.items()
                if fam == family}
            for family in report.fits},
    }
    write_json(out_dir / "validation.json", payload)
    _write_quality(out_dir, cfg, records)
    return payload


def _quality_summary(values):
    arr = np.asarray(values, dtype=float)
    q = np.quantile(arr, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {
        "min": round(float(q[0]), 6), "p25": round(float(q[1]), 6),
        "p50": round(float(q[2]), 6), "p75": round(float(q[3]), 6),
        "max": round(float(q[4]), 6), "mean": round(float(arr.mean()), 6),
        "sd": round(float(arr.std(ddof=1)) if len(arr) > 1 else 0.0, 6),
    }


def _write_quality(out_dir, cfg, records):
    eligible = [r for r in records if r.active_days >= 10]
    payload = {"n_cookies": len(eligible), "models": {}}
    for model_id in (1, 2, 3, 4, 5):
        spec = valuemodel.ModelSpec.from_id(model_id)

        def one(record, spec=spec):
            try:
                return valuemodel.prediction_quality(record, spec)
            except DataError:
                return None

        metrics = [m for m in parallel_map(one, eligible, cfg["threads"])
                   if m is not None]
        if not metrics:
            continue
        payload["models"][str(model_id)] = {
            "n": len(metrics),
            "r2": _quality_summary([m.r2 for m in metrics]),
            "mae": _quality_summary([m.mae for m in metrics]),
            "rmse": _quality_summary([m.rmse for m in metrics]),
            "mape": _quality_summary(
                [m.mape for m in metrics if math.isfinite(m.mape)]),
        }
    write_json(out_dir / "quality.json", payload)
    return payload


def _distribution(values):
    arr = np.asarray(values, dtype=float)
    return {
        "min": _eur(arr.min()), "median": _eur(float(np.median(arr))),
        "mean": _eur(float(arr.mean())), "max": _eur(arr.max()),
    }


def run_report(out_dir, cfg):
    records = load_panel(out_dir)
    surv = read_json(out_dir / "survival.json")
    policy = read_json(out_dir / "policy_report.json")
    validation = read_json(out_dir / "validation.json")
    quality = read_json(out_dir / "quality.json")
    fits = load_fits(out_dir, records, cfg)

    vals = {}
    with open(out_dir / "valuations.csv", "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        for line in fh:
            row = dict(zip(header, line.rstrip("\n").split(",")))
            vals[row["cookie_id"]] = row

    panel_summary = _panel_summary(records, vals)
    fits_summary = _fits_summary(records, fits, vals, cfg)
    attrs_summary = _attrs_summary(records, fits)

    _write_summary_csv(out_dir / "panel_summary.csv", panel_summary)
    _write_fits_summary_csv(out_dir / "fits_summary.csv", fits_summary)
    _write_attrs_csv_table(out_dir / "attrs_regression.csv", attrs_summary)
    bundle = {
        "panel_summary": panel_summary,
        "survival": surv,
        "fits_summary": fits_summary,
        "policy": policy,
        "validation": validation,
        "quality": quality,
        "user_attrs_regression": attrs_summary,
    }
    write_json(out_dir / "report.json", bundle)
    return bundle


def _panel_summary(records, vals):
    series = {
        "observed_lifetime_days": [], "uncensored_lifetime_days": [],
        "active_days": [], "activity_share": [], "impressions": [],
        "impressions_per_day": [], "observed_value_per_day": [],
        "uncensored_value_per_day": [], "mean_price_cpm": [],
        "observed_lvc": [], "predicted_censored_lvc": [], "ape": [],
        "predicted_residual_lvc": [], "uncensored_lvc": [],
    }
    for r in records:
        stats_row = panel_mod.lifetime_stats(r)
        v = vals[r.cookie_id]
        u_days = int(v["uncensored_days"])
        series["observed_lifetime_days"].append(stats_row["lifetime_days"])
        series["uncensored_lifetime_days"].append(u_days)
        series["active_days"].append(stats_row["active_days"])
        series["activity_share"].append(stats_row["activity_share"])
        series["impressions"].append(stats_row["impressions"])
        series["impressions_per_day"].append(
            stats_row["impressions_per_day"])
        series["observed_value_per_day"].append(stats_row["value_per_day"])
        series["uncensored_value_per_day"].append(
            float(v["uncensored_lvc"]) / u_days)
        series["mean_price_cpm"].append(stats_row["mean_price_cpm"])
        series["observed_lvc"].append(stats_row["observed_lvc"])
        series["predicted_censored_lvc"].append(
            float(v["predicted_censored_lvc"]))
        if v["ape"] != "":
            series["ape"].append(float(v["ape"]))
        series["predicted_residual_lvc"].append(
            float(v["predicted_residual_lvc"]))
        series["uncensored_lvc"].append(float(v["uncensored_lvc"]))
    out = {"n_cookies": len(records), "variables": {}}
    for name, values in series.items():
        if not values:
            continue
        arr = np.asarray(values, dtype=float)
        q = np.quantile(arr, [0.0, 0.25, 0.5, 0.75, 1.0])
        out["variables"][name] = {
            "min": round(float(q[0]), 6), "p25": round(float(q[1]), 6),
            "p50": round(float(q[2]), 6), "p75": round(float(q[3]), 6),
            "max": round(float(q[4]), 6),
            "mean": round(float(arr.mean()), 6),
            "sd": round(float(arr.std(ddof=1)) if len(arr) > 1 else 0.0, 6),
        }
    return out


def _fits_summary(records, fits, vals, cfg):
    imp = {r.cookie_id: r.total_impressions for r in records}
    total_imp = sum(imp.values())
    n = len(records)
    fit_list = list(fits.values())
    est = [f for f in fit_list if f.estimable]
    winsorized = valuemodel.winsorize_fits(fit_list, cfg["winsor_q"]) \
        if len(est) >= 2 else fit_list
    by_class = {"pos": [], "neg": [], "zero": [], "na": []}
    for f in fit_list:
        by_class[CLASS_CODES[f.effect_class]].append(f.cookie_id)
    classes = {}
    for code in ("pos", "neg", "zero", "na"):
        ids = by_class[code]
        group_imp = sum(imp[c] for c in ids)
        entry = {
            "n": len(ids),
            "share": _pct(len(ids) / n if n else 0.0),
            "impressions": group_imp,
            "impressions_share": _pct(
                group_imp / total_imp if total_imp else 0.0),
            "impressions_per_cookie": round(
                group_imp / len(ids), 3) if ids else 0.0,
        }
        if ids:
            lives = np.asarray(
                [int(vals[c]["uncensored_days"]) for c in ids], dtype=float)
            lvcs = np.asarray(
                [float(vals[c]["uncensored_lvc"]) for c in ids])
            entry["uncensored_lifetime_mean"] = round(float(lives.mean()), 3)
            entry["uncensored_lifetime_median"] = round(
                float(np.median(lives)), 3)
            entry["uncensored_lvc_mean"] = _eur(lvcs.mean())
            entry["uncensored_lvc_median"] = _eur(float(np.median(lvcs)))
        classes[code] = entry
    n_sig_zero = sum(
        1 for f in fit_list
        if f.estimable and valuemodel.is_significant_zero(f, cfg["alpha"]))
    win_est = [f for f in winsorized if f.estimable]
    params = {}
    if win_est:
        params = {
            "const": _distribution([f.params["const"] for f in win_est]),
            "daycount": _distribution(
                [f.params["daycount"] for f in win_est]),
        }
    return {
        "model": cfg["model"],
        "classes": classes,
        "significant_zero": {"n": n_sig_zero,
                             "share": _pct(n_sig_zero / n if n else 0.0)},
        "winsorized_params": params,
        "winsor_q": cfg["winsor_q"],
    }


def _attrs_summary(records, fits):
    attrs = {r.cookie_id: r.user_attrs for r in records}
    try:
        tables = valuemodel.describe_parameters(list(fits.values()), attrs)
    except DataError:
        return {}
    out = {}
    for dv, table in tables.items():
        out[dv] = {
            "adj_r2": round(table["adj_r2"], 6),
            "n": table["n"],
            "dropped": table["dropped"],
            "rows": [{"attribute": r["attribute"], "level": r["level"],
                      "coef": round(r["coef"], 6),
                      "p_value": round(r["p_value"], 6)}
                     for r in table["rows"]],
        }
    return out


def _write_summary_csv(path, summary):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("variable,min,p25,p50,p75,max,mean,sd\n")
        for name, row in summary["variables"].items():
            fh.write(f"{name},{row['min']:.6f},{row['p25']:.6f},"
                     f"{row['p50']:.6f},{row['p75']:.6f},{row['max']:.6f},"
                     f"{row['mean']:.6f},{row['sd']:.6f}\n")


def _write_fits_summary_csv(path, summary):
    cols = ["class", "n", "share", "impressions", "impressions_share",
            "impressions_per_cookie", "uncensored_lifetime_mean",
            "uncensored_lifetime_median", "uncensored_lvc_mean",
            "uncensored_lvc_median"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for code, entry in summary["classes"].items():
            row = [code] + [str(entry.get(c, "")) for c in cols[1:]]
            fh.write(",".join(row) + "\n")


def _write_attrs_csv_table(path, summary):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("dv,attribute,level,coef,p_value\n")
        for dv, table in summary.items():
            for row in table["rows"]:
                fh.write(f"{dv},{row['attribute']},{row['level']},"
                         f"{row['coef']:.6f},{row['p_value']:.6f}\n")


def run_all(input_csv, out_dir, cfg):
    # every stage reloads from the previous stage's files, so a single
    # `all` run and a stage-by-stage run produce identical bytes
    run_panel(input_csv, out_dir, cfg)
    run_survival(out_dir, cfg)
    run_regress(out_dir, cfg)
    run_simulate(out_dir, cfg)
    run_validate(out_dir, cfg)
    return run_report(out_dir, cfg)
