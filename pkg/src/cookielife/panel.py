"""Impression-log parsing, cookie sampling, and the per-cookie daily panel.

The panel is the unit of exchange for the whole pipeline: one record per
cookie, one row per calendar day on which the cookie received at least one
impression. Day indices count calendar days since the cookie's first
observed day (= 1), so inactive days leave gaps in the index sequence.
"""

import math
import warnings
from dataclasses import dataclass
from datetime import date, datetime

import numpy as np
import pandas as pd

from .errors import DataError, RowError, SchemaError

CSV_HEADER = [
    "cookie_id", "timestamp", "price_cpm", "media_type", "fold",
    "retargeted", "country", "device_type", "os", "browser",
]

PANEL_HEADER = [
    "cookie_id", "date", "day_index", "impressions", "avg_price_cpm",
    "video_share", "above_fold_share", "retarget_share",
]

ATTRS_HEADER = ["cookie_id", "country", "device_type", "os", "browser"]

MEDIA_TYPES = {"display", "video"}
FOLDS = {"above", "below", "unknown"}


@dataclass(frozen=True)
class ImpressionEvent:
    """One auctioned ad impression."""

    cookie_id: str
    timestamp: datetime
    price_cpm: float
    media_type: str
    fold: str
    retargeted: bool
    country: str
    device_type: str
    os: str
    browser: str


@dataclass(frozen=True)
class DailyObservation:
    """Aggregate of one cookie's impressions on one active day."""

    date: date
    day_index: int
    impressions: int
    avg_price_cpm: float
    video_share: float
    above_fold_share: float
    retarget_share: float

    @property
    def revenue(self):
        """Euros earned on this day: impressions x CPM / 1000."""
        return self.impressions * self.avg_price_cpm / 1000.0


@dataclass(frozen=True)
class CookieRecord:
    """Immutable per-cookie daily panel with observed value accounting."""

    cookie_id: str
    first_date: date
    last_date: date
    days: tuple
    user_attrs: dict

    @property
    def observed_lifetime_days(self):
        return (self.last_date - self.first_date).days + 1

    @property
    def active_days(self):
        return len(self.days)

    @property
    def activity_share(self):
        return self.active_days / self.observed_lifetime_days

    @property
    def total_impressions(self):
        return sum(d.impressions for d in self.days)

    @property
    def observed_lvc(self):
        """Observed lifetime value in euros: sum of daily revenues."""
        return math.fsum(d.revenue for d in self.days)


def _parse_timestamp(text):
    if not text.endswith("Z"):
        raise ValueError(f"timestamp {text!r} is not UTC ('Z' suffix)")
    return datetime.fromisoformat(text[:-1])


def _parse_row(row):
    ts = _parse_timestamp(row[1])
    price = float(row[2])
    if not math.isfinite(price) or price < 0.0:
        raise ValueError(f"price_cpm {row[2]!r} is negative or not finite")
    media = row[3]
    if media not in MEDIA_TYPES:
        raise ValueError(f"media_type {media!r} not in {sorted(MEDIA_TYPES)}")
    fold = row[4]
    if fold not in FOLDS:
        raise ValueError(f"fold {fold!r} not in {sorted(FOLDS)}")
    if row[5] not in ("0", "1"):
        raise ValueError(f"retargeted {row[5]!r} must be 0 or 1")
    return ImpressionEvent(
        cookie_id=row[0],
        timestamp=ts,
        price_cpm=price,
        media_type=media,
        fold=fold,
        retargeted=row[5] == "1",
        country=row[6] or "Unknown",
        device_type=row[7] or "Unknown",
        os=row[8] or "Unknown",
        browser=row[9] or "Unknown",
    )


def parse_impressions(source, strict=True, error_sink=None):
    """Parse an impression-log CSV into a lazy sequence of ImpressionEvent.

    Parameters
    ----------
    source : str | Path | text file object
        CSV with the exact header ``CSV_HEADER``, UTF-8.
    strict : bool
        If True, the first malformed row raises RowError. If False,
        malformed rows are skipped; their (line_no, message) pairs are
        appended to ``error_sink`` and a summary warning is emitted.
    error_sink : list, optional
        Collector for skipped-row diagnostics in non-strict mode.

    Yields events in file order. A missing or reordered header raises
    SchemaError immediately.
    """
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source, "r", encoding="utf-8", newline="") if own else source
    try:
        header_line = fh.readline()
        if not header_line:
            raise SchemaError("empty file: missing header row")
        header = header_line.rstrip("\r\n").split(",")
        if header != CSV_HEADER:
            raise SchemaError(
                f"bad header {header!r}; expected {CSV_HEADER!r}")
        n_bad = 0
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            row = line.split(",")
            if len(row) != len(CSV_HEADER):
                err = f"expected {len(CSV_HEADER)} fields, got {len(row)}"
            else:
                try:
                    yield _parse_row(row)
                    continue
                except ValueError as exc:
                    err = str(exc)
            if strict:
                raise RowError(line_no, err)
            n_bad += 1
            if error_sink is not None:
                error_sink.append((line_no, err))
        if n_bad:
            warnings.warn(f"skipped {n_bad} malformed rows", stacklevel=2)
    finally:
        if own:
            fh.close()


def sample_cookie_ids(events, sampling_date, fraction, seed):
    """Draw a uniform without-replacement sample of the cookies active on a day.

    ``events`` is any iterable of ImpressionEvent. A cookie is active on
    ``sampling_date`` if it received at least one impression whose UTC
    calendar date equals it. The sample size is round(fraction * n_active),
    half away from zero. Deterministic for a fixed seed.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    active = {e.cookie_id for e in events if e.timestamp.date() == sampling_date}
    if not active:
        raise DataError(f"no cookies active on {sampling_date}")
    ordered = sorted(active, key=int)
    if fraction == 1.0:
        return set(ordered)
    k = int(math.floor(fraction * len(ordered) + 0.5))
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(ordered), size=k, replace=False)
    return {ordered[i] for i in sorted(picked)}


class _DayAccumulator:
    __slots__ = ("prices", "video", "above", "retarget")

    def __init__(self):
        self.prices = []
        self.video = 0
        self.above = 0
        self.retarget = 0


def build_daily_panel(events, ids=None):
    """Aggregate impressions into one CookieRecord per cookie.

    Parameters
    ----------
    events : iterable of ImpressionEvent, or pandas.DataFrame
        A DataFrame must carry the impression-log columns (``CSV_HEADER``).
    ids : set of cookie_id, optional
        Restrict the panel to these cookies; None keeps all. Requested ids
        with no impressions are omitted with a warning.

    Daily average price is the arithmetic mean of that day's prices
    (accumulated with exact summation, so the panel is insensitive to the
    input order); covariate shares are fractions of the day's impressions.
    Records are returned in ascending numeric cookie-id order.
    """
    if isinstance(events, pd.DataFrame):
        records = _panel_from_frame(events, ids)
    else:
        records = _panel_from_events(events, ids)
    if ids is not None:
        missing = set(ids) - {r.cookie_id for r in records}
        if missing:
            warnings.warn(
                f"{len(missing)} sampled cookies had no impressions and were omitted",
                stacklevel=2)
    return records


def _panel_from_events(events, ids):
    per_cookie = {}
    attrs = {}
    first_seen = {}
    for e in events:
        cid = e.cookie_id
        if ids is not None and cid not in ids:
            continue
        day = e.timestamp.date()
        acc = per_cookie.setdefault(cid, {}).setdefault(day, _DayAccumulator())
        acc.prices.append(e.price_cpm)
        acc.video += e.media_type == "video"
        acc.above += e.fold == "above"
        acc.retarget += e.retargeted
        ts = e.timestamp
        if cid not in first_seen or ts < first_seen[cid]:
            first_seen[cid] = ts
            attrs[cid] = {
                "country": e.country, "device_type": e.device_type,
                "os": e.os, "browser": e.browser,
            }
    records = []
    for cid in sorted(per_cookie, key=int):
        by_day = per_cookie[cid]
        dates = sorted(by_day)
        first = dates[0]
        days = []
        for d in dates:
            acc = by_day[d]
            n = len(acc.prices)
            avg = math.fsum(sorted(acc.prices)) / n
            days.append(DailyObservation(
                date=d,
                day_index=(d - first).days + 1,
                impressions=n,
                avg_price_cpm=avg,
                video_share=acc.video / n,
                above_fold_share=acc.above / n,
                retarget_share=acc.retarget / n,
            ))
        records.append(CookieRecord(
            cookie_id=cid,
            first_date=first,
            last_date=dates[-1],
            days=tuple(days),
            user_attrs=attrs[cid],
        ))
    return records


def _panel_from_frame(frame, ids):
    df = frame
    if ids is not None:
        df = df[df["cookie_id"].isin(ids)]
    if len(df) == 0:
        return []
    df = df.sort_values(
        ["cookie_id", "timestamp", "price_cpm"], kind="stable").reset_index(drop=True)
    day = df["timestamp"].str.slice(0, 10)
    work = pd.DataFrame({
        "cookie_id": df["cookie_id"],
        "day": day,
        "price": df["price_cpm"].astype(float),
        "video": (df["media_type"] == "video").astype(float),
        "above": (df["fold"] == "above").astype(float),
        "retarget": df["retargeted"].astype(int).astype(float),
    })
    agg = work.groupby(["cookie_id", "day"], sort=False).agg(
        impressions=("price", "size"),
        price_sum=("price", "sum"),
        video=("video", "sum"),
        above=("above", "sum"),
        retarget=("retarget", "sum"),
    ).reset_index()
    firsts = df.groupby("cookie_id", sort=False).first()
    records = []
    for cid, grp in agg.groupby("cookie_id", sort=False):
        dates = [date.fromisoformat(s) for s in grp["day"]]
        order = np.argsort(np.array([d.toordinal() for d in dates]))
        first = dates[order[0]]
        days = []
        for i in order:
            row = grp.iloc[i]
            n = int(row["impressions"])
            days.append(DailyObservation(
                date=dates[i],
                day_index=(dates[i] - first).days + 1,
                impressions=n,
                avg_price_cpm=row["price_sum"] / n,
                video_share=row["video"] / n,
                above_fold_share=row["above"] / n,
                retarget_share=row["retarget"] / n,
            ))
        f = firsts.loc[cid]
        records.append(CookieRecord(
            cookie_id=str(cid),
            first_date=first,
            last_date=dates[order[-1]],
            days=tuple(days),
            user_attrs={
                "country": f["country"], "device_type": f["device_type"],
                "os": f["os"], "browser": f["browser"],
            },
        ))
    records.sort(key=lambda r: int(r.cookie_id))
    return records


def lifetime_stats(record):
    """Per-cookie summary row (per-day rates and the impression-weighted CPM)."""
    life = record.observed_lifetime_days
    total = record.total_impressions
    lvc = record.observed_lvc
    price_sum = math.fsum(d.impressions * d.avg_price_cpm for d in record.days)
    return {
        "lifetime_days": life,
        "active_days": record.active_days,
        "activity_share": record.activity_share,
        "impressions": total,
        "impressions_per_day": total / life,
        "value_per_day": lvc / life,
        "mean_price_cpm": price_sum / total,
        "observed_lvc": lvc,
    }


def write_panel_csv(records, path):
    """Export the panel with prices and shares at 6 decimal places."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(PANEL_HEADER) + "\n")
        for r in records:
            for d in r.days:
                fh.write(
                    f"{r.cookie_id},{d.date.isoformat()},{d.day_index},"
                    f"{d.impressions},{d.avg_price_cpm:.6f},{d.video_share:.6f},"
                    f"{d.above_fold_share:.6f},{d.retarget_share:.6f}\n")


def write_attrs_csv(records, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(ATTRS_HEADER) + "\n")
        for r in records:
            a = r.user_attrs
            fh.write(f"{r.cookie_id},{a['country']},{a['device_type']},"
                     f"{a['os']},{a['browser']}\n")


def read_panel_csv(path, attrs_path=None):
    """Rebuild CookieRecords from an exported panel (and optional attrs) CSV."""
    attrs = {}
    if attrs_path is not None:
        adf = pd.read_csv(attrs_path, dtype=str)
        if list(adf.columns) != ATTRS_HEADER:
            raise SchemaError(f"bad attrs header {list(adf.columns)!r}")
        for row in adf.itertuples(index=False):
            attrs[row.cookie_id] = {
                "country": row.country, "device_type": row.device_type,
                "os": row.os, "browser": row.browser,
            }
    df = pd.read_csv(path, dtype={"cookie_id": str})
    if list(df.columns) != PANEL_HEADER:
        raise SchemaError(f"bad panel header {list(df.columns)!r}")
    unknown = {"country": "Unknown", "device_type": "Unknown",
               "os": "Unknown", "browser": "Unknown"}
    records = []
    for cid, grp in df.groupby("cookie_id", sort=False):
        grp = grp.sort_values("day_index")
        days = tuple(DailyObservation(
            date=date.fromisoformat(row.date),
            day_index=int(row.day_index),
            impressions=int(row.impressions),
            avg_price_cpm=float(row.avg_price_cpm),
            video_share=float(row.video_share),
            above_fold_share=float(row.above_fold_share),
            retarget_share=float(row.retarget_share),
        ) for row in grp.itertuples(index=False))
        records.append(CookieRecord(
            cookie_id=str(cid),
            first_date=days[0].date,
            last_date=days[-1].date,
            days=days,
            user_attrs=attrs.get(str(cid), dict(unknown)),
        ))
    records.sort(key=lambda r: int(r.cookie_id))
    return records
