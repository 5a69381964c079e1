"""County forecasts, state aggregation, baselines, ensembling and MAE reports."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .data import HORIZON, WindowSet, to_day

FORECAST_COLUMNS = ["model", "anchor_date", "location_id", "location_name", "week1_pred", "week2_pred"]
REPORT_COLUMNS = ["model", "split", "level", "horizon", "period_start", "period_end",
                  "mae", "n_anchors", "n_locations"]

DEFAULT_PERIODS = [
    (date(2020, 8, 23), date(2020, 9, 24)),
    (date(2020, 9, 25), date(2020, 10, 28)),
    (date(2020, 10, 29), date(2020, 12, 1)),
    (date(2020, 12, 2), date(2021, 1, 17)),
    (date(2021, 1, 18), date(2021, 3, 14)),
]


class ForecastError(ValueError):
    pass


class StandardizerMismatch(ForecastError):
    pass


@dataclass
class ForecastSet:
    """Week-1/Week-2 death forecasts for many locations from one anchor date."""

    model: str
    anchor: date
    predictions: dict[str, tuple[float, float]]
    level: str = "county"

    def __post_init__(self):
        self.anchor = to_day(self.anchor)
        for loc, (w1, w2) in self.predictions.items():
            if not (np.isfinite(w1) and np.isfinite(w2)):
                raise ForecastError(f"{self.model}: non-finite forecast for {loc}")

    def __len__(self) -> int:
        return len(self.predictions)

    def array(self, locations: Sequence[str] | None = None) -> np.ndarray:
        locations = sorted(self.predictions) if locations is None else locations
        return np.array([self.predictions[k] for k in locations], dtype=np.float64).reshape(-1, 2)


def _group_by_anchor(model: str, level: str, windows: WindowSet, preds: np.ndarray) -> list[ForecastSet]:
    out: dict[date, dict[str, tuple[float, float]]] = defaultdict(dict)
    for loc, anchor, (w1, w2) in zip(windows.location_id, windows.anchor, preds):
        out[to_day(anchor)][str(loc)] = (float(w1), float(w2))
    return [ForecastSet(model, a, dict(sorted(p.items())), level) for a, p in sorted(out.items())]


def predict_counties(estimator, windows: WindowSet, model: str = "county",
                     standardizer=None, level: str | None = None) -> list[ForecastSet]:
    """Forecasts in death counts (clamped at 0) for every window, one set per anchor.

    ``estimator`` is a fitted :class:`~courage.estimator.CourageRegressor`.
    Pass ``standardizer`` to assert it is the one the estimator was fit with.
    """
    if standardizer is not None and standardizer.fingerprint() != estimator.standardizer_.fingerprint():
        raise StandardizerMismatch("windows were standardised with a different standardizer than the model's")
    preds = estimator.predict(windows.features)
    if level is None:
        levels = set(windows.level.tolist())
        level = levels.pop() if len(levels) == 1 else "county"
    return _group_by_anchor(model, level, windows, preds)


def county_to_state(windows: WindowSet) -> dict[str, str]:
    return {str(loc): str(st) for loc, st in zip(windows.location_id, windows.state)}


def aggregate_to_state(forecast: ForecastSet, county_state: Mapping[str, str]) -> ForecastSet:
    """State totals as sums of county forecasts, added in ascending FIPS order."""
    w1: dict[str, float] = {}
    w2: dict[str, float] = {}
    for fips in sorted(forecast.predictions):
        if fips not in county_state:
            raise ForecastError(f"county {fips} has no known state")
        st = county_state[fips]
        p1, p2 = forecast.predictions[fips]
        w1[st] = w1.get(st, 0.0) + p1
        w2[st] = w2.get(st, 0.0) + p2
    preds = {st: (w1[st], w2[st]) for st in sorted(w1)}
    return ForecastSet(forecast.model, forecast.anchor, preds, "state")


def naive_forecast(records: pd.DataFrame, anchor, model: str = "naive") -> ForecastSet:
    """Persistence: the reported deaths of the 7 days ending at ``anchor``, for both weeks.

    Locations without all 7 days of history are left out.
    """
    anchor = pd.Timestamp(to_day(anchor))
    start = anchor - pd.Timedelta(days=HORIZON - 1)
    week = records[(records["date"] >= start) & (records["date"] <= anchor)]
    preds = {}
    for loc, g in week.groupby("location_id", sort=True):
        if g["date"].nunique() < HORIZON:
            continue
        total = float(g["new_deaths"].to_numpy(dtype=np.float64).sum())
        preds[str(loc)] = (total, total)
    levels = set(records["level"]) if "level" in records.columns else {"county"}
    return ForecastSet(model, anchor.date(), preds, levels.pop() if len(levels) == 1 else "county")


def naive_from_windows(windows: WindowSet, model: str = "naive") -> list[ForecastSet]:
    preds = np.repeat(windows.week0[:, None], 2, axis=1)
    levels = set(windows.level.tolist())
    return _group_by_anchor(model, levels.pop() if len(levels) == 1 else "county", windows, preds)


def ensemble_average(a: ForecastSet, b: ForecastSet, model: str = "courage") -> ForecastSet:
    """Per-location arithmetic mean of two forecast sets."""
    if a.anchor != b.anchor:
        raise ForecastError(f"anchors differ: {a.anchor} vs {b.anchor}")
    if a.predictions.keys() != b.predictions.keys():
        only_a = sorted(set(a.predictions) - set(b.predictions))
        only_b = sorted(set(b.predictions) - set(a.predictions))
        raise ForecastError(f"location sets differ: only in {a.model}: {only_a}; only in {b.model}: {only_b}")
    preds = {}
    for k in a.predictions:
        (a1, a2), (b1, b2) = a.predictions[k], b.predictions[k]
        preds[k] = ((a1 + b1) / 2.0, (a2 + b2) / 2.0)
    return ForecastSet(model, a.anchor, preds, a.level)


def ensemble_sets(a: Sequence[ForecastSet], b: Sequence[ForecastSet], model: str = "courage") -> list[ForecastSet]:
    by_anchor = {f.anchor: f for f in b}
    if set(by_anchor) != {f.anchor for f in a}:
        raise ForecastError("member forecasts cover different anchors")
    return [ensemble_average(f, by_anchor[f.anchor], model) for f in a]


# --------------------------------------------------------------------------
# scoring
# --------------------------------------------------------------------------

Truth = Mapping[tuple[str, date], tuple[float, float]]


def truth_table(windows: WindowSet, kind: str = "raw") -> dict[tuple[str, date], tuple[float, float]]:
    """Observed weekly totals keyed by ``(location, anchor)``.

    ``kind="raw"`` uses reported deaths; ``"smoothed"`` the 7-day-mean series.
    """
    if kind not in ("raw", "smoothed"):
        raise ValueError(f"truth kind must be 'raw' or 'smoothed', got {kind!r}")
    values = windows.truth if kind == "raw" else windows.targets
    return {(str(loc), to_day(a)): (float(v[0]), float(v[1]))
            for loc, a, v in zip(windows.location_id, windows.anchor, values)}


def _errors(forecasts: Iterable[ForecastSet], truth: Truth) -> np.ndarray:
    rows = []
    for f in forecasts:
        for loc, (p1, p2) in f.predictions.items():
            key = (loc, f.anchor)
            if key not in truth:
                raise ForecastError(f"no truth for {loc} at {f.anchor}")
            t1, t2 = truth[key]
            rows.append((abs(p1 - t1), abs(p2 - t2)))
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def mae(forecasts: ForecastSet | Iterable[ForecastSet], truth: Truth) -> np.ndarray:
    """Mean absolute error per horizon: ``[week1, week2]``."""
    if isinstance(forecasts, ForecastSet):
        forecasts = [forecasts]
    err = _errors(forecasts, truth)
    if len(err) == 0:
        raise ForecastError("no forecasts to score")
    return err.mean(axis=0)


def forecast_start(anchor: date) -> date:
    """First forecast day of an anchor; periods are matched on this date."""
    return to_day(anchor) + timedelta(days=1)


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)
    excluded: dict[str, int] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)

    def lookup(self, model: str, level: str, horizon: int, period_start=None) -> float:
        for r in self.rows:
            if (r["model"], r["level"], r["horizon"]) == (model, level, horizon) and \
                    (period_start is None or r["period_start"] == to_day(period_start)):
                return r["mae"]
        raise KeyError((model, level, horizon, period_start))


def evaluate_periods(forecasts: Mapping[str, Sequence[ForecastSet]], truth: Truth,
                     periods: Sequence[tuple] = DEFAULT_PERIODS, split: float | str = "",
                     level: str | None = None, report: EvalReport | None = None) -> EvalReport:
    """MAE for every (model, horizon, period).

    A forecast belongs to the period containing its first forecast day.
    Periods with nothing to score get ``mae = NaN`` rather than 0; forecasts
    outside every period are counted in ``report.excluded``.
    """
    periods = [(to_day(a), to_day(b)) for a, b in periods]
    for (a0, a1), (b0, b1) in zip(periods, periods[1:]):
        if not (a0 <= a1 < b0 <= b1):
            raise ValueError("periods must be sorted and non-overlapping")
    report = report if report is not None else EvalReport()
    for model, sets in forecasts.items():
        lvl = level or (sets[0].level if sets else "county")
        buckets: list[list[ForecastSet]] = [[] for _ in periods]
        excluded = 0
        for f in sets:
            day = forecast_start(f.anchor)
            for i, (lo, hi) in enumerate(periods):
                if lo <= day <= hi:
                    buckets[i].append(f)
                    break
            else:
                excluded += len(f)
        report.excluded[f"{model}/{lvl}"] = report.excluded.get(f"{model}/{lvl}", 0) + excluded
        for (lo, hi), bucket in zip(periods, buckets):
            err = _errors(bucket, truth)
            locs = {loc for f in bucket for loc in f.predictions}
            for h in (1, 2):
                report.rows.append({
                    "model": model, "split": split, "level": lvl, "horizon": h,
                    "period_start": lo, "period_end": hi,
                    "mae": float(err[:, h - 1].mean()) if len(err) else float("nan"),
                    "n_anchors": len({f.anchor for f in bucket if len(f)}),
                    "n_locations": len(locs),
                })
    return report


# --------------------------------------------------------------------------
# CSV surfaces
# --------------------------------------------------------------------------

def forecasts_to_frame(sets: Sequence[ForecastSet], names: Mapping[str, str] | None = None) -> pd.DataFrame:
    names = names or {}
    rows = [(f.model, f.anchor.isoformat(), loc, names.get(loc, loc), p1, p2)
            for f in sorted(sets, key=lambda s: s.anchor) for loc, (p1, p2) in sorted(f.predictions.items())]
    return pd.DataFrame(rows, columns=FORECAST_COLUMNS)


def write_forecasts(path, sets: Sequence[ForecastSet], names: Mapping[str, str] | None = None) -> None:
    # repr-style floats round-trip exactly
    forecasts_to_frame(sets, names).to_csv(path, index=False, float_format=None, lineterminator="\n")


def read_forecasts(path, level: str = "county") -> list[ForecastSet]:
    df = pd.read_csv(path, dtype={"location_id": str, "model": str, "anchor_date": str},
                     float_precision="round_trip")
    missing = set(FORECAST_COLUMNS) - set(df.columns)
    if missing:
        raise ForecastError(f"{path}: missing columns {sorted(missing)}")
    out = []
    for (model, anchor), g in df.groupby(["model", "anchor_date"], sort=True):
        preds = {loc: (float(a), float(b)) for loc, a, b in
                 zip(g["location_id"], g["week1_pred"], g["week2_pred"])}
        out.append(ForecastSet(model, date.fromisoformat(anchor), preds, level))
    return out


def write_report(path, report: EvalReport) -> None:
    df = report.to_frame()
    df["period_start"] = df["period_start"].map(lambda d: d.isoformat())
    df["period_end"] = df["period_end"].map(lambda d: d.isoformat())
    df.to_csv(path, index=False, na_rep="", lineterminator="\n")


def plot_frame(location: str, truth: Truth, members: Mapping[str, Sequence[ForecastSet]]) -> pd.DataFrame:
    """Per-location series for plotting: one row per forecast week and horizon."""
    by_model = {m: {f.anchor: f.predictions.get(location) for f in sets} for m, sets in members.items()}
    anchors = sorted({a for preds in by_model.values() for a, p in preds.items() if p is not None})
    rows = []
    for h in (1, 2):
        for a in anchors:
            t = truth.get((location, a))
            row = {"date": (to_day(a) + timedelta(days=1 + HORIZON * (h - 1))).isoformat(), "horizon": h,
                   "target": t[h - 1] if t else float("nan")}
            for m, preds in by_model.items():
                p = preds.get(a)
                row[m] = p[h - 1] if p else float("nan")
            rows.append(row)
    return pd.DataFrame(rows)
