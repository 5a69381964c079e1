"""Ingest JHU CSSE and Google mobility CSVs and turn them into model windows.

Records live in a long ``pandas.DataFrame`` (one row per location-day).
Windows live in a :class:`WindowSet`, a bundle of parallel numpy arrays;
indexing it yields a :class:`SampleWindow`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta
from typing import Iterator, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

log = logging.getLogger(__name__)

CACHE_VERSION = 1

MOBILITY_COLUMNS = [
    "retail_and_recreation_percent_change_from_baseline",
    "grocery_and_pharmacy_percent_change_from_baseline",
    "parks_percent_change_from_baseline",
    "transit_stations_percent_change_from_baseline",
    "workplaces_percent_change_from_baseline",
    "residential_percent_change_from_baseline",
]
MOBILITY_NAMES = ["retail", "grocery", "parks", "transit", "workplaces", "residential"]

FEATURE_NAMES = [
    "new_cases", "new_deaths", "smoothed_cases", "smoothed_deaths",
    *MOBILITY_NAMES, "log10_population",
]
N_FEATURES = len(FEATURE_NAMES)
HORIZON = 7  # days per target week

STATE_CODES = {
    "Alabama": "AL", "Alaska": "AK", "Arizona": "AZ", "Arkansas": "AR", "California": "CA",
    "Colorado": "CO", "Connecticut": "CT", "Delaware": "DE", "District of Columbia": "DC",
    "Florida": "FL", "Georgia": "GA", "Hawaii": "HI", "Idaho": "ID", "Illinois": "IL",
    "Indiana": "IN", "Iowa": "IA", "Kansas": "KS", "Kentucky": "KY", "Louisiana": "LA",
    "Maine": "ME", "Maryland": "MD", "Massachusetts": "MA", "Michigan": "MI", "Minnesota": "MN",
    "Mississippi": "MS", "Missouri": "MO", "Montana": "MT", "Nebraska": "NE", "Nevada": "NV",
    "New Hampshire": "NH", "New Jersey": "NJ", "New Mexico": "NM", "New York": "NY",
    "North Carolina": "NC", "North Dakota": "ND", "Ohio": "OH", "Oklahoma": "OK", "Oregon": "OR",
    "Pennsylvania": "PA", "Rhode Island": "RI", "South Carolina": "SC", "South Dakota": "SD",
    "Tennessee": "TN", "Texas": "TX", "Utah": "UT", "Vermont": "VT", "Virginia": "VA",
    "Washington": "WA", "West Virginia": "WV", "Wisconsin": "WI", "Wyoming": "WY",
}
# contiguous states plus DC; Hawaii, Alaska and the territories are left out
MAINLAND_STATES = frozenset(s for s in STATE_CODES if s not in ("Alaska", "Hawaii"))

_JHU_META = {"UID", "iso2", "iso3", "code3", "FIPS", "Admin2", "Province_State", "Country_Region",
             "Lat", "Long_", "Combined_Key", "Population"}


class FormatError(ValueError):
    """An input file does not have the expected layout."""


class SplitError(ValueError):
    pass


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DailyRecord:
    location_id: str
    date: date
    cum_cases: float
    cum_deaths: float
    mobility: tuple[float, ...]
    population: float


def iter_daily_records(records: pd.DataFrame) -> Iterator[DailyRecord]:
    mob = [c for c in MOBILITY_NAMES if c in records.columns]
    for row in records.itertuples(index=False):
        yield DailyRecord(
            location_id=row.location_id,
            date=pd.Timestamp(row.date).date(),
            cum_cases=float(row.cum_cases),
            cum_deaths=float(row.cum_deaths),
            mobility=tuple(float(getattr(row, c)) for c in mob),
            population=float(row.population),
        )


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _normalise_fips(value) -> str | None:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    text = str(value).strip()
    if not text or text.lower() == "nan":
        return None
    try:
        return f"{int(float(text)):05d}"
    except ValueError:
        return None


def _date_columns(columns: Sequence[str], path) -> list[tuple[str, pd.Timestamp]]:
    out = []
    for col in columns:
        if col in _JHU_META:
            continue
        try:
            out.append((col, pd.Timestamp(datetime.strptime(col.strip(), "%m/%d/%y"))))
        except ValueError:
            raise FormatError(f"{path}: column header {col!r} is neither metadata nor a m/d/yy date") from None
    if not out:
        raise FormatError(f"{path}: no date columns found")
    return out


def _read_jhu_wide(path, value_name: str, states) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"FIPS": str})
    for col in ("FIPS", "Admin2", "Province_State"):
        if col not in df.columns:
            raise FormatError(f"{path}: missing required column {col!r}")
    dates = _date_columns(list(df.columns), path)
    df = df[df["Province_State"].isin(states)].copy()
    df["location_id"] = df["FIPS"].map(_normalise_fips)
    missing = df["location_id"].isna()
    for _, row in df[missing].iterrows():
        log.warning("%s: skipping row without FIPS (%s, %s)", path, row["Admin2"], row["Province_State"])
    df = df[~missing]
    id_cols = ["location_id", "Admin2", "Province_State"] + (["Population"] if "Population" in df.columns else [])
    wide = df[id_cols + [c for c, _ in dates]].rename(columns={c: ts for c, ts in dates})
    long = wide.melt(id_vars=id_cols, var_name="date", value_name=value_name)
    long["date"] = pd.to_datetime(long["date"])
    return long


def parse_jhu(cases_path, deaths_path, states=MAINLAND_STATES) -> pd.DataFrame:
    """Long-format county records from the JHU CSSE wide time-series files.

    Columns: ``location_id, level, state, name, date, cum_cases, cum_deaths,
    population``. Population comes from the deaths file. Rows outside
    ``states``, without a FIPS code or with a non-positive population are
    dropped.
    """
    states = frozenset(states)
    cases = _read_jhu_wide(cases_path, "cum_cases", states)
    deaths = _read_jhu_wide(deaths_path, "cum_deaths", states)
    if "Population" not in deaths.columns:
        raise FormatError(f"{deaths_path}: deaths file must carry a Population column")
    merged = deaths.merge(cases[["location_id", "date", "cum_cases"]], on=["location_id", "date"], how="inner")
    dropped = set(deaths["location_id"]) ^ set(cases["location_id"])
    if dropped:
        log.warning("FIPS present in only one of the JHU files, dropped: %s", sorted(dropped)[:10])
    bad_pop = merged["Population"].fillna(0) <= 0
    if bad_pop.any():
        for fips in sorted(merged.loc[bad_pop, "location_id"].unique()):
            log.warning("skipping FIPS %s: population is not positive", fips)
        merged = merged[~bad_pop]
    out = pd.DataFrame({
        "location_id": merged["location_id"].astype(str),
        "level": "county",
        "state": merged["Province_State"].map(STATE_CODES),
        "name": merged["Admin2"].fillna("").astype(str),
        "date": merged["date"],
        "cum_cases": merged["cum_cases"].astype(np.float64),
        "cum_deaths": merged["cum_deaths"].astype(np.float64),
        "population": merged["Population"].astype(np.float64),
    })
    return out.sort_values(["location_id", "date"], kind="mergesort").reset_index(drop=True)


_COUNTY_SUFFIX = re.compile(r"\s+(county|parish|borough|city and borough|census area|municipality)$")


def _county_key(state: str, county: str) -> tuple[str, str]:
    name = _COUNTY_SUFFIX.sub("", str(county).strip().lower())
    return str(state).strip().lower(), name


def county_lookup(records: pd.DataFrame) -> dict[tuple[str, str], str]:
    """Map ``(state name, county name)`` to FIPS for joining mobility rows."""
    by_code = {v: k for k, v in STATE_CODES.items()}
    pairs = records[["location_id", "state", "name"]].drop_duplicates()
    return {_county_key(by_code[s], n): fid for fid, s, n in pairs.itertuples(index=False)}


def parse_mobility(path, lookup: dict[tuple[str, str], str] | None = None) -> pd.DataFrame:
    """County rows of a Google community-mobility report.

    Rows are keyed by ``census_fips_code`` when present, else by name via
    ``lookup``. Returns ``location_id, date`` plus the six mobility columns
    (percent change from baseline, kept as-is). Unmatched regions are
    dropped with a warning; duplicated location-days keep the last row.
    """
    df = pd.read_csv(path, dtype={"census_fips_code": str}, low_memory=False)
    need = {"sub_region_1", "sub_region_2", "date", *MOBILITY_COLUMNS}
    if not need <= set(df.columns):
        raise FormatError(f"{path}: missing columns {sorted(need - set(df.columns))}")
    if "country_region_code" in df.columns:
        df = df[df["country_region_code"] == "US"]
    df = df[df["sub_region_2"].notna() & (df["sub_region_2"].astype(str).str.strip() != "")]
    fips = df["census_fips_code"].map(_normalise_fips) if "census_fips_code" in df.columns else pd.Series(None, index=df.index)
    if lookup is not None:
        by_name = [lookup.get(_county_key(s, c)) for s, c in zip(df["sub_region_1"], df["sub_region_2"])]
        fips = fips.where(fips.notna(), pd.Series(by_name, index=df.index))
    df = df.assign(location_id=fips)
    unmatched = df["location_id"].isna()
    if unmatched.any():
        for s, c in df.loc[unmatched, ["sub_region_1", "sub_region_2"]].drop_duplicates().itertuples(index=False):
            log.warning("mobility region not matched to a FIPS code, dropped: %s / %s", c, s)
        df = df[~unmatched]
    out = pd.DataFrame({"location_id": df["location_id"].astype(str), "date": pd.to_datetime(df["date"])})
    for src, dst in zip(MOBILITY_COLUMNS, MOBILITY_NAMES):
        out[dst] = pd.to_numeric(df[src], errors="coerce").astype(np.float64)
    dup = out.duplicated(["location_id", "date"], keep="last")
    if dup.any():
        log.warning("%d duplicate mobility location-days; keeping the last occurrence", int(dup.sum()))
        out = out[~dup]
    return out.sort_values(["location_id", "date"], kind="mergesort").reset_index(drop=True)


def daily_from_cumulative(cumulative) -> np.ndarray:
    """First difference with negatives (downward revisions) clamped to zero.

    The first day has no predecessor and counts as 0.
    """
    c = np.asarray(cumulative, dtype=np.float64)
    if c.size == 0:
        return c.copy()
    return np.maximum(np.diff(c, prepend=c[0]), 0.0)


def smooth7(series) -> np.ndarray:
    """Trailing 7-day mean; the first six days average what is available."""
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("smooth7 needs at least one value")
    padded = np.concatenate([np.zeros(6), x])
    windows = np.lib.stride_tricks.sliding_window_view(padded, 7)
    counts = np.minimum(np.arange(1, x.size + 1), 7)
    mean = windows.sum(axis=1) / counts
    # keep rounding from pushing the mean outside its window's range
    lo_pad = np.concatenate([np.full(6, np.inf), x])
    hi_pad = np.concatenate([np.full(6, -np.inf), x])
    lo = np.lib.stride_tricks.sliding_window_view(lo_pad, 7).min(axis=1)
    hi = np.lib.stride_tricks.sliding_window_view(hi_pad, 7).max(axis=1)
    return np.clip(mean, lo, hi)


def impute_mobility(values: pd.DataFrame, limit: int = 14) -> pd.DataFrame:
    """Forward-fill gaps of up to ``limit`` days, fill the rest with 0 (baseline)."""
    return values.ffill(limit=limit).fillna(0.0)


def assemble_records(jhu: pd.DataFrame, mobility: pd.DataFrame | None = None) -> pd.DataFrame:
    """Attach mobility and derived daily counts to county records.

    Cumulative counts are cleaned so they never decrease (the cleaned series
    is the running sum of the clamped daily counts).
    """
    df = jhu.sort_values(["location_id", "date"], kind="mergesort").reset_index(drop=True)
    if mobility is not None and len(mobility):
        df = df.merge(mobility, on=["location_id", "date"], how="left")
    else:
        for c in MOBILITY_NAMES:
            df[c] = np.nan
    parts = []
    for _, g in df.groupby("location_id", sort=True):
        g = g.sort_values("date", kind="mergesort").copy()
        full = pd.date_range(g["date"].iloc[0], g["date"].iloc[-1], freq="D")
        if len(full) != len(g):
            raise FormatError(f"location {g['location_id'].iloc[0]}: dates are not contiguous")
        g["new_cases"] = daily_from_cumulative(g["cum_cases"].to_numpy())
        g["new_deaths"] = daily_from_cumulative(g["cum_deaths"].to_numpy())
        g["cum_cases"] = g["cum_cases"].iloc[0] + np.cumsum(g["new_cases"].to_numpy())
        g["cum_deaths"] = g["cum_deaths"].iloc[0] + np.cumsum(g["new_deaths"].to_numpy())
        g[MOBILITY_NAMES] = impute_mobility(g[MOBILITY_NAMES]).to_numpy()
        parts.append(g)
    if not parts:
        raise FormatError("no county records left after filtering")
    out = pd.concat(parts, ignore_index=True)
    cols = ["location_id", "level", "state", "name", "date", "cum_cases", "cum_deaths",
            "new_cases", "new_deaths", *MOBILITY_NAMES, "population"]
    return out[cols]


def state_records(county: pd.DataFrame) -> pd.DataFrame:
    """Sum county records per state; mobility is the population-weighted mean."""
    df = county.copy()
    for c in MOBILITY_NAMES:
        df[c] = df[c] * df["population"]
    sums = df.groupby(["state", "date"], sort=True)[
        ["cum_cases", "cum_deaths", "new_cases", "new_deaths", *MOBILITY_NAMES, "population"]].sum()
    for c in MOBILITY_NAMES:
        sums[c] = sums[c] / sums["population"]
    sums = sums.reset_index()
    sums["location_id"] = sums["state"]
    sums["level"] = "state"
    sums["name"] = sums["state"]
    return sums[list(county.columns)].sort_values(["location_id", "date"], kind="mergesort").reset_index(drop=True)


# --------------------------------------------------------------------------
# windows
# --------------------------------------------------------------------------

@dataclass
class SampleWindow:
    location_id: str
    anchor: date
    features: np.ndarray   # (K, L), columns are consecutive days ending at anchor
    target1: float
    target2: float
    state: str = ""
    level: str = "county"

    @property
    def targets(self) -> np.ndarray:
        return np.array([self.target1, self.target2])


@dataclass
class WindowSet:
    """Parallel arrays describing ``n`` windows.

    ``targets`` are weekly sums of the smoothed daily deaths (training
    targets); ``truth`` holds the raw reported weekly totals for the same
    weeks; ``week0`` is the raw total of the input week.
    """

    location_id: np.ndarray
    state: np.ndarray
    level: np.ndarray
    anchor: np.ndarray          # datetime64[D]
    features: np.ndarray        # (n, K, L)
    targets: np.ndarray         # (n, 2)
    truth: np.ndarray           # (n, 2)
    week0: np.ndarray           # (n,)
    names: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.anchor)

    def __getitem__(self, i: int) -> SampleWindow:
        return SampleWindow(
            location_id=str(self.location_id[i]),
            anchor=pd.Timestamp(self.anchor[i]).date(),
            features=self.features[i],
            target1=float(self.targets[i, 0]),
            target2=float(self.targets[i, 1]),
            state=str(self.state[i]),
            level=str(self.level[i]),
        )

    def __iter__(self) -> Iterator[SampleWindow]:
        return (self[i] for i in range(len(self)))

    @property
    def window(self) -> int:
        return self.features.shape[-1]

    def subset(self, mask) -> "WindowSet":
        return WindowSet(self.location_id[mask], self.state[mask], self.level[mask], self.anchor[mask],
                         self.features[mask], self.targets[mask], self.truth[mask], self.week0[mask],
                         dict(self.names))

    @staticmethod
    def empty(n_features: int = N_FEATURES, window: int = 7) -> "WindowSet":
        return WindowSet(np.array([], dtype=str), np.array([], dtype=str), np.array([], dtype=str),
                         np.array([], dtype="datetime64[D]"), np.zeros((0, n_features, window)),
                         np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))

    @staticmethod
    def concat(sets: Sequence["WindowSet"]) -> "WindowSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            return WindowSet.empty()
        names = {}
        for s in sets:
            names.update(s.names)
        return WindowSet(*(np.concatenate([getattr(s, f) for s in sets]) for f in
                           ("location_id", "state", "level", "anchor", "features", "targets", "truth", "week0")),
                         names=names)

    def sort(self) -> "WindowSet":
        order = np.lexsort((self.location_id, self.anchor, self.level))
        return self.subset(order)

    def save(self, path) -> None:
        header = {"version": CACHE_VERSION, "feature_names": FEATURE_NAMES, "names": self.names}
        with open(path, "wb") as fh:
            np.savez(fh, header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
                     location_id=self.location_id.astype(str), state=self.state.astype(str),
                     level=self.level.astype(str), anchor=self.anchor.astype("datetime64[D]").astype(np.int64),
                     features=self.features, targets=self.targets, truth=self.truth, week0=self.week0)

    @staticmethod
    def load(path) -> "WindowSet":
        with np.load(path, allow_pickle=False) as d:
            header = json.loads(bytes(d["header"]).decode())
            if header.get("version") != CACHE_VERSION:
                raise FormatError(f"{path}: unsupported window cache version {header.get('version')!r}")
            return WindowSet(d["location_id"], d["state"], d["level"],
                             d["anchor"].astype("datetime64[D]"), d["features"], d["targets"],
                             d["truth"], d["week0"], header.get("names", {}))


def feature_matrix(g: pd.DataFrame) -> np.ndarray:
    """Per-day feature rows ``(T, K)`` for one location's records, in FEATURE_NAMES order."""
    new_cases = g["new_cases"].to_numpy(dtype=np.float64)
    new_deaths = g["new_deaths"].to_numpy(dtype=np.float64)
    cols = [new_cases, new_deaths, smooth7(new_cases), smooth7(new_deaths)]
    cols += [g[c].to_numpy(dtype=np.float64) for c in MOBILITY_NAMES]
    cols.append(np.log10(g["population"].to_numpy(dtype=np.float64)))
    return np.stack(cols, axis=1)


def build_windows(records: pd.DataFrame, L: int = 7, stride: int = 1, origin=None) -> WindowSet:
    """Slide an ``L``-day input window over every location's records.

    Each window needs ``2 * 7`` further days for its targets; locations with
    too little history contribute nothing. With ``origin`` set, anchors are
    restricted to dates congruent to it modulo ``stride``.
    """
    if L < 1 or stride < 1:
        raise ValueError("L and stride must be positive")
    sets = []
    names = {}
    for loc, g in records.groupby("location_id", sort=True):
        g = g.sort_values("date", kind="mergesort")
        T = len(g)
        names[str(loc)] = str(g["name"].iloc[0]) if "name" in g.columns else str(loc)
        if T < L + 2 * HORIZON:
            continue
        F = feature_matrix(g)
        dates = g["date"].to_numpy().astype("datetime64[D]")
        first = L - 1
        if origin is not None:
            offset = (dates[first] - np.datetime64(pd.Timestamp(origin).date(), "D")).astype(int)
            first += (-offset) % stride
        idx = np.arange(first, T - 2 * HORIZON, stride)
        if idx.size == 0:
            continue
        new_deaths = g["new_deaths"].to_numpy(dtype=np.float64)
        sm_deaths = F[:, 3]
        # 7-day block sums; padded so entry i of `trailing` ends at day i
        raw_w = np.lib.stride_tricks.sliding_window_view(new_deaths, HORIZON).sum(axis=1)
        sm_w = np.lib.stride_tricks.sliding_window_view(sm_deaths, HORIZON).sum(axis=1)
        trailing = np.lib.stride_tricks.sliding_window_view(
            np.concatenate([np.zeros(HORIZON - 1), new_deaths]), HORIZON).sum(axis=1)
        feats = np.lib.stride_tricks.sliding_window_view(F, L, axis=0)[idx - (L - 1)]  # (n, K, L)
        n = idx.size
        sets.append(WindowSet(
            location_id=np.full(n, str(loc)),
            state=np.full(n, str(g["state"].iloc[0])),
            level=np.full(n, str(g["level"].iloc[0])),
            anchor=dates[idx],
            features=np.ascontiguousarray(feats),
            targets=np.stack([sm_w[idx + 1], sm_w[idx + 1 + HORIZON]], axis=1),
            truth=np.stack([raw_w[idx + 1], raw_w[idx + 1 + HORIZON]], axis=1),
            week0=trailing[idx],
        ))
    out = WindowSet.concat(sets) if sets else WindowSet.empty(N_FEATURES, L)
    out.names = names
    return out


# --------------------------------------------------------------------------
# train/test split
# --------------------------------------------------------------------------

def _as_day(x) -> np.datetime64:
    return np.datetime64(pd.Timestamp(x).date(), "D")


def split_cutoff(start, end, fraction: float) -> np.datetime64:
    """Last training day when ``fraction`` of the days ``start..end`` go to training."""
    if not 0.0 < fraction < 1.0:
        raise SplitError(f"split fraction must lie in (0, 1), got {fraction}")
    start, end = _as_day(start), _as_day(end)
    n_days = int((end - start).astype(int)) + 1
    n_train = math.floor(round(fraction * n_days, 9))
    if n_train < 1:
        raise SplitError("split leaves no training days")
    return start + np.timedelta64(n_train - 1, "D")


def date_range_of(windows: WindowSet) -> tuple[np.datetime64, np.datetime64]:
    """First input day and last target day covered by ``windows``."""
    if not len(windows):
        raise SplitError("no windows")
    lo = windows.anchor.min() - np.timedelta64(windows.window - 1, "D")
    hi = windows.anchor.max() + np.timedelta64(2 * HORIZON, "D")
    return lo, hi


@dataclass(frozen=True)
class Split:
    train: WindowSet
    test: WindowSet
    cutoff: np.datetime64   # last training day

    @property
    def test_start(self) -> np.datetime64:
        return self.cutoff + np.timedelta64(1, "D")


def split(windows: WindowSet, fraction: float, start=None, end=None) -> Split:
    """Split windows by date so that no training target reaches the test period.

    Training windows have all 14 target days on or before the cutoff; test
    windows forecast only days after it (anchor on or after the cutoff).
    Windows straddling the cutoff are dropped.
    """
    lo, hi = date_range_of(windows)
    start = lo if start is None else _as_day(start)
    end = hi if end is None else _as_day(end)
    cutoff = split_cutoff(start, end, fraction)
    train_mask = windows.anchor + np.timedelta64(2 * HORIZON, "D") <= cutoff
    test_mask = windows.anchor >= cutoff
    return Split(windows.subset(train_mask), windows.subset(test_mask), cutoff)


def evaluation_anchors(windows: WindowSet, cutoff, stride: int = 7) -> WindowSet:
    """Test windows whose anchors fall every ``stride`` days from the cutoff."""
    cutoff = _as_day(cutoff)
    offset = (windows.anchor - cutoff).astype(int)
    return windows.subset((offset >= 0) & (offset % stride == 0))


# --------------------------------------------------------------------------
# standardisation
# --------------------------------------------------------------------------

class Standardizer(TransformerMixin, BaseEstimator):
    """Per-feature z-scores over (windows, days); per-horizon target z-scores.

    Statistics come from the data passed to :meth:`fit` only. Standard
    deviations below ``min_std`` are replaced by 1.
    """

    def __init__(self, min_std: float = 1e-8):
        self.min_std = min_std

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or len(X) == 0:
            raise ValueError(f"expected non-empty (n, K, L) features, got shape {X.shape}")
        self.feature_mean_ = X.mean(axis=(0, 2))
        self.feature_std_ = self._clamp(X.std(axis=(0, 2)))
        if y is not None:
            y = np.asarray(y, dtype=np.float64).reshape(len(X), -1)
            self.target_mean_ = y.mean(axis=0)
            self.target_std_ = self._clamp(y.std(axis=0))
        else:
            self.target_mean_ = np.zeros(2)
            self.target_std_ = np.ones(2)
        return self

    def _clamp(self, std: np.ndarray) -> np.ndarray:
        return np.where(std < self.min_std, 1.0, std)

    def transform(self, X):
        check_is_fitted(self, "feature_mean_")
        X = np.asarray(X, dtype=np.float64)
        return (X - self.feature_mean_[:, None]) / self.feature_std_[:, None]

    def inverse_transform(self, X):
        check_is_fitted(self, "feature_mean_")
        return np.asarray(X) * self.feature_std_[:, None] + self.feature_mean_[:, None]

    def transform_targets(self, y):
        check_is_fitted(self, "target_mean_")
        return (np.asarray(y, dtype=np.float64) - self.target_mean_) / self.target_std_

    def inverse_transform_targets(self, y):
        check_is_fitted(self, "target_mean_")
        return np.asarray(y) * self.target_std_ + self.target_mean_

    def apply(self, window: SampleWindow) -> SampleWindow:
        t = self.transform_targets(window.targets)
        return replace(window, features=self.transform(window.features[None])[0],
                       target1=float(t[0]), target2=float(t[1]))

    def inverse(self, window: SampleWindow) -> SampleWindow:
        t = self.inverse_transform_targets(window.targets)
        return replace(window, features=self.inverse_transform(window.features[None])[0],
                       target1=float(t[0]), target2=float(t[1]))

    def state_arrays(self) -> dict[str, np.ndarray]:
        check_is_fitted(self, "feature_mean_")
        return {"feature_mean": self.feature_mean_, "feature_std": self.feature_std_,
                "target_mean": self.target_mean_, "target_std": self.target_std_}

    @classmethod
    def from_arrays(cls, arrays) -> "Standardizer":
        s = cls()
        s.feature_mean_ = np.asarray(arrays["feature_mean"], dtype=np.float64)
        s.feature_std_ = np.asarray(arrays["feature_std"], dtype=np.float64)
        s.target_mean_ = np.asarray(arrays["target_mean"], dtype=np.float64)
        s.target_std_ = np.asarray(arrays["target_std"], dtype=np.float64)
        return s

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for k, v in sorted(self.state_arrays().items()):
            h.update(k.encode())
            h.update(np.ascontiguousarray(v, dtype=np.float64).tobytes())
        return h.hexdigest()


def fit_standardizer(train: WindowSet) -> Standardizer:
    return Standardizer().fit(train.features, train.targets)


# --------------------------------------------------------------------------
# end-to-end ingest
# --------------------------------------------------------------------------

def ingest(cases_path, deaths_path, mobility_path, states=MAINLAND_STATES,
           start=None, end=None) -> tuple[pd.DataFrame, pd.DataFrame]:
    """County and state records from the three raw CSV files."""
    jhu = parse_jhu(cases_path, deaths_path, states)
    if start is not None:
        jhu = jhu[jhu["date"] >= pd.Timestamp(start)]
    if end is not None:
        jhu = jhu[jhu["date"] <= pd.Timestamp(end)]
    mobility = parse_mobility(mobility_path, county_lookup(jhu))
    county = assemble_records(jhu, mobility)
    return county, state_records(county)


def to_day(x) -> date:
    return pd.Timestamp(x).date()


def day_offset(d, days: int) -> date:
    return to_day(d) + timedelta(days=days)
