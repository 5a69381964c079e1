"""Synthetic county epidemics for tests, demos and desk-scale benchmarks.

Each county gets one or two epidemic waves in daily cases, a weekly
reporting cycle, and deaths that follow cases with a fixed lag. The output
has the same layout as :func:`courage.data.assemble_records`, and
:func:`write_source_csvs` renders it as JHU CSSE / Google mobility files so
the whole ingest path can be exercised offline.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .data import MOBILITY_COLUMNS, MOBILITY_NAMES, STATE_CODES, assemble_records, state_records

_STATES = [("New York", 36), ("Texas", 48), ("Ohio", 39), ("California", 6), ("Illinois", 17),
           ("Georgia", 13), ("Florida", 12), ("Michigan", 26)]


def make_county_epidemics(n_counties: int = 50, n_days: int = 150, n_states: int = 5,
                          start: str = "2020-03-01", death_lag: int = 10, seed: int = 0) -> pd.DataFrame:
    """Raw cumulative county series (JHU-like columns, no mobility)."""
    if not 1 <= n_states <= len(_STATES):
        raise ValueError(f"n_states must be in 1..{len(_STATES)}")
    rng = np.random.default_rng(seed)
    dates = pd.date_range(start, periods=n_days, freq="D")
    t = np.arange(n_days + death_lag, dtype=np.float64)
    rows = []
    for i in range(n_counties):
        state, state_fips = _STATES[i % n_states]
        fips = f"{state_fips:02d}{2 * (i // n_states) + 1:03d}"
        population = float(np.round(10 ** rng.uniform(4.5, 6.2)))
        rate = np.zeros_like(t)
        for _ in range(rng.integers(1, 3)):
            peak = rng.uniform(0.1, 1.0) * len(t)
            width = rng.uniform(12, 30)
            height = rng.uniform(2e-4, 1.2e-3)
            rate += height * np.exp(-0.5 * ((t - peak) / width) ** 2)
        weekly = 1.0 + 0.25 * np.sin(2 * np.pi * t / 7.0 + rng.uniform(0, 2 * np.pi))
        cases_mean = population * (rate + 2e-5) * weekly
        deaths_mean = 0.02 * np.concatenate([np.full(death_lag, cases_mean[0]), cases_mean[:-death_lag]]) * weekly
        cases = rng.poisson(cases_mean[death_lag:])
        deaths = rng.poisson(deaths_mean[death_lag:])
        cum_c = np.cumsum(cases).astype(np.float64)
        cum_d = np.cumsum(deaths).astype(np.float64)
        for d, cc, cd in zip(dates, cum_c, cum_d):
            rows.append((fips, "county", STATE_CODES[state], f"County {fips}", d, cc, cd, population))
    return pd.DataFrame(rows, columns=["location_id", "level", "state", "name", "date",
                                       "cum_cases", "cum_deaths", "population"])


def make_mobility(jhu: pd.DataFrame, seed: int = 0, missing: float = 0.02) -> pd.DataFrame:
    """Mobility deltas: a slow per-county drift plus a weekday pattern, with random gaps."""
    rng = np.random.default_rng(seed + 1)
    parts = []
    for loc, g in jhu.groupby("location_id", sort=True):
        n = len(g)
        dow = g["date"].dt.dayofweek.to_numpy()
        frame = {"location_id": loc, "date": g["date"].to_numpy()}
        for j, name in enumerate(MOBILITY_NAMES):
            drift = np.cumsum(rng.normal(0, 1.0, n)) - 20.0 + 10.0 * (name == "residential")
            vals = np.round(drift + 5.0 * (dow >= 5) * (1 if j in (2, 5) else -1))
            vals[rng.random(n) < missing] = np.nan
            frame[name] = vals
        parts.append(pd.DataFrame(frame))
    return pd.concat(parts, ignore_index=True)


def make_synthetic_records(n_counties: int = 50, n_days: int = 150, n_states: int = 5,
                           start: str = "2020-03-01", seed: int = 0) -> tuple[pd.DataFrame, pd.DataFrame]:
    """County and state records ready for :func:`courage.data.build_windows`."""
    jhu = make_county_epidemics(n_counties, n_days, n_states, start, seed=seed)
    county = assemble_records(jhu, make_mobility(jhu, seed))
    return county, state_records(county)


def write_source_csvs(directory, jhu: pd.DataFrame, mobility: pd.DataFrame | None = None) -> dict[str, Path]:
    """Write JHU-style cases/deaths wide CSVs and a Google-style mobility CSV."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    by_code = {v: k for k, v in STATE_CODES.items()}
    meta = jhu.drop_duplicates("location_id").set_index("location_id")
    paths = {}
    for kind, col in (("confirmed", "cum_cases"), ("deaths", "cum_deaths")):
        wide = jhu.pivot(index="location_id", columns="date", values=col)
        wide.columns = [f"{d.month}/{d.day}/{d.strftime('%y')}" for d in wide.columns]
        head = pd.DataFrame({
            "UID": [int("840" + f) for f in wide.index],
            "iso2": "US", "iso3": "USA", "code3": 840,
            "FIPS": [f"{float(f):.1f}" for f in wide.index],
            "Admin2": [meta.loc[f, "name"] for f in wide.index],
            "Province_State": [by_code[meta.loc[f, "state"]] for f in wide.index],
            "Country_Region": "US", "Lat": 0.0, "Long_": 0.0,
            "Combined_Key": [f"{meta.loc[f, 'name']}, {by_code[meta.loc[f, 'state']]}, US" for f in wide.index],
        }, index=wide.index)
        if kind == "deaths":
            head["Population"] = [int(meta.loc[f, "population"]) for f in wide.index]
        out = pd.concat([head, wide.astype(np.int64)], axis=1)
        path = directory / f"time_series_covid19_{kind}_US.csv"
        out.to_csv(path, index=False, lineterminator="\n")
        paths[kind] = path
    if mobility is not None:
        m = mobility.merge(meta[["state", "name"]], left_on="location_id", right_index=True)
        out = pd.DataFrame({
            "country_region_code": "US", "country_region": "United States",
            "sub_region_1": m["state"].map(by_code), "sub_region_2": m["name"],
            "metro_area": "", "iso_3166_2_code": "", "census_fips_code": m["location_id"],
            "place_id": "", "date": pd.to_datetime(m["date"]).dt.strftime("%Y-%m-%d"),
        })
        for src, dst in zip(MOBILITY_COLUMNS, MOBILITY_NAMES):
            out[src] = m[dst].to_numpy()
        path = directory / "Global_Mobility_Report.csv"
        out.to_csv(path, index=False, lineterminator="\n")
        paths["mobility"] = path
    return paths
