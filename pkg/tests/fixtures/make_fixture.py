"""Regenerate the small JHU / mobility fixture used by the test-suite.

Nine counties in three states (plus Alaska and Hawaii rows that must be
filtered out). Each county reports ``before`` deaths per day through
2020-03-31 and ``after`` deaths per day from 2020-04-01, which makes the
Naive errors easy to work out by hand (see tests/test_acceptance.py).

    python tests/fixtures/make_fixture.py
"""

import csv
from datetime import date, timedelta
from pathlib import Path

HERE = Path(__file__).parent
DATES = [date(2020, 3, 1) + timedelta(days=i) for i in range(61)]
SWITCH = date(2020, 4, 1)

# fips, county, state, population, deaths/day before, deaths/day after
COUNTIES = [
    ("36001", "Albany", "New York", 305506, 2, 3),
    ("36005", "Bronx", "New York", 1418207, 5, 7),
    ("36047", "Kings", "New York", 2559903, 3, 3),
    ("48001", "Anderson", "Texas", 57735, 1, 4),
    ("48113", "Dallas", "Texas", 2635516, 4, 3),
    ("48201", "Harris", "Texas", 4713325, 6, 8),
    ("39035", "Cuyahoga", "Ohio", 1235072, 2, 4),
    ("39049", "Franklin", "Ohio", 1316756, 6, 1),
    ("39061", "Hamilton", "Ohio", 817473, 3, 1),
    ("02020", "Anchorage", "Alaska", 288000, 9, 9),
    ("15003", "Honolulu", "Hawaii", 974563, 1, 1),
]


def header(with_population):
    cols = ["UID", "iso2", "iso3", "code3", "FIPS", "Admin2", "Province_State", "Country_Region",
            "Lat", "Long_", "Combined_Key"]
    if with_population:
        cols.append("Population")
    return cols + [f"{d.month}/{d.day}/{d.strftime('%y')}" for d in DATES]


def series(before, after, base, scale=1, wobble=False):
    out, total = [], base
    for i, d in enumerate(DATES):
        if i:
            total += scale * (before if d < SWITCH else after) + (i % 3 if wobble else 0)
        out.append(total)
    return out


def meta(fips, county, state):
    return [f"840{fips}", "US", "USA", 840, f"{int(fips)}.0", county, state, "US", 0.0, 0.0,
            f"{county}, {state}, US"]


def main():
    with open(HERE / "time_series_covid19_deaths_US.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header(True))
        for fips, county, state, pop, a, b in COUNTIES:
            w.writerow(meta(fips, county, state) + [pop] + series(a, b, 10))
        # no FIPS: skipped with a warning
        w.writerow(["84099999", "US", "USA", 840, "", "Unassigned", "New York", "US", 0.0, 0.0,
                    "Unassigned, New York, US", 0] + series(1, 1, 0))
    with open(HERE / "time_series_covid19_confirmed_US.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header(False))
        for fips, county, state, pop, a, b in COUNTIES:
            w.writerow(meta(fips, county, state) + series(a, b, 100, scale=20, wobble=True))
        w.writerow(["84099999", "US", "USA", 840, "", "Unassigned", "New York", "US", 0.0, 0.0,
                    "Unassigned, New York, US"] + series(1, 1, 0))

    cols = ["country_region_code", "country_region", "sub_region_1", "sub_region_2", "metro_area",
            "iso_3166_2_code", "census_fips_code", "place_id", "date",
            "retail_and_recreation_percent_change_from_baseline",
            "grocery_and_pharmacy_percent_change_from_baseline", "parks_percent_change_from_baseline",
            "transit_stations_percent_change_from_baseline", "workplaces_percent_change_from_baseline",
            "residential_percent_change_from_baseline"]
    with open(HERE / "Global_Mobility_Report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        w.writerow(["CA", "Canada", "Ontario", "Toronto", "", "", "", "", "2020-03-01", 1, 2, 3, 4, 5, 6])
        for i, d in enumerate(DATES):
            w.writerow(["US", "United States", "New York", "", "", "US-NY", "", "", d.isoformat(),
                        -5, -5, -5, -5, -5, 5])
        for k, (fips, county, state, *_rest) in enumerate(COUNTIES[:9]):
            if county == "Hamilton":
                continue  # no mobility at all: imputed as 0
            for i, d in enumerate(DATES):
                if county == "Kings" and 10 <= i < 13:
                    continue  # three-day gap: forward-filled
                vals = [-10 - (i % 5) - k, -3 - k, 20 - i % 7, -30 - k, -25 - (i % 4), 8 + k % 3]
                code = "" if county == "Albany" else fips  # Albany joins by name
                w.writerow(["US", "United States", state, f"{county} County", "", "", code, "",
                            d.isoformat(), *vals])
        # duplicate location-day, the last one wins
        w.writerow(["US", "United States", "New York", "Bronx County", "", "", "36005", "", "2020-03-10",
                    -35, -35, -35, -35, -35, 35])
        # unknown county: dropped with a warning
        w.writerow(["US", "United States", "New York", "Atlantis County", "", "", "", "", "2020-03-10",
                    1, 1, 1, 1, 1, 1])


if __name__ == "__main__":
    main()
