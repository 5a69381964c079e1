from datetime import date

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from courage.data import build_windows, evaluation_anchors, ingest, split
from courage.forecast import (DEFAULT_PERIODS, ForecastError, ForecastSet, aggregate_to_state,
                              county_to_state, ensemble_average, evaluate_periods, mae, naive_forecast,
                              naive_from_windows, read_forecasts, truth_table, write_forecasts)

D = date(2020, 3, 25)


def fs(preds, model="m", anchor=D, level="county"):
    return ForecastSet(model, anchor, preds, level)


@pytest.fixture(scope="module")
def fixture_records():
    from pathlib import Path
    root = Path(__file__).parent / "fixtures"
    return ingest(root / "time_series_covid19_confirmed_US.csv", root / "time_series_covid19_deaths_US.csv",
                  root / "Global_Mobility_Report.csv")


def test_aggregation_examples():
    states = {"1": "A", "2": "A", "3": "A", "4": "B"}
    out = aggregate_to_state(fs({"1": (3, 30), "2": (4, 40), "3": (5, 50), "4": (9, 1)}), states)
    assert out.predictions == {"A": (12.0, 120.0), "B": (9.0, 1.0)}
    assert out.level == "state"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e4), st.floats(0, 1e4)), min_size=1, max_size=20), st.integers(1, 4))
def test_aggregation_partition_identity(values, n_states):
    preds = {f"{i:05d}": v for i, v in enumerate(values)}
    states = {k: f"S{int(k) % n_states}" for k in preds}
    agg = aggregate_to_state(fs(preds), states)
    for st_ in set(states.values()):
        expected = [0.0, 0.0]
        for k in sorted(preds):
            if states[k] == st_:
                expected[0] += preds[k][0]
                expected[1] += preds[k][1]
        assert agg.predictions[st_] == tuple(expected)
    assert np.isclose(sum(p[0] for p in agg.predictions.values()), sum(v[0] for v in values))


def test_aggregation_unknown_county():
    with pytest.raises(ForecastError):
        aggregate_to_state(fs({"9": (1, 1)}), {})


def test_naive_examples():
    recs = pd.DataFrame({"location_id": ["1"] * 7 + ["2"] * 7, "level": "county",
                         "date": list(pd.date_range("2020-03-19", D)) * 2,
                         "new_deaths": [1.0] * 7 + [0.0] * 7})
    out = naive_forecast(recs, D)
    assert out.predictions == {"1": (7.0, 7.0), "2": (0.0, 0.0)}


def test_naive_consistency(fixture_records):
    county, state = fixture_records
    for anchor in (date(2020, 3, 25), date(2020, 4, 3)):
        c = aggregate_to_state(naive_forecast(county, anchor), dict(zip(county.location_id, county.state)))
        assert c.predictions == naive_forecast(state, anchor).predictions


def test_naive_from_windows_matches_records(fixture_records):
    county, _ = fixture_records
    ws = build_windows(county)
    sets = {f.anchor: f for f in naive_from_windows(ws)}
    assert sets[D].predictions == naive_forecast(county, D).predictions


def test_ensemble_examples():
    a = fs({"1": (10.0, 20.0)})
    assert ensemble_average(a, a).predictions == a.predictions
    assert ensemble_average(a, fs({"1": (20.0, 40.0)})).predictions == {"1": (15.0, 30.0)}
    with pytest.raises(ForecastError):
        ensemble_average(a, fs({"2": (1.0, 1.0)}))


def test_ensemble_commutes_with_aggregation(rng):
    states = {f"{i:05d}": f"S{i % 3}" for i in range(12)}
    a = fs({k: tuple(rng.uniform(0, 100, 2)) for k in states})
    b = fs({k: tuple(rng.uniform(0, 100, 2)) for k in states})
    one = aggregate_to_state(ensemble_average(a, b), states)
    two = ensemble_average(aggregate_to_state(a, states), aggregate_to_state(b, states))
    for k in one.predictions:
        assert np.allclose(one.predictions[k], two.predictions[k], atol=1e-9, rtol=0)


def test_mae_examples():
    truth = {("1", D): (7.0, 7.0), ("2", D): (3.0, 1.0)}
    assert mae(fs({"1": (7.0, 7.0), "2": (3.0, 1.0)}), truth).tolist() == [0.0, 0.0]
    assert mae(fs({"1": (5.0, 7.0)}), truth)[0] == 2.0
    a = mae(fs({"1": (1.0, 2.0), "2": (5.0, 9.0)}), truth)
    b = mae(fs({"2": (5.0, 9.0), "1": (1.0, 2.0)}), truth)
    assert np.array_equal(a, b)


def test_periods(fixture_records):
    county, _ = fixture_records
    ws = build_windows(county)
    ev = evaluation_anchors(ws, np.datetime64("2020-03-25"))
    truth = truth_table(ev)
    sets = naive_from_windows(ev)
    whole = evaluate_periods({"naive": sets}, truth, [(date(2020, 3, 1), date(2020, 5, 1))])
    assert whole.lookup("naive", "county", 1) == mae(sets, truth)[0]
    halves = evaluate_periods({"naive": sets}, truth, [(date(2020, 3, 1), date(2020, 4, 5)),
                                                       (date(2020, 4, 6), date(2020, 5, 1))])
    rows = halves.to_frame()
    for h in (1, 2):
        r = rows[rows.horizon == h]
        weights = r["n_anchors"] * r["n_locations"]
        assert np.isclose((r["mae"] * weights).sum() / weights.sum(), mae(sets, truth)[h - 1])
    empty = evaluate_periods({"naive": sets}, truth, [(date(2021, 1, 1), date(2021, 2, 1))])
    assert np.isnan(empty.lookup("naive", "county", 1))
    assert empty.excluded["naive/county"] == sum(len(s) for s in sets)


def test_default_periods():
    assert DEFAULT_PERIODS[0] == (date(2020, 8, 23), date(2020, 9, 24))
    assert DEFAULT_PERIODS[-1] == (date(2021, 1, 18), date(2021, 3, 14))
    assert len(DEFAULT_PERIODS) == 5


def test_periods_must_be_ordered():
    with pytest.raises(ValueError):
        evaluate_periods({}, {}, [(date(2020, 5, 1), date(2020, 6, 1)), (date(2020, 3, 1), date(2020, 4, 1))])


def test_forecast_csv_round_trip(tmp_path, rng):
    sets = [fs({f"{i:05d}": tuple(rng.uniform(0, 50, 2)) for i in range(4)}, anchor=a)
            for a in (date(2020, 3, 25), date(2020, 4, 1))]
    write_forecasts(tmp_path / "f.csv", sets)
    back = read_forecasts(tmp_path / "f.csv")
    assert [b.predictions for b in back] == [s.predictions for s in sets]
    write_forecasts(tmp_path / "g.csv", back)
    assert (tmp_path / "f.csv").read_bytes() == (tmp_path / "g.csv").read_bytes()


def test_county_to_state(fixture_records):
    county, _ = fixture_records
    mapping = county_to_state(build_windows(county))
    assert mapping["36047"] == "NY" and mapping["39061"] == "OH"


def test_split_windows_have_truth(fixture_records):
    county, _ = fixture_records
    sp = split(build_windows(county), 0.41)
    assert str(sp.cutoff) == "2020-03-25"
