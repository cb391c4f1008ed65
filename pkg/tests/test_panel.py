import datetime as dt
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothmpf.errors import DuplicateRecord, EmptyDesign, ParseError, UnknownVariable
from smoothmpf.panel import (
    INTERCEPT,
    PanelDataset,
    Predictor,
    Record,
    TaskSpec,
    build_design,
    calibration_cutoff,
    format_time,
    load_panel,
    parse_time,
    split_by_time,
    write_panel,
)


def day(s: str) -> int:
    return parse_time(s)


def write(tmp_path, text, name="p.csv"):
    path = tmp_path / name
    path.write_bytes(text.encode("utf-8"))
    return path


class TestLoadPanel:
    def test_header_only(self, tmp_path):
        panel = load_panel(write(tmp_path, "geo_id,time_value,signal,value,issue\n"))
        assert len(panel) == 0

    def test_round_trip(self, tmp_path):
        text = (
            "geo_id,time_value,signal,value,issue\n"
            "01001,2021-07-10,cases,12.5,2021-07-11\n"
            "01001,2021-07-11,cases,-0.25,\n"
            "01003,2021-07-10,cli,3.0,2021-07-12\n"
        )
        panel = load_panel(write(tmp_path, text))
        assert panel.records == (
            Record("01001", day("2021-07-10"), "cases", 12.5, day("2021-07-11")),
            Record("01001", day("2021-07-11"), "cases", -0.25, None),
            Record("01003", day("2021-07-10"), "cli", 3.0, day("2021-07-12")),
        )
        assert panel.dates
        out = tmp_path / "out.csv"
        write_panel(out, panel)
        assert load_panel(out).records == panel.records

    def test_crlf_and_no_issue_column(self, tmp_path):
        panel = load_panel(write(tmp_path, "geo_id,time_value,signal,value\r\na,3,y,1.5\r\n"))
        assert panel.records == (Record("a", 3, "y", 1.5, None),)
        assert not panel.dates

    def test_nan_value(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_panel(write(tmp_path, "geo_id,time_value,signal,value\na,1,y,1\na,2,y,NaN\n"))
        assert err.value.row == 3

    def test_bad_header(self, tmp_path):
        with pytest.raises(ParseError):
            load_panel(write(tmp_path, "geo,time,signal,value\n"))

    def test_duplicate(self, tmp_path):
        with pytest.raises(DuplicateRecord):
            load_panel(write(tmp_path, "geo_id,time_value,signal,value\na,1,y,1\na,1,y,2\n"))

    def test_same_cell_different_issue_is_fine(self, tmp_path):
        text = "geo_id,time_value,signal,value,issue\na,1,y,1,1\na,1,y,2,3\n"
        assert len(load_panel(write(tmp_path, text))) == 2

    def test_bad_date(self, tmp_path):
        with pytest.raises(ParseError):
            load_panel(write(tmp_path, "geo_id,time_value,signal,value\na,2021-13-01,y,1\n"))


def test_time_round_trip():
    assert format_time(parse_time("2021-10-01"), True) == "2021-10-01"
    assert parse_time("17") == 17
    assert parse_time("1970-01-01") == 0


def doctor_visits_panel():
    recs = []
    for d in range(1, 32):
        t = day(f"2020-12-{d:02d}")
        recs.append(Record("ca", t, "visits", 100.0 + d))
        recs.append(Record("ca", t, "cases", 1000.0 + d))
    return PanelDataset(tuple(recs), dates=True)


def test_worked_example_dec15():
    # forecast on Dec 15 for aheads {0, 7} with doctor-visit lags {7, 14}
    task = TaskSpec(
        response="cases",
        predictors=(Predictor("visits", (14, 7)),),
        aheads=(0, 7),
        forecast_times=(day("2020-12-15"),),
    )
    ds = build_design(doctor_visits_panel(), task)
    assert ds.column_index == (("visits", 7), ("visits", 14))
    np.testing.assert_array_equal(ds.X, [[100.0 + 8, 100.0 + 1]])  # Dec 8, Dec 1
    np.testing.assert_array_equal(ds.Y, [[1000.0 + 15, 1000.0 + 22]])  # Dec 15, Dec 22
    np.testing.assert_array_equal(ds.W, [[1, 1]])


def test_84_columns():
    recs = [Record("a", t, s, float(t)) for t in range(60) for s in ("cases", "cli", "hh_cli")]
    task = TaskSpec(
        response="cases",
        predictors=tuple(Predictor(s, tuple(range(1, 29))) for s in ("cases", "cli", "hh_cli")),
        aheads=tuple(range(28)),
    )
    ds = build_design(PanelDataset(tuple(recs)), task)
    assert ds.m == 84 and ds.q == 28
    assert ds.column_index[:2] == (("cases", 1), ("cases", 2))
    assert ds.column_index[28] == ("cli", 1)


def test_intercept_column():
    recs = [Record("a", t, "y", float(t)) for t in range(10)]
    task = TaskSpec("y", (Predictor(INTERCEPT, ()), Predictor("y", (1,))), (0,))
    ds = build_design(PanelDataset(tuple(recs)), task)
    np.testing.assert_array_equal(ds.X[:, 0], 1.0)
    assert ds.column_index[0] == (INTERCEPT, 0)


def test_unknown_variable():
    task = TaskSpec("cases", (Predictor("nope", (1,)),), (0,))
    with pytest.raises(UnknownVariable):
        build_design(doctor_visits_panel(), task)


def test_as_of_before_everything_is_empty():
    task = TaskSpec("cases", (Predictor("visits", (1,)),), (0, 7), as_of=day("2020-11-01"))
    with pytest.raises(EmptyDesign):
        build_design(doctor_visits_panel(), task)


def test_as_of_masks_future_cells():
    # W[t, a] = 1 iff t + a <= as_of, the staircase of unobserved cells near the as-of date
    as_of = day("2020-12-20")
    task = TaskSpec("cases", (Predictor("visits", (1,)),), tuple(range(8)), as_of=as_of)
    ds = build_design(doctor_visits_panel(), task)
    for (geo, t), w in zip(ds.row_index, ds.W):
        expected = [1.0 if t + a <= as_of else 0.0 for a in ds.aheads]
        np.testing.assert_array_equal(w, expected)
    assert max(t for _, t in ds.row_index) == as_of


def test_revisions_latest_issue_wins():
    recs = [Record("a", t, "x", 1.0) for t in range(5)]
    recs += [
        Record("a", 3, "y", 10.0, 3),
        Record("a", 3, "y", 11.0, 5),
        Record("a", 3, "y", 12.0, 9),
    ]
    panel = PanelDataset(tuple(recs))
    task = TaskSpec("y", (Predictor("x", (0,)),), (0,), forecast_times=(3,))
    for as_of, expected in [(4, 10.0), (5, 11.0), (8, 11.0), (9, 12.0), (None, 12.0)]:
        ds = build_design(panel, TaskSpec(**{**task.__dict__, "as_of": as_of}))
        assert ds.Y[0, 0] == expected
    with pytest.raises(EmptyDesign):
        build_design(panel, TaskSpec(**{**task.__dict__, "as_of": 2}))


def random_panel(rng, n_loc=3, n_t=12, p_missing=0.2):
    recs = []
    for g in range(n_loc):
        for t in range(n_t):
            for s in ("y", "x"):
                if rng.random() > p_missing:
                    recs.append(Record(f"L{g}", t, s, float(rng.normal())))
    return PanelDataset(tuple(recs))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_rows_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    panel = random_panel(rng)
    task = TaskSpec("y", (Predictor("x", (1, 3)), Predictor("y", (2,))), (0, 2, 4))
    have = {(r.geo_id, r.signal, r.time): r.value for r in panel.records}
    expected = []
    for t in panel.times:
        for g in panel.locations:
            feats = [have.get((g, v, t - lag)) for v, lag in task.column_index]
            resp = [have.get((g, "y", t + a)) for a in task.aheads]
            if all(f is not None for f in feats) and any(r is not None for r in resp):
                expected.append((g, t, feats, resp))
    if not expected:
        with pytest.raises(EmptyDesign):
            build_design(panel, task)
        return
    ds = build_design(panel, task)
    assert list(ds.row_index) == [(g, t) for g, t, _, _ in expected]
    for i, (_, _, feats, resp) in enumerate(expected):
        np.testing.assert_array_equal(ds.X[i], feats)
        np.testing.assert_array_equal(ds.W[i], [r is not None for r in resp])
        np.testing.assert_array_equal(ds.Y[i], [0.0 if r is None else r for r in resp])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 14), st.integers(0, 6))
def test_as_of_monotone(seed, as_of, extra):
    panel = random_panel(np.random.default_rng(seed), p_missing=0.0)
    task = TaskSpec("y", (Predictor("x", (1,)),), (0, 1, 3), as_of=as_of)
    later = TaskSpec("y", (Predictor("x", (1,)),), (0, 1, 3), as_of=as_of + extra)
    try:
        early = build_design(panel, task, retain_empty=True)
    except EmptyDesign:
        return
    late = build_design(panel, later, retain_empty=True)
    pos = {r: i for i, r in enumerate(late.row_index)}
    for i, r in enumerate(early.row_index):
        j = pos[r]
        assert np.all(late.W[j] >= early.W[i])
        obs = early.W[i] == 1
        np.testing.assert_array_equal(late.Y[j][obs], early.Y[i][obs])


def test_lag_order_permutes_columns():
    panel = random_panel(np.random.default_rng(3), p_missing=0.0)
    a = build_design(panel, TaskSpec("y", (Predictor("x", (3, 1, 2)),), (0,)))
    b = build_design(panel, TaskSpec("y", (Predictor("x", (1, 2, 3)),), (0,)))
    np.testing.assert_array_equal(a.X, b.X)
    c = build_design(panel, TaskSpec("y", (Predictor("y", (1,)), Predictor("x", (1,))), (0,)))
    d = build_design(panel, TaskSpec("y", (Predictor("x", (1,)), Predictor("y", (1,))), (0,)))
    np.testing.assert_array_equal(c.X, d.X[:, ::-1])


class TestSplit:
    def design(self, n_loc=4):
        recs = [Record(f"L{g}", t, s, float(t + g)) for g in range(n_loc) for t in range(0, 12) for s in "xy"]
        task = TaskSpec("y", (Predictor("x", (1,)),), (0,), forecast_times=tuple(range(1, 11)))
        return build_design(PanelDataset(tuple(recs)), task)

    def test_counts(self):
        ds = self.design()
        early, late = split_by_time(ds, 7)
        assert (early.n_rows, late.n_rows) == (7 * 4, 3 * 4)
        assert set(early.row_index) | set(late.row_index) == set(ds.row_index)
        assert not set(early.row_index) & set(late.row_index)

    def test_extremes(self):
        ds = self.design()
        assert split_by_time(ds, 100)[0].n_rows == ds.n_rows
        assert split_by_time(ds, 100)[1].n_rows == 0
        assert split_by_time(ds, -1)[0].n_rows == 0
        assert split_by_time(ds, -1)[1].n_rows == ds.n_rows


def test_four_week_calibration_boundary():
    # training times 10 Jul .. 1 Oct 2021: fit up to 3 Sep, calibrate 4 Sep .. 1 Oct
    start, end = dt.date(2021, 7, 10), dt.date(2021, 10, 1)
    n_days = (end - start).days + 1
    recs = []
    for k in range(-1, n_days):
        t = parse_time((start + dt.timedelta(days=k)).isoformat())
        recs += [Record("01001", t, "x", 1.0), Record("01001", t, "y", float(k))]
    panel = PanelDataset(tuple(recs), dates=True)
    times = tuple(parse_time((start + dt.timedelta(days=k)).isoformat()) for k in range(n_days))
    ds = build_design(panel, TaskSpec("y", (Predictor("x", (1,)),), (0,), forecast_times=times))
    cutoff = calibration_cutoff(ds, 4)
    assert format_time(cutoff, True) == "2021-09-03"
    fit, cal = split_by_time(ds, cutoff)
    assert format_time(min(t for _, t in cal.row_index), True) == "2021-09-04"
    assert cal.n_rows == 28
    assert fit.n_rows == n_days - 28


def test_task_from_dict():
    cfg = {
        "response": "cases",
        "predictors": [{"variable": "cases", "lags": {"start": 1, "end": 28}}, {"variable": "cli", "lags": [1, 7]}],
        "aheads": {"start": 0, "end": 27},
        "forecast_times": {"start": "2021-07-10", "end": "2021-10-01"},
        "as_of": "2021-10-01",
    }
    task = TaskSpec.from_dict(cfg)
    assert task.m == 30 and task.q == 28
    assert len(task.forecast_times) == 84
    assert task.as_of == parse_time("2021-10-01")
    assert TaskSpec.from_dict(task.to_dict(dates=True)) == task
    assert TaskSpec.from_dict(task.to_dict()) == task
