import warnings

import numpy as np
import pytest

from segspat.errors import AlignmentError, DataError, ParseError, RegionMismatchError, SchemaError
from segspat.panel import RegionSeries, build_rate_panel, ingest_csv, lag_exposure
from segspat.synthetic import SynthConfig, generate_synthetic, synthetic_series, write_series_csv

from conftest import write_counts


def _rows_two_regions():
    return [
        ["A", "2021-01-01", 1000000, 100, 1000, 10, 0],
        ["A", "2021-01-02", 1000000, 50, 1050, 12, 400000],
        ["A", "2021-01-03", 1000000, 0, 1050, 12, 500000],
        ["B", "2021-01-01", 500000, 5, 200, 1, 100],
        ["B", "2021-01-02", 500000, 5, 205, 1, 200],
        ["B", "2021-01-03", 500000, 5, 210, 2, 300],
    ]


def test_ingest_two_regions(tmp_path):
    series = ingest_csv(write_counts(tmp_path / "d.csv", _rows_two_regions()))
    assert [s.region_id for s in series] == ["A", "B"]
    assert all(len(s.dates) == 3 for s in series)
    assert series[0].population == 1e6


def test_ingest_is_order_invariant(tmp_path):
    rows = _rows_two_regions()
    a = build_rate_panel(ingest_csv(write_counts(tmp_path / "a.csv", rows)))
    b = build_rate_panel(ingest_csv(write_counts(tmp_path / "b.csv", rows[::-1])))
    assert a.shape == b.shape == (2, 3)
    np.testing.assert_array_equal(a.incidence, b.incidence)


def test_decreasing_cum_deaths_names_region_and_date(tmp_path):
    rows = _rows_two_regions()
    rows[4][5] = 0
    with pytest.raises(DataError, match=r"B.*2021-01-02"):
        ingest_csv(write_counts(tmp_path / "d.csv", rows))


def test_rate_arithmetic(tmp_path):
    panel = build_rate_panel(ingest_csv(write_counts(tmp_path / "d.csv", _rows_two_regions())))
    assert panel.incidence[0, 0] == pytest.approx(10.0)
    assert panel.lethality[0, 0] == pytest.approx(1.0)
    assert panel.vaccination[0, 1] == pytest.approx(40.0)


def test_lethality_example():
    d = np.arange("2021-01-01", "2021-01-02", dtype="datetime64[D]")
    s = RegionSeries("A", 1e6, d, [100.0], [1000.0], [50.0], [0.0])
    assert build_rate_panel([s]).lethality[0, 0] == pytest.approx(5.0)


def test_zero_cum_cases_gives_nan_lethality_with_warning():
    d = np.arange("2021-01-01", "2021-01-03", dtype="datetime64[D]")
    s = RegionSeries("A", 1e6, d, [0.0, 5.0], [0.0, 5.0], [0.0, 0.0], [0.0, 0.0])
    with pytest.warns(RuntimeWarning):
        p = build_rate_panel([s])
    assert np.isnan(p.lethality[0, 0]) and p.lethality[0, 1] == 0.0


def test_full_panel_shape(tmp_path):
    series, _ = synthetic_series(SynthConfig(seed=2))
    path = tmp_path / "s.csv"
    write_series_csv(series, path)
    panel = build_rate_panel(ingest_csv(path))
    assert panel.shape == (15, 192)


def test_incidence_round_trip_totals():
    rng = np.random.default_rng(0)
    d = np.arange("2021-01-01", "2021-03-01", dtype="datetime64[D]")
    pop = 3_456_789.0
    new = rng.integers(0, 5000, len(d)).astype(float)
    cum = 10 + np.cumsum(new)
    s = RegionSeries("A", pop, d, new, cum, np.floor(cum / 50), np.zeros(len(d)))
    p = build_rate_panel([s])
    total = np.sum(p.incidence[0] * pop / 100000.0)
    assert total == pytest.approx(new.sum(), rel=1e-9)


def test_schema_and_parse_errors(tmp_path):
    rows = _rows_two_regions()
    with pytest.raises(SchemaError, match="cum_deaths"):
        ingest_csv(write_counts(tmp_path / "a.csv", [r[:5] + r[6:] for r in rows],
                                fields=["region", "date", "population", "new_cases", "cum_cases", "fully_vaccinated"]))
    bad = [list(r) for r in rows]
    bad[2][3] = "lots"
    with pytest.raises(ParseError) as info:
        ingest_csv(write_counts(tmp_path / "b.csv", bad))
    assert info.value.row == 2


def test_custom_schema_and_delimiter(tmp_path):
    fields = ["ccaa", "fecha", "pob", "casos", "acum", "muertes", "vacunados"]
    path = write_counts(tmp_path / "d.csv", _rows_two_regions(), fields=fields, delimiter=";")
    schema = dict(zip(["region", "date", "population", "new_cases", "cum_cases", "cum_deaths", "fully_vaccinated"], fields))
    assert len(ingest_csv(path, schema=schema, delimiter=";")) == 2


def test_gap_rejected_or_filled(tmp_path):
    rows = [r for r in _rows_two_regions() if not (r[0] == "A" and r[1] == "2021-01-02")]
    path = write_counts(tmp_path / "d.csv", rows)
    with pytest.raises(DataError, match="A"):
        ingest_csv(path)
    a = ingest_csv(path, fill_gaps=True)[0]
    assert len(a.dates) == 3 and a.filled[1]
    assert np.isnan(a.new_cases[1]) and a.cum_cases[1] == a.cum_cases[0]


def test_misaligned_dates(tmp_path):
    rows = _rows_two_regions()
    rows = [r for r in rows if not (r[0] == "B" and r[1] == "2021-01-03")]
    with pytest.raises(AlignmentError):
        build_rate_panel(ingest_csv(write_counts(tmp_path / "d.csv", rows)))


def test_invariant_violations():
    d = np.arange("2021-01-01", "2021-01-03", dtype="datetime64[D]")
    with pytest.raises(DataError):
        RegionSeries("A", 100.0, d, [1.0, 1.0], [1.0, 2.0], [3.0, 3.0], [0.0, 0.0])
    with pytest.raises(DataError):
        RegionSeries("A", 100.0, d, [1.0, 1.0], [1.0, 2.0], [0.0, 0.0], [0.0, 101.0])
    with pytest.raises(DataError):
        RegionSeries("A", 100.0, d, [-1.0, 1.0], [1.0, 2.0], [0.0, 0.0], [0.0, 0.0])


def test_lag_exposure_shift_and_identity(small_synth):
    panel, _ = small_synth
    assert lag_exposure(panel, 0) is panel or np.array_equal(lag_exposure(panel, 0).vaccination, panel.vaccination)
    lagged = lag_exposure(panel, 7)
    np.testing.assert_array_equal(lagged.vaccination[:, 10], panel.vaccination[:, 3])
    assert np.isnan(lagged.vaccination[:, :7]).all()
    assert lagged.lag == 7


def test_lag_exposure_composes(small_synth):
    panel, _ = small_synth
    ab = lag_exposure(lag_exposure(panel, 3), 4)
    direct = lag_exposure(panel, 7)
    np.testing.assert_array_equal(ab.vaccination, direct.vaccination)
    assert ab.lag == 7


def test_lag_14_usable_dates():
    panel, _ = generate_synthetic(SynthConfig(seed=0))
    lagged = lag_exposure(panel, 14)
    assert (np.isfinite(lagged.vaccination).sum(axis=1) == 178).all()
    with pytest.raises(ValueError):
        lag_exposure(panel, 192)
    with pytest.raises(ValueError):
        lag_exposure(panel, -1)


def test_reorder(small_synth):
    panel, _ = small_synth
    rev = panel.reorder(panel.regions[::-1])
    np.testing.assert_array_equal(rev.incidence, panel.incidence[::-1])
    with pytest.raises(RegionMismatchError):
        panel.reorder(panel.regions[:-1])


def test_panel_csv(tmp_path, small_synth):
    panel, _ = small_synth
    panel.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "region,date,incidence,lethality,vaccination"
    assert len(lines) == 1 + panel.incidence.size


def test_no_warning_on_clean_panel(small_synth):
    panel, _ = small_synth
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        lag_exposure(panel, 2)
