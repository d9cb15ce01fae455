import numpy as np
import pandas as pd
import pytest

from yieldnet.data_model import (
    MISSING, N_SOIL, N_WEATHER, SOIL_COLUMNS, WEATHER_COLUMNS, DataError, EnvironmentTable, MarkerMatrix,
    PerformanceTable, SplitRule, ingest_dir, ingest_tables, join_trials, marker_names, read_genotype,
    read_performance, split_by_year, write_tables,
)


def _env(locations, years, rng):
    locs = [loc for loc in locations for _ in years]
    yrs = np.tile(np.asarray(years), len(locations))
    return EnvironmentTable(list(locations), rng.normal(size=(len(locations), N_SOIL)), locs, yrs,
                            rng.normal(size=(len(locs), N_WEATHER)))


def test_genotype_na_cell_becomes_missing(tmp_path):
    p = tmp_path / "genotype.csv"
    p.write_text("hybrid_id,m_0001,m_0002\nA,1,-1\nB,NA,0\nC,0,1\n")
    m = read_genotype(p)
    assert m.n_hybrids == 3 and m.n_markers == 2
    assert m.missing.sum() == 1
    assert m.values[1, 0] == MISSING


def test_genotype_empty_cell_is_missing(tmp_path):
    p = tmp_path / "genotype.csv"
    p.write_text("hybrid_id,m_0001\nA,\nB,1\n")
    assert read_genotype(p).missing.sum() == 1


def test_genotype_bad_code_reports_line(tmp_path):
    p = tmp_path / "genotype.csv"
    p.write_text("hybrid_id,m_0001\nA,1\nB,2\n")
    with pytest.raises(DataError, match="line 3"):
        read_genotype(p)


def test_genotype_duplicate_hybrid(tmp_path):
    p = tmp_path / "genotype.csv"
    p.write_text("hybrid_id,m_0001\nA,1\nA,0\n")
    with pytest.raises(DataError, match="duplicate hybrid_id"):
        read_genotype(p)


def test_full_width_genotype_header_parses(tmp_path):
    p = 19_465
    names = marker_names(p)
    assert len(set(names)) == p
    rng = np.random.default_rng(0)
    vals = rng.integers(-1, 2, size=(3, p)).astype(str)
    df = pd.DataFrame(vals, columns=names)
    df.insert(0, "hybrid_id", ["H1", "H2", "H3"])
    path = tmp_path / "genotype.csv"
    df.to_csv(path, index=False)
    m = read_genotype(path)
    assert m.n_markers == 19_465
    assert m.marker_names[0] == "m_00001" and m.marker_names[-1] == "m_19465"


def test_performance_yield_difference(tmp_path):
    p = tmp_path / "performance.csv"
    p.write_text("hybrid_id,location_id,year,yield,check_yield\nA,L1,2016,100,110\n")
    perf = read_performance(p)
    assert perf.yield_differences[0] == -10.0


def test_performance_duplicate_key(tmp_path):
    p = tmp_path / "performance.csv"
    p.write_text("hybrid_id,location_id,year,yield,check_yield\nA,L1,2016,1,2\nA,L1,2016,3,4\n")
    with pytest.raises(DataError, match="line 3"):
        read_performance(p)


def test_performance_malformed_number(tmp_path):
    p = tmp_path / "performance.csv"
    p.write_text("hybrid_id,location_id,year,yield,check_yield\nA,L1,2016,1,2\nB,L1,2016,abc,4\n")
    with pytest.raises(DataError, match="line 3"):
        read_performance(p)


def test_weather_length_checked(tmp_path, rng):
    env = _env(["L1"], [2015, 2016], rng)
    markers = MarkerMatrix(["A"], np.zeros((1, 2), dtype=np.int8), marker_names(2))
    perf = PerformanceTable(["A"], ["L1"], [2016], [1.0], [1.0])
    paths = write_tables(tmp_path, markers, env, perf)
    df = pd.read_csv(paths["weather"]).drop(columns=["w_72"])
    df.to_csv(paths["weather"], index=False)
    with pytest.raises(DataError, match="weather vector length 71"):
        ingest_dir(tmp_path)


def test_soil_length_checked(tmp_path, rng):
    env = _env(["L1"], [2016], rng)
    markers = MarkerMatrix(["A"], np.zeros((1, 2), dtype=np.int8), marker_names(2))
    perf = PerformanceTable(["A"], ["L1"], [2016], [1.0], [1.0])
    paths = write_tables(tmp_path, markers, env, perf)
    df = pd.read_csv(paths["soil"])
    df["s_9"] = 0.0
    df.to_csv(paths["soil"], index=False)
    with pytest.raises(DataError, match="soil vector length 9"):
        ingest_dir(tmp_path)


def test_environment_rejects_missing(rng):
    env = _env(["L1"], [2016], rng)
    w = env.weather.copy()
    w[0, 3] = np.nan
    with pytest.raises(DataError, match="complete"):
        EnvironmentTable(env.location_ids, env.soil, env.weather_locations, env.weather_years, w)


def test_marker_codes_validated():
    with pytest.raises(DataError):
        MarkerMatrix(["A"], np.array([[2]], dtype=np.int8), ["m1"])


def test_tables_are_read_only(tiny_tables):
    markers = tiny_tables[0]
    with pytest.raises(ValueError):
        markers.values[0, 0] = 1


def test_round_trip_is_exact(tmp_path, tiny_tables):
    markers, env, perf, _ = tiny_tables
    write_tables(tmp_path, markers, env, perf)
    m2, e2, p2 = ingest_dir(tmp_path)
    assert m2.hybrid_ids == markers.hybrid_ids and m2.marker_names == markers.marker_names
    np.testing.assert_array_equal(m2.values, markers.values)
    np.testing.assert_array_equal(e2.weather, env.weather)
    np.testing.assert_array_equal(e2.soil, env.soil)
    np.testing.assert_array_equal(p2.yields, perf.yields)
    np.testing.assert_array_equal(p2.check_yields, perf.check_yields)
    np.testing.assert_array_equal(p2.yield_differences, p2.yields - p2.check_yields)


def test_ingest_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest_tables(tmp_path / "g.csv", tmp_path / "w.csv", tmp_path / "s.csv", tmp_path / "p.csv")


def test_join_cartesian(rng):
    markers = MarkerMatrix(["A", "B"], np.zeros((2, 3), dtype=np.int8), marker_names(3))
    env = _env(["L1", "L2"], [2016], rng)
    perf = PerformanceTable(["A", "A", "B", "B"], ["L1", "L2", "L1", "L2"], [2016] * 4, np.arange(4.0), np.ones(4))
    ds = join_trials(markers, env, perf)
    assert ds.n == 4 and not ds.rejections
    np.testing.assert_array_equal(ds.weather[1], env.weather[1])
    np.testing.assert_array_equal(ds.soil[3], env.soil[1])


def test_join_unknown_hybrid_is_rejected(rng):
    markers = MarkerMatrix(["A"], np.zeros((1, 3), dtype=np.int8), marker_names(3))
    env = _env(["L1"], [2016], rng)
    perf = PerformanceTable(["Z"], ["L1"], [2016], [1.0], [1.0])
    ds = join_trials(markers, env, perf)
    assert ds.n == 0
    assert len(ds.rejections) == 1 and "unknown hybrid" in ds.rejections[0].reason


def test_join_missing_weather_year_is_rejected(rng):
    markers = MarkerMatrix(["A"], np.zeros((1, 3), dtype=np.int8), marker_names(3))
    env = _env(["L1"], [2015], rng)
    perf = PerformanceTable(["A", "A"], ["L1", "L1"], [2015, 2016], [1.0, 2.0], [1.0, 2.0])
    ds = join_trials(markers, env, perf)
    assert ds.n == 1 and ds.rejections[0].key == ("A", "L1", 2016)


def test_join_at_full_scale():
    # 89 locations x 12 years x 139 hybrids = 148,452 trials
    n_loc, years, n_hyb = 89, list(range(2005, 2017)), 139
    rng = np.random.default_rng(0)
    hybrids = [f"H{i}" for i in range(n_hyb)]
    locs = [f"L{i}" for i in range(n_loc)]
    markers = MarkerMatrix(hybrids, rng.integers(-1, 2, size=(n_hyb, 10)).astype(np.int8), marker_names(10))
    env = _env(locs, years, rng)
    h = np.tile(np.asarray(hybrids, dtype=object), n_loc * len(years))
    lo = np.repeat(np.asarray(locs, dtype=object), len(years) * n_hyb)
    yr = np.tile(np.repeat(years, n_hyb), n_loc)
    perf = PerformanceTable(h, lo, yr, rng.normal(size=len(h)), rng.normal(size=len(h)))
    ds = join_trials(markers, env, perf)
    assert ds.n == 148_452
    assert not ds.rejections


def _keys(ds):
    return set(ds.keys())


def test_split_partitions_and_is_disjoint(tiny_dataset):
    sp = split_by_year(tiny_dataset)
    assert sp.train.n + sp.validation.n == tiny_dataset.n
    assert not _keys(sp.train) & _keys(sp.validation)
    assert set(sp.validation.years.tolist()) == {2016}
    seen = set(zip(sp.train.hybrid_ids[sp.train.years < 2016].tolist(),
                   sp.train.location_ids[sp.train.years < 2016].tolist()))
    assert not seen & set(zip(sp.validation.hybrid_ids.tolist(), sp.validation.location_ids.tolist()))


def test_split_is_deterministic(tiny_dataset):
    a = split_by_year(tiny_dataset, SplitRule(seed=5))
    b = split_by_year(tiny_dataset, SplitRule(seed=5))
    np.testing.assert_array_equal(a.validation_index, b.validation_index)


def test_split_without_holdout_year_errors(tiny_dataset):
    early = tiny_dataset.subset(np.flatnonzero(tiny_dataset.years < 2016))
    with pytest.raises(DataError, match="validation set empty"):
        split_by_year(early)


def test_split_all_validation_errors(tiny_dataset):
    with pytest.raises(DataError, match="training set empty"):
        split_by_year(tiny_dataset, SplitRule(cutoff_year=2000))


def test_with_environment_swaps_weather(tiny_tables, tiny_dataset):
    env = tiny_tables[1]
    loc = env.location_ids[0]
    new = env.with_weather([loc], 2016, np.full((1, N_WEATHER), 7.0))
    ds2 = tiny_dataset.with_environment(new)
    hit = (tiny_dataset.location_ids == loc) & (tiny_dataset.years == 2016)
    assert hit.any()
    assert np.all(ds2.weather[hit] == 7.0)
    np.testing.assert_array_equal(ds2.weather[~hit], tiny_dataset.weather[~hit])


def test_column_schemas():
    assert WEATHER_COLUMNS[0] == "w_01" and WEATHER_COLUMNS[-1] == "w_72"
    assert SOIL_COLUMNS == [f"s_{i}" for i in range(1, 9)]
