import json
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from yieldnet.evaluate import (
    REFERENCE_DNN_YIELD, REFERENCE_LABEL, REFERENCE_YIELD_MEAN, REFERENCE_YIELD_SD, MetricsRow, Report,
    build_report, distribution_summary, metrics, overlap_pvalue, per_location_errors, triplet_rows,
    variance_identity_check,
)
from yieldnet.yield_model import PredictionTriplet

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestMetrics:
    def test_perfect(self):
        m = metrics([1.0, 2.0, 5.0], [1.0, 2.0, 5.0])
        assert m.rmse == 0.0 and m.pearson_percent == pytest.approx(100.0) and not m.degenerate

    def test_arithmetic(self):
        assert metrics([0.0, 0.0], [3.0, 4.0]).rmse == pytest.approx(math.sqrt(12.5))

    def test_constant_prediction_is_degenerate(self):
        m = metrics([2.0, 2.0, 2.0], [1.0, 2.0, 4.0])
        assert m.pearson_percent == 0.0 and m.degenerate

    def test_pearson_matches_numpy(self, rng):
        p, t = rng.normal(size=50), rng.normal(size=50)
        assert metrics(p, t).pearson_percent == pytest.approx(100 * np.corrcoef(p, t)[0, 1], rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            metrics([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            metrics([], [])

    @settings(max_examples=60)
    @given(arrays(np.float64, 12, elements=finite), arrays(np.float64, 12, elements=finite), st.data())
    def test_paired_permutation_and_affine_invariance(self, p, t, data):
        perm = np.asarray(data.draw(st.permutations(list(range(12)))))
        assert metrics(p[perm], t[perm]).rmse == pytest.approx(metrics(p, t).rmse, rel=1e-12, abs=1e-12)
        m = metrics(p, t)
        assume(not m.degenerate and np.std(p) > 1e-3 and np.std(t) > 1e-3)
        a = data.draw(st.floats(0.1, 10))
        b = data.draw(st.floats(-100, 100))
        assert metrics(a * p + b, t).pearson_percent == pytest.approx(m.pearson_percent, abs=1e-7)

    def test_row_validation(self):
        with pytest.raises(ValueError):
            MetricsRow("dnn", "height", 1, 1, 1, 1)


class TestLocations:
    def test_single_location(self, rng):
        p, t = rng.normal(size=30), rng.normal(size=30)
        le = per_location_errors(p, t, ["A"] * 30)
        assert le.n_locations == 1
        assert le.table["rmse"][0] == pytest.approx(metrics(p, t).rmse, rel=1e-12)

    def test_infinite_threshold(self, rng):
        locs = rng.choice(["A", "B", "C"], size=40)
        le = per_location_errors(rng.normal(size=40), 100 * rng.normal(size=40), locs, threshold=np.inf)
        assert le.n_below == le.n_locations == 3

    def test_twenty_locations(self, rng):
        n = 500
        locs = np.array([f"L{i:02d}" for i in rng.integers(0, 20, size=n)], dtype=object)
        locs[:20] = [f"L{i:02d}" for i in range(20)]
        p, t = rng.normal(size=n), rng.normal(size=n)
        le = per_location_errors(p, t, locs, threshold=1.4)
        assert le.n_locations == 20 and le.table["n"].sum() == n
        for _, r in le.table.iterrows():
            sel = locs == r["location_id"]
            assert r["rmse"] == pytest.approx(np.sqrt(np.mean((p[sel] - t[sel]) ** 2)), rel=1e-12)
        assert le.n_below == int((le.table["rmse"] < 1.4).sum())


class TestVarianceIdentity:
    def test_constant_check(self, rng):
        y = rng.normal(size=20)
        c = variance_identity_check(y, np.full(20, 3.0))
        assert c.var_difference == pytest.approx(np.var(y, ddof=1), rel=1e-12)

    def test_equal_series(self, rng):
        y = rng.normal(size=20)
        c = variance_identity_check(y, y)
        assert c.var_difference == 0.0 and c.relative_gap < 1e-10

    def test_random_pairs(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            n = int(rng.integers(2, 500))
            y = rng.normal(120, 25, size=n)
            yc = 0.7 * y + rng.normal(0, 10, size=n)
            assert variance_identity_check(y, yc).relative_gap < 1e-10

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            variance_identity_check([1.0], [2.0])


def comb_tail(population, planted, selected, overlap):
    total = math.comb(population, selected)
    hits = sum(math.comb(planted, k) * math.comb(population - planted, selected - k)
               for k in range(overlap, min(planted, selected) + 1))
    return hits / total


class TestOverlap:
    @pytest.mark.parametrize("args", [(627, 10, 50, 10), (627, 10, 50, 3), (627, 10, 50, 0), (30, 5, 10, 2),
                                      (10, 10, 10, 10)])
    def test_matches_exact_count(self, args):
        assert overlap_pvalue(*args) == pytest.approx(comb_tail(*args), rel=1e-9, abs=1e-300)

    def test_bounds(self):
        with pytest.raises(ValueError):
            overlap_pvalue(10, 11, 5, 1)


class TestDistribution:
    def test_identical_series(self, rng):
        y = rng.normal(size=100)
        d = distribution_summary(y, y, 15)
        np.testing.assert_array_equal(d.table["count_predicted"], d.table["count_target"])
        assert len(d.table) == 15

    def test_densities_sum_to_one(self, rng):
        d = distribution_summary(rng.normal(size=77), rng.normal(2, 3, size=91))
        assert d.table["density_predicted"].sum() == pytest.approx(1, abs=1e-10)
        assert d.table["density_target"].sum() == pytest.approx(1, abs=1e-10)
        assert d.table["count_predicted"].sum() == 77 and d.table["count_target"].sum() == 91

    def test_variance_flag(self, rng):
        t = rng.normal(size=200) * 3
        assert distribution_summary(0.5 * t, t).prediction_variance_smaller

    def test_bins_checked(self):
        with pytest.raises(ValueError):
            distribution_summary([1.0], [1.0], 1)


def _rows():
    class D:
        def __init__(self, y, c):
            self.yields, self.check_yields, self.yield_differences = y, c, y - c

    rng = np.random.default_rng(0)
    y, c = rng.normal(100, 10, 30), rng.normal(100, 5, 30)
    trip = PredictionTriplet.from_outputs(y + rng.normal(size=30), c + rng.normal(size=30))
    return triplet_rows("dnn", trip, D(y, c), trip, D(y, c))


class TestReport:
    def test_triplet_rows(self):
        rows = _rows()
        assert [r.response for r in rows] == ["yield", "check_yield", "yield_difference"]

    def test_minimal_report(self, tmp_path):
        out = build_report(Report(_rows()), tmp_path / "r")
        assert {"metrics", "ablation", "summary", "manifest"} <= set(out)
        assert len(pd.read_csv(out["metrics"])) == 3
        assert pd.read_csv(out["ablation"]).empty
        summary = out["summary"].read_text()
        assert REFERENCE_LABEL in summary and "(none)" in summary
        assert str(REFERENCE_YIELD_MEAN) in summary and str(REFERENCE_YIELD_SD) in summary
        assert str(REFERENCE_DNN_YIELD["validation_rmse"]) in summary
        assert json.loads(out["manifest"].read_text())["variance_convention"].startswith("sample")

    def test_full_report_is_deterministic(self, tmp_path, rng):
        p, t = rng.normal(size=40), rng.normal(size=40)
        rep = Report(_rows(), [{"source": "G", "n_features": 5, "train_rmse": 1.0, "train_pearson": 2.0,
                                "validation_rmse": 3.0, "validation_pearson": 4.0}],
                     {"dnn": variance_identity_check(p, t)},
                     {"dnn": per_location_errors(p, t, ["A", "B"] * 20)},
                     {"dnn": distribution_summary(p, t)},
                     pd.DataFrame({"feature": ["m1"], "raw": [0.5]}), ["a note"], {"seed": 1})
        a = build_report(rep, tmp_path / "a")
        b = build_report(rep, tmp_path / "b")
        assert set(a) == {"metrics", "ablation", "per_location", "distribution", "identity", "effects", "summary",
                          "manifest"}
        for k in a:
            assert a[k].read_bytes() == b[k].read_bytes()

    def test_empty_report_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            build_report(Report([]), tmp_path)
