import numpy as np
import pandas as pd
import pytest

from yieldnet.data_model import join_trials, split_by_year
from yieldnet.feature_select import (
    EffectReport, SelectionError, activated_neuron_mask, effects_via_guided_backprop, group_normalize,
    guided_signals, select_top_features,
)
from yieldnet.nn import INFER, NetworkParams, NetworkSpec, TrainConfig, TrainedNetwork, forward, xavier_init
from yieldnet.preprocess import assemble_design
from yieldnet.synth import SynthConfig, generate_synthetic
from yieldnet.yield_model import train_pair


def wrap(spec, params):
    return TrainedNetwork(spec, params, TrainConfig())


def handmade(weights2=-1.0):
    """1 input -> maxout(1 unit) -> maxout(1 unit), no batch norm or skips."""
    spec = NetworkSpec(input_dim=1, hidden_layers=2, hidden_width=1, residual=False, batchnorm=False)
    p = NetworkParams(spec)
    p["hidden1.weight"][:, 0, 0] = [2.0, 1.0]  # a1 = max(2x, x)
    p["hidden2.weight"][:, 0, 0] = [weights2, 0.5 * weights2]
    p["hidden2.bias"][:, 0] = [5.0, 5.0]
    p["output.weight"][...] = 1.0
    return spec, p


class TestMask:
    def test_positive_neuron_is_active(self):
        spec = NetworkSpec(input_dim=2, hidden_layers=1, hidden_width=2)
        p = NetworkParams(spec)
        p["hidden1.bias"][:, 0] = [1.0, 2.0]  # always +2
        p["hidden1.bias"][:, 1] = [-1.0, -2.0]  # always -1
        mask = activated_neuron_mask(wrap(spec, p), np.random.default_rng(0).normal(size=(10, 2)))
        assert mask.tolist() == [True, False]

    def test_infinite_threshold_errors(self):
        spec = NetworkSpec(input_dim=3, hidden_layers=2, hidden_width=4)
        with pytest.raises(SelectionError, match="threshold"):
            activated_neuron_mask(wrap(spec, xavier_init(spec)), np.zeros((5, 3)), threshold=np.inf)

    def test_length_is_last_width(self):
        spec = NetworkSpec(input_dim=3, hidden_layers=3, hidden_width=7)
        net = wrap(spec, xavier_init(spec, 1))
        mask = activated_neuron_mask(net, np.random.default_rng(1).normal(size=(20, 3)), threshold=-np.inf)
        assert mask.shape == (7,) and mask.all()

    def test_empty_design(self):
        spec = NetworkSpec(input_dim=3, hidden_layers=2, hidden_width=4)
        with pytest.raises(SelectionError):
            activated_neuron_mask(wrap(spec, xavier_init(spec)), np.zeros((0, 3)))


class TestGuidedSignal:
    def test_negative_signal_is_clipped(self):
        spec, p = handmade(-1.0)
        x = np.array([[1.0]])
        sig, sites = guided_signals(wrap(spec, p), x, np.array([True]), keep_sites=True)
        # a2 = max(-a1 + 5, -0.5 a1 + 5): winning piece has weight -0.5 -> signal -0.5 -> clipped
        assert sig[0, 0] == 0.0
        assert [s.tolist() for s in sites] == [[[1.0]], [[0.0]]]

    def test_positive_path_matches_hand_gradient(self):
        spec, p = handmade(1.0)
        x = np.array([[1.0], [-1.0]])
        sig, _ = guided_signals(wrap(spec, p), x, np.array([True]))
        # a2 = max(a1 + 5, 0.5 a1 + 5) -> piece 0 when a1 > 0; a1 = 2x if x > 0 else x
        np.testing.assert_allclose(sig[:, 0], [2.0, 0.5 * 1.0])

    def test_equals_true_gradient_when_nothing_is_clipped(self):
        # positive weights and gammas keep every backward signal >= 0,
        # so the guided signal is the exact gradient of sum(mask * a_L)
        spec = NetworkSpec(input_dim=4, hidden_layers=5, hidden_width=5)
        rng = np.random.default_rng(2)
        p = xavier_init(spec, 2)
        for name, arr in p.items():
            if name.endswith(".weight"):
                arr[...] = np.abs(arr)
            if name.endswith(".gamma"):
                arr[...] = rng.uniform(0.5, 1.5, size=arr.shape)
        for k in p.running:
            if k.endswith("var"):
                p.running[k][...] = rng.uniform(0.5, 2.0, size=p.running[k].shape)
        mask = np.array([True, False, True, True, False])
        x = rng.normal(size=(6, 4))
        sig, _ = guided_signals(wrap(spec, p), x, mask)

        def f(xx):
            _, cache = forward(p, spec, xx, INFER)
            return (cache.outputs[-1] * mask).sum()

        h = 1e-6
        num = np.zeros_like(x)
        for i in range(6):
            for j in range(4):
                e = np.zeros_like(x)
                e[i, j] = h
                num[i, j] = (f(x + e) - f(x - e)) / (2 * h)
        np.testing.assert_allclose(sig, num, rtol=1e-6, atol=1e-8)

    def test_sites_are_non_negative(self):
        spec = NetworkSpec(input_dim=6, hidden_layers=5, hidden_width=6)
        net = wrap(spec, xavier_init(spec, 3))
        x = np.random.default_rng(3).normal(size=(30, 6))
        _, sites = guided_signals(net, x, np.ones(6, dtype=bool), keep_sites=True)
        assert len(sites) == 5
        assert all((s >= 0).all() for s in sites)

    def test_disconnected_input_has_zero_effect(self):
        spec = NetworkSpec(input_dim=5, hidden_layers=3, hidden_width=4)
        p = xavier_init(spec, 4)
        p["hidden1.weight"][:, :, 2] = 0.0
        x = np.random.default_rng(4).normal(size=(25, 5))
        rep = effects_via_guided_backprop(wrap(spec, p), x, np.ones(4, dtype=bool))
        assert rep.raw[2] == 0.0 and (rep.raw >= 0).all()


def _report(raw, groups):
    raw = np.asarray(raw, dtype=np.float64)
    return EffectReport(np.arange(len(raw)), [f"f{i}" for i in range(len(raw))], np.asarray(groups, dtype=object),
                        raw, group_normalize(raw, groups), np.ones(1, dtype=bool))


class TestSelection:
    def test_group_normalization(self):
        raw = [1.0, 4.0, 0.5, 2.0, 0.0]
        groups = ["marker", "marker", "weather", "soil", "soil"]
        norm = group_normalize(raw, groups)
        np.testing.assert_allclose(norm, [0.25, 1.0, 1.0, 1.0, 0.0])
        assert (group_normalize([0.0, 0.0], ["marker", "marker"]) == 0).all()

    def test_ranking_and_ties(self):
        rep = _report([3.0, 1.0, 3.0, 2.0, 9.0, 1.0, 1.0], ["marker"] * 4 + ["weather", "soil", "weather"])
        assert select_top_features(rep, 2, 2) == [0, 2, 4, 5]
        assert select_top_features(rep, 3, 1) == [0, 2, 3, 4]

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        raw = rng.random(200)
        groups = ["marker"] * 120 + ["weather"] * 72 + ["soil"] * 8
        a = select_top_features(_report(raw, groups), 50, 20)
        b = select_top_features(_report(raw * 37.5, groups), 50, 20)
        assert a == b and len(a) == 70

    def test_all_markers(self):
        rep = _report(np.arange(90.0), ["marker"] * 10 + ["weather"] * 72 + ["soil"] * 8)
        sel = select_top_features(rep, 10, 80)
        assert sel == list(range(90))

    def test_counts_checked(self):
        rep = _report(np.ones(90), ["marker"] * 10 + ["weather"] * 72 + ["soil"] * 8)
        with pytest.raises(SelectionError):
            select_top_features(rep, 11, 20)
        with pytest.raises(SelectionError):
            select_top_features(rep, 5, 81)

    def test_restricted_columns_map_back(self):
        rep = EffectReport(np.array([3, 10, 40]), ["a", "b", "c"], np.array(["marker", "marker", "soil"], dtype=object),
                           np.array([1.0, 2.0, 3.0]), np.array([0.5, 1.0, 1.0]), np.ones(1, dtype=bool))
        assert select_top_features(rep, 1, 1) == [10, 40]


@pytest.fixture(scope="module")
def planted():
    cfg = SynthConfig(n_hybrids=200, n_locations=8, p_markers=40, hybrids_per_environment=30, n_causal_markers=1,
                      marker_effect=15.0, weather_effect=2.0, soil_effect=2.0, gxe_strength=0.0, noise_sd=1.0,
                      allele_freq_range=(0.2, 0.5), missing_rate=0.0, seed=12)
    markers, env, perf, truth = generate_synthetic(cfg)
    split = split_by_year(join_trials(markers, env, perf))
    _, fit = assemble_design(split.train)
    spec = NetworkSpec(input_dim=fit.width, hidden_layers=4, hidden_width=16)
    pair = train_pair(split.train, spec, TrainConfig(base_lr=3e-3, max_iterations=1500, batch_size=64, log_every=0),
                      fit=fit)
    return pair, split, truth


def test_planted_marker_is_top(planted):
    pair, split, truth = planted
    x = pair.design(split.validation)
    mask = activated_neuron_mask(pair, x)
    rep = effects_via_guided_backprop(pair, x, mask)
    col = pair.fit.kept_markers.index(int(truth.causal_markers[0]))
    assert rep.groups[col] == "marker"
    assert rep.normalized[col] == 1.0
    assert select_top_features(rep, 1, 1)[0] == col


def test_effects_deterministic_and_exported(planted, tmp_path):
    pair, split, _ = planted
    x = pair.design(split.validation)
    mask = activated_neuron_mask(pair, x)
    a = effects_via_guided_backprop(pair, x, mask)
    b = effects_via_guided_backprop(pair, x, mask)
    assert a.raw.tobytes() == b.raw.tobytes()
    a.write_csv(tmp_path / "effects.csv")
    df = pd.read_csv(tmp_path / "effects.csv")
    assert list(df.columns) == ["column", "feature", "group", "raw", "normalized"]
    assert len(df) == pair.fit.width
    assert df.groupby("group")["normalized"].max().eq(1.0).all()
    assert set(df["group"]) == {"marker", "weather", "soil"}


def test_mask_length_validated(planted):
    pair, split, _ = planted
    with pytest.raises(SelectionError):
        effects_via_guided_backprop(pair, pair.design(split.validation), np.ones(3, dtype=bool))
