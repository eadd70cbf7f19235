import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipnet.data import (ChannelStats, Dataset, DatasetError, Sample, TimeChannel,
                        discretize_forward_fill, from_union_grid, global_channel_stats,
                        impute_empty_channels, load_dataset, sample_mask, save_dataset,
                        split_kfold, standardize, to_union_grid)
from ipnet.synth import SynthConfig, SynthConfigError, synthesize


def make_sample(chans, y=0.0, sid="s"):
    return Sample(sid, tuple(TimeChannel(d, t, x) for d, (t, x) in enumerate(chans)), y)


def write_lines(path, header, rows):
    lines = [json.dumps(header)] + [json.dumps(r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


HEADER = {"schema": 1, "channels": ["HR", "MAP"], "task": "classification", "window_hours": 48.0}


# ---------------------------------------------------------------- loading

def test_load_two_lines(tmp_path):
    rows = [
        {"id": "a", "label": 1, "channels": [{"name": "HR", "t": [0.0, 24.0, 48.0], "x": [80, 82, 90]}]},
        {"id": "b", "label": 0, "channels": [{"name": "MAP", "t": [3.5], "x": [70.0]}]},
    ]
    write_lines(tmp_path / "d.jsonl", HEADER, rows)
    ds = load_dataset(tmp_path / "d.jsonl")
    assert len(ds) == 2
    np.testing.assert_array_equal(ds.samples[0].channels[0].t, [0.0, 0.5, 1.0])
    assert len(ds.samples[0].channels[1]) == 0
    assert ds.samples[1].channels[0].index == 0


def test_load_rejects_non_monotone(tmp_path):
    rows = [{"id": "a", "label": 1, "channels": [{"name": "HR", "t": [2.0, 1.0], "x": [1, 2]}]}]
    write_lines(tmp_path / "d.jsonl", HEADER, rows)
    with pytest.raises(DatasetError, match="non-monotone times"):
        load_dataset(tmp_path / "d.jsonl")


def test_load_reports_line_number_on_parse_error(tmp_path):
    (tmp_path / "d.jsonl").write_text(json.dumps(HEADER) + "\n{not json\n")
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(tmp_path / "d.jsonl")


@pytest.mark.parametrize("row, msg", [
    ({"label": 1, "channels": []}, "missing field 'id'"),
    ({"id": "a", "label": 1, "channels": [{"name": "HR", "t": [1.0, 2.0], "x": [1.0]}]}, "mismatched"),
    ({"id": "a", "label": 1, "channels": [{"name": "XX", "t": [1.0], "x": [1.0]}]}, "unknown channel"),
    ({"id": "a", "label": 1, "channels": []}, "all channels empty"),
])
def test_load_schema_errors(tmp_path, row, msg):
    write_lines(tmp_path / "d.jsonl", HEADER, [row])
    with pytest.raises(DatasetError, match=msg):
        load_dataset(tmp_path / "d.jsonl")


def test_load_empty(tmp_path):
    (tmp_path / "d.jsonl").write_text("")
    with pytest.raises(DatasetError, match="empty dataset"):
        load_dataset(tmp_path / "d.jsonl")
    (tmp_path / "e.jsonl").write_text(json.dumps(HEADER) + "\n")
    with pytest.raises(DatasetError, match="empty dataset"):
        load_dataset(tmp_path / "e.jsonl")


def test_regression_target_is_log_days(tmp_path):
    header = dict(HEADER, task="regression")
    rows = [{"id": "a", "target": 4.0, "channels": [{"name": "HR", "t": [1.0], "x": [1.0]}]}]
    write_lines(tmp_path / "d.jsonl", header, rows)
    ds = load_dataset(tmp_path / "d.jsonl")
    assert ds.samples[0].y == pytest.approx(np.log(4.0))


def test_save_load_round_trip(tmp_path):
    ds = synthesize(SynthConfig(n_samples=5, label_mode="trend", task="regression"), 3)
    save_dataset(ds, tmp_path / "d.jsonl")
    back = load_dataset(tmp_path / "d.jsonl")
    assert back.channel_names == ds.channel_names
    for a, b in zip(ds.samples, back.samples):
        assert a.id == b.id and a.y == pytest.approx(b.y, abs=1e-12)
        for ca, cb in zip(a.channels, b.channels):
            np.testing.assert_allclose(ca.t, cb.t, atol=1e-15)
            np.testing.assert_array_equal(ca.x, cb.x)


# ---------------------------------------------------------------- stats, imputation

def _ds(samples, task="classification"):
    return Dataset(tuple(samples), tuple(f"c{d}" for d in range(samples[0].n_channels)), task)


def test_stats_two_points_and_degenerate():
    s1 = make_sample([([0.1], [1.0]), ([], []), ([0.2], [5.0])])
    s2 = make_sample([([0.3], [3.0]), ([], []), ([0.4, 0.5], [5.0, 5.0])])
    stats = global_channel_stats(_ds([s1, s2]))
    assert stats.mean[0] == 2.0 and stats.std[0] == 1.0 and not stats.degenerate[0]
    assert stats.mean[1] == 0.0 and stats.std[1] == 1.0 and stats.degenerate[1]
    assert stats.std[2] == 1.0 and stats.degenerate[2]


def test_impute_empty_channel():
    s = make_sample([([0.1, 0.2], [1.0, 2.0]), ([], [])])
    stats = ChannelStats(np.array([1.5, 7.0]), np.array([0.5, 2.0]), np.zeros(2, bool))
    out = impute_empty_channels(standardize(s, stats), stats)
    np.testing.assert_array_equal(out.channels[1].t, [0.0])
    np.testing.assert_array_equal(out.channels[1].x, [0.0])
    raw = impute_empty_channels(s, stats, zscored=False)
    assert raw.channels[1].x[0] == 7.0
    assert raw.channels[0] is s.channels[0]


def test_full_sample_passes_through_identically():
    s = make_sample([([0.1], [1.0]), ([0.4], [2.0])])
    stats = ChannelStats(np.zeros(2), np.ones(2), np.zeros(2, bool))
    assert impute_empty_channels(s, stats) is s


def test_all_empty_sample_rejected():
    with pytest.raises(DatasetError):
        make_sample([([], []), ([], [])])


# ---------------------------------------------------------------- union grid

def test_union_grid_example():
    s = make_sample([([0.1, 0.3], [5.0, 6.0]), ([0.2], [7.0])])
    g = to_union_grid(s)
    np.testing.assert_array_equal(g.union_times, [0.1, 0.2, 0.3])
    np.testing.assert_array_equal(g.mask, [[1, 0, 1], [0, 1, 0]])
    np.testing.assert_array_equal(g.values, [[5, 0, 6], [0, 7, 0]])


def test_union_grid_single_channel_and_dedup():
    s = make_sample([([0.1, 0.5], [1.0, 2.0])])
    g = to_union_grid(s)
    np.testing.assert_array_equal(g.union_times, [0.1, 0.5])
    assert g.mask.all()
    s2 = make_sample([([0.1, 0.5], [1.0, 2.0]), ([0.5], [3.0])])
    assert to_union_grid(s2).union_times.size == 2


channel_strategy = st.lists(st.floats(0, 1, allow_nan=False), max_size=8, unique=True)


@given(st.lists(channel_strategy, min_size=1, max_size=4).filter(lambda cs: any(cs)),
       st.integers(0, 2 ** 32 - 1))
@settings(max_examples=60, deadline=None)
def test_union_round_trip(chans, seed):
    rng = np.random.default_rng(seed)
    s = make_sample([(sorted(t), rng.normal(size=len(t))) for t in chans])
    back = from_union_grid(to_union_grid(s), s.id, s.y)
    for a, b in zip(s.channels, back.channels):
        np.testing.assert_array_equal(a.t, b.t)
        np.testing.assert_array_equal(a.x, b.x)


# ---------------------------------------------------------------- masks

def test_mask_counts():
    s = make_sample([(np.linspace(0, 1, 10), np.zeros(10)), ([0.5], [1.0]), ([], [])])
    m = sample_mask(s, 0.2, 7)
    assert m.held_out[0].size == 2
    assert m.held_out[1].size == 0 and m.held_out[2].size == 0
    m2 = sample_mask(s, 0.2, 7)
    assert all(np.array_equal(a, b) for a, b in zip(m.held_out, m2.held_out))


def test_mask_fraction_range():
    s = make_sample([([0.1, 0.2], [1.0, 2.0])])
    for f in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            sample_mask(s, f, 0)


@given(st.integers(2, 40), st.floats(0.01, 0.99), st.integers(0, 10 ** 6))
@settings(max_examples=100, deadline=None)
def test_mask_never_hides_whole_channel(L, frac, seed):
    s = make_sample([(np.linspace(0, 1, L), np.zeros(L))])
    h = sample_mask(s, frac, seed).held_out[0]
    assert h.size <= L - 1
    assert np.unique(h).size == h.size and np.all((h >= 0) & (h < L))


# ---------------------------------------------------------------- folds

def test_kfold_partition_sizes():
    ds = synthesize(SynthConfig(n_samples=10, label_mode="trend", task="regression"), 0)
    folds = split_kfold(ds, 5, 1)
    tests = np.concatenate([f.test for f in folds])
    assert sorted(tests.tolist()) == list(range(10))
    assert all(f.test.size == 2 for f in folds)
    for f in folds:
        assert not set(f.train) & set(f.test) and not set(f.validation) & set(f.test)
        assert not set(f.train) & set(f.validation)


def test_kfold_stratified():
    samples = [make_sample([([0.5], [1.0])], y=float(i >= 8), sid=str(i)) for i in range(10)]
    folds = split_kfold(_ds(samples), 2, 0)
    y = np.array([s.y for s in samples])
    assert [int(y[f.test].sum()) for f in folds] == [1, 1]


def test_kfold_deterministic_and_errors():
    ds = synthesize(SynthConfig(n_samples=30), 0)
    a, b = split_kfold(ds, 3, 5), split_kfold(ds, 3, 5)
    assert all(np.array_equal(x.test, y.test) and np.array_equal(x.validation, y.validation)
               for x, y in zip(a, b))
    with pytest.raises(ValueError):
        split_kfold(ds.subset(range(2)), 3, 0)


@given(st.integers(4, 60), st.integers(2, 5), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_kfold_stratified_counts_differ_by_at_most_one(n, k, seed):
    if k > n:
        return
    ds = synthesize(SynthConfig(n_samples=n, positive_fraction=0.3, rates=(3, 3)), seed)
    y = ds.targets
    folds = split_kfold(ds, k, seed)
    pos = [int(y[f.test].sum()) for f in folds]
    sizes = [f.test.size for f in folds]
    assert max(pos) - min(pos) <= 1 and max(sizes) - min(sizes) <= 1


# ---------------------------------------------------------------- discretization

def test_discretize_single_observation():
    s = make_sample([([0.5], [7.0])])
    f = discretize_forward_fill(s, 2)
    np.testing.assert_array_equal(f.values, [[0.0, 7.0]])
    np.testing.assert_array_equal(f.mask, [[0, 1]])


def test_discretize_interval_recurrence():
    # observations in bins 0 and 3 of 4
    s = make_sample([([0.1, 0.8], [1.0, 2.0])])
    f = discretize_forward_fill(s, 4)
    np.testing.assert_array_equal(f.mask, [[1, 0, 0, 1]])
    # hand-unrolled: d1 = 0; d2 = 1 (prev observed); d3 = 1 + d2; d4 = 1 + d3
    np.testing.assert_array_equal(f.intervals, [[0, 1, 2, 3]])
    np.testing.assert_array_equal(f.values, [[1, 1, 1, 2]])


def test_discretize_bin_mean_and_mean_fill():
    s = make_sample([([0.05, 0.1, 0.7], [2.0, 4.0, 9.0])])
    f = discretize_forward_fill(s, 4)
    assert f.values[0, 0] == 3.0
    m = discretize_forward_fill(s, 4, fill="mean")
    np.testing.assert_array_equal(m.values, [[3.0, 0.0, 9.0, 0.0]])


def test_discretize_time_one_goes_to_last_bin():
    s = make_sample([([1.0], [5.0])])
    assert discretize_forward_fill(s, 3).mask[0, 2] == 1


@given(st.lists(channel_strategy, min_size=1, max_size=3).filter(lambda cs: any(cs)),
       st.integers(1, 20))
@settings(max_examples=60, deadline=None)
def test_discretize_finite(chans, B):
    s = make_sample([(sorted(t), np.arange(len(t), dtype=float)) for t in chans])
    f = discretize_forward_fill(s, B)
    assert np.all(np.isfinite(f.values)) and np.all(np.isfinite(f.intervals))


# ---------------------------------------------------------------- synthesis

def test_synth_deterministic():
    cfg = SynthConfig(n_samples=20)
    from ipnet.data import dump_dataset
    assert dump_dataset(synthesize(cfg, 4)) == dump_dataset(synthesize(cfg, 4))
    assert dump_dataset(synthesize(cfg, 4)) != dump_dataset(synthesize(cfg, 5))


def test_synth_intensity_rates():
    ds = synthesize(SynthConfig(n_samples=600, rates=(30, 10)), 0)
    y = ds.targets
    counts = np.array([sum(len(c) for c in s.channels) / 3 for s in ds.samples])
    ratio = counts[y == 0].mean() / counts[y == 1].mean()
    assert 2.7 < ratio < 3.3


def test_synth_transient_zero_amplitude_has_no_label_signal():
    a = synthesize(SynthConfig(n_samples=50, label_mode="transient", bump_amplitude=0.0), 1)
    # with zero amplitude, values do not depend on the label at all: regenerate
    # with labels flipped by changing nothing but the bump, and compare values
    b = synthesize(SynthConfig(n_samples=50, label_mode="transient", bump_amplitude=0.0,
                               bump_width=0.3), 1)
    for sa, sb in zip(a.samples, b.samples):
        for ca, cb in zip(sa.channels, sb.channels):
            np.testing.assert_array_equal(ca.x, cb.x)


def test_synth_subsample_keeps_fraction():
    ds = synthesize(SynthConfig(n_samples=3, n_channels=1, label_mode="subsample",
                                keep_fraction=0.1, dense_points=945), 0)
    assert all(len(s.channels[0]) == 94 for s in ds.samples)


@pytest.mark.parametrize("kw", [dict(rates=(0, 1)), dict(n_channels=0), dict(label_mode="bogus"),
                                dict(task="regression", label_mode="intensity")])
def test_synth_invalid(kw):
    with pytest.raises(SynthConfigError):
        SynthConfig(**kw)


def test_sparsify_keeps_fraction_and_is_deterministic():
    from ipnet.data import sparsify
    ds = synthesize(SynthConfig(n_samples=4, n_channels=2, label_mode="subsample",
                                keep_fraction=1.0, dense_points=200), 0)
    a = sparsify(ds, 0.1, 3)
    assert all(len(c) == 20 for s in a.samples for c in s.channels)
    b = sparsify(ds.subset([3, 2, 1, 0]), 0.1, 3)
    np.testing.assert_array_equal(a.samples[0].channels[1].t, b.samples[3].channels[1].t)
    for s, full in zip(a.samples, ds.samples):
        assert set(s.channels[0].t) <= set(full.channels[0].t)
    with pytest.raises(ValueError):
        sparsify(ds, 0.0, 0)
