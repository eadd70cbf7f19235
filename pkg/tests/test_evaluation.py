import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipnet.evaluation import (AblationRow, MetricReport, auprc, explained_variance, format_table,
                              kfold_evaluate, mean_cross_entropy, median_abs_error,
                              median_abs_error_days, roc_auc, task_metrics)
from ipnet.interp import TABLE_ORDER, forward, InterpParams
from ipnet.synth import SynthConfig, synthesize
from ipnet.training import TrainConfig
from ipnet.data import ReferenceGrid


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return total / (len(pos) * len(neg))


# ---------------------------------------------------------------- AUC

def test_auc_pair_counting_example():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)


def test_auc_trivial_cases():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.5] * 4, [0, 1, 0, 1]) == 0.5
    with pytest.raises(ValueError, match="AUC undefined"):
        roc_auc([0.1, 0.2], [1, 1])


labels_scores = st.integers(2, 30).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda y: 0 < sum(y) < len(y)),
    st.lists(st.integers(-5, 5).map(float), min_size=n, max_size=n)))


@given(labels_scores)
@settings(max_examples=200, deadline=None)
def test_auc_matches_pair_counting(ys):
    y, s = ys
    assert roc_auc(s, y) == pytest.approx(brute_auc(s, y), abs=1e-12)


@given(labels_scores)
@settings(max_examples=100, deadline=None)
def test_auc_monotone_invariance(ys):
    y, s = ys
    s = np.array(s)
    assert roc_auc(np.exp(s) * 3 + 1, y) == pytest.approx(roc_auc(s, y), abs=1e-12)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=60, deadline=None)
def test_auc_flip_sums_to_one_without_ties(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=20)
    y = np.r_[np.ones(7), np.zeros(13)]
    assert roc_auc(s, y) + roc_auc(-s, y) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- AUPRC

def test_auprc_examples():
    assert auprc([0.9, 0.1], [0, 1]) == pytest.approx(0.5)
    assert auprc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    with pytest.raises(ValueError):
        auprc([0.3, 0.4], [0, 0])


def brute_ap(scores, labels):
    scores, labels = np.asarray(scores), np.asarray(labels)
    n_pos = labels.sum()
    ap, prev_r = 0.0, 0.0
    for thr in sorted(set(scores), reverse=True):
        sel = scores >= thr
        tp = (labels[sel] == 1).sum()
        r = tp / n_pos
        ap += (r - prev_r) * tp / sel.sum()
        prev_r = r
    return ap


@given(labels_scores)
@settings(max_examples=200, deadline=None)
def test_auprc_matches_threshold_sweep(ys):
    y, s = ys
    assert auprc(s, y) == pytest.approx(brute_ap(s, y), abs=1e-12)


def test_auprc_random_scores_near_prevalence():
    rng = np.random.default_rng(0)
    vals = []
    for _ in range(200):
        y = (rng.random(200) < 0.2).astype(int)
        vals.append(auprc(rng.random(200), y))
    assert np.mean(vals) == pytest.approx(0.2, abs=0.03)


def test_auprc_reversed_perfect_ranking_is_minimal():
    y = np.r_[np.ones(3), np.zeros(5)]
    s = np.arange(8.0)  # positives ranked last
    worst = auprc(s, y)
    rng = np.random.default_rng(1)
    for _ in range(50):
        assert auprc(rng.permutation(8).astype(float), y) >= worst - 1e-12


# ---------------------------------------------------------------- other metrics

def test_cross_entropy():
    assert mean_cross_entropy([0.5, 0.5], [0, 1]) == pytest.approx(math.log(2))
    assert mean_cross_entropy([1.0, 0.0], [1, 0]) == pytest.approx(0.0, abs=1e-11)
    assert math.isfinite(mean_cross_entropy([0.0], [1]))
    assert mean_cross_entropy([0.2, 0.9, 0.4], [0, 1, 1]) == \
        pytest.approx(mean_cross_entropy([0.4, 0.2, 0.9], [1, 0, 1]))


def test_medae_example_and_properties():
    assert median_abs_error([2.5, 0.0, 2.0, 8.0], [3.0, 0.5, 2.0, 7.0]) == 0.5
    assert median_abs_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert median_abs_error([0, 0, 0, 100], [0, 0.4, 1, 0]) == median_abs_error([0, 0, 0, 5],
                                                                                 [0, 0.4, 1, 0])
    logs = np.log([2.5, 1.0, 2.0, 8.0])
    assert median_abs_error_days(logs, np.log([3.0, 0.5, 2.0, 7.0])) == pytest.approx(0.5)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=20), st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_medae_days_permutation_invariant(xs, rnd):
    a = np.array(xs)
    b = a[::-1] * 0.5
    idx = list(range(a.size))
    rnd.shuffle(idx)
    assert median_abs_error_days(a[idx], b[idx]) == median_abs_error_days(a, b)


def test_explained_variance_examples():
    true = np.array([3.0, -0.5, 2.0, 7.0])
    pred = np.array([2.5, 0.0, 2.0, 8.0])
    assert explained_variance(pred, true) == pytest.approx(0.9572, abs=1e-4)
    assert explained_variance(true, true) == 1.0
    assert explained_variance(np.full(4, true.mean()), true) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        explained_variance([1.0, 2.0], [3.0, 3.0])


@given(st.integers(0, 10 ** 6), st.floats(-50, 50))
@settings(max_examples=60, deadline=None)
def test_explained_variance_shift_invariant(seed, c):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=10)
    p = t + 0.3 * rng.normal(size=10)
    assert explained_variance(p + c, t + c) == pytest.approx(explained_variance(p, t), abs=1e-9)


def test_task_metric_keys():
    assert set(task_metrics("classification", np.array([0.2, 0.8]), np.array([0, 1]))) == \
        {"auc", "auprc", "loss"}
    assert set(task_metrics("regression", np.array([0.2, 0.8]), np.array([0.1, 1.0]))) == \
        {"medae_days", "ev"}


# ---------------------------------------------------------------- reports, k-fold, ablation

def test_metric_report_std_over_folds():
    rep = MetricReport("regression", [{"fold": 0, "ev": 0.5}, {"fold": 1, "ev": 0.7}], "x")
    assert rep.mean["ev"] == pytest.approx(0.6) and rep.std["ev"] == pytest.approx(0.1)
    doc = json.loads(rep.to_json())
    assert set(doc) == {"task", "folds", "mean", "std", "config_fingerprint"}


FAST = TrainConfig(epochs=2, refs=6, hidden=4, batch_size=16)


def test_kfold_evaluate_rows_and_determinism():
    ds = synthesize(SynthConfig(n_samples=30, rates=(6, 3)), 0)
    a = kfold_evaluate(ds, FAST, k=3, seed=1)
    b = kfold_evaluate(ds, FAST, k=3, seed=1)
    assert len(a.folds) == 3 and a.to_json() == b.to_json()
    assert set(a.mean) == {"auc", "auprc", "loss"}
    with pytest.raises(ValueError):
        kfold_evaluate(ds, FAST, k=1)


def fake_row(sel, cls=True, reg=True):
    c = MetricReport("classification", [{"fold": 0, "auc": 0.8, "auprc": 0.5, "loss": 0.4}], "f")
    r = MetricReport("regression", [{"fold": 0, "medae_days": 1.2, "ev": 0.6}], "f")
    return AblationRow(sel, c if cls else None, r if reg else None)


def test_table_order_and_format():
    assert TABLE_ORDER == (("SI", "T", "I"), ("SI", "I"), ("SI", "T"), ("SI",), ("I",), ("I", "T"),
                           ("T",))
    table = format_table([fake_row(sel) for sel in TABLE_ORDER])
    lines = table.splitlines()
    assert len(lines) == 9
    assert [ln.split()[0] for ln in lines[2:]] == ["SI,T,I", "SI,I", "SI,T", "SI", "I", "I,T", "T"]
    assert len({len(ln) for ln in lines}) == 1
    assert "-" in format_table([fake_row(("SI",), reg=False)]).splitlines()[2].split()


def test_intensity_row_invariant_to_value_rescaling():
    ds = synthesize(SynthConfig(n_samples=3), 0)
    s = ds.samples[0]
    p = InterpParams.init(3, 8)
    grid = ReferenceGrid.evenly_spaced(8)
    scaled = s.replace_values([17.0 * c.x for c in s.channels])
    np.testing.assert_array_equal(forward(p, s, grid, ("I",)), forward(p, scaled, grid, ("I",)))


def test_one_vs_rest_multiclass():
    from ipnet.data import Sample
    from ipnet.evaluation import fit_one_vs_rest, predict_one_vs_rest
    from ipnet.training import fit
    ds = synthesize(SynthConfig(n_samples=30, rates=(6, 3)), 0)
    three = ds.with_samples([Sample(s.id, s.channels, float(i % 3)) for i, s in enumerate(ds.samples)])
    with pytest.raises(ValueError, match="0/1 labels"):
        fit(three.subset(range(20)), three.subset(range(20, 30)), FAST)
    models = fit_one_vs_rest(three.subset(range(20)), three.subset(range(20, 30)), FAST)
    assert [c for c, _ in models] == [0, 1, 2]
    pred = predict_one_vs_rest(models, three)
    assert pred.shape == (30,) and set(pred) <= {0, 1, 2}
