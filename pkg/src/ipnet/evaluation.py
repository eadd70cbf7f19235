"""Metrics, the k-fold protocol and the interpolation-output ablation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, Sample, split_kfold
from .interp import TABLE_ORDER
from .training import Checkpoint, TrainConfig, fit

CLASS_METRICS = ("auc", "auprc", "loss")
REG_METRICS = ("medae_days", "ev")


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: labels contain a single class")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision: sum of (R_i - R_{i-1}) * P_i over descending unique thresholds."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels) == 1
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("AUPRC undefined: no positive labels")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]  # end of each tie group
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def mean_cross_entropy(probs, labels) -> float:
    p = np.clip(np.asarray(probs, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def median_abs_error_days(pred_logdays, true_logdays) -> float:
    pred = np.exp(np.asarray(pred_logdays, dtype=np.float64))
    true = np.exp(np.asarray(true_logdays, dtype=np.float64))
    return median_abs_error(pred, true)


def median_abs_error(pred, true) -> float:
    err = np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(true, dtype=np.float64))
    if err.size == 0:
        raise ValueError("median absolute error of an empty set")
    return float(np.median(err))


def explained_variance(pred, true) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    var = true.var()
    if not var > 0:
        raise ValueError("explained variance undefined for constant targets")
    return float(1.0 - (true - pred).var() / var)


def accuracy(pred_labels, labels) -> float:
    return float(np.mean(np.asarray(pred_labels) == np.asarray(labels)))


def task_metrics(task: str, preds: np.ndarray, targets: np.ndarray) -> dict:
    if task == "classification":
        return {"auc": roc_auc(preds, targets), "auprc": auprc(preds, targets),
                "loss": mean_cross_entropy(preds, targets)}
    # targets and predictions are log-days; both metrics are reported in days
    return {"medae_days": median_abs_error_days(preds, targets),
            "ev": explained_variance(np.exp(preds), np.exp(targets))}


def config_fingerprint(config: TrainConfig, **extra) -> str:
    payload = json.dumps({"config": config.to_dict(), **extra}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class MetricReport:
    task: str
    folds: list
    config_fingerprint: str
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.folds and not self.mean:
            keys = [k for k in self.folds[0] if k != "fold"]
            for k in keys:
                vals = np.array([f[k] for f in self.folds], dtype=np.float64)
                self.mean[k] = float(vals.mean())
                self.std[k] = float(vals.std())

    def to_dict(self) -> dict:
        return {"task": self.task, "folds": self.folds, "mean": self.mean, "std": self.std,
                "config_fingerprint": self.config_fingerprint}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def score_checkpoint(ckpt: Checkpoint, ds: Dataset) -> MetricReport:
    """Single-split evaluation of a trained checkpoint."""
    if tuple(ds.channel_names) != tuple(ckpt.channel_names):
        raise ValueError("dataset channels do not match the checkpoint")
    if ds.task != ckpt.model.config.task:
        raise ValueError(f"dataset task {ds.task!r} does not match checkpoint task")
    preds = ckpt.predict(ds)
    row = {"fold": 0, **task_metrics(ds.task, preds, ds.targets)}
    return MetricReport(ds.task, [row], config_fingerprint(ckpt.config, mode="score"))


def fold_seed(seed: int, fold: int, tag: int = 0) -> int:
    return int(np.random.SeedSequence([seed, fold, tag]).generate_state(1)[0] % (2 ** 31))


def kfold_evaluate(ds: Dataset, config: TrainConfig, k: int = 5, seed: int = 0,
                   verbose=None) -> MetricReport:
    """Train on each fold's training part (early stopping on its validation
    subset), score the held-out fold, and summarize across folds."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rows = []
    for i, fold in enumerate(split_kfold(ds, k, seed, config.val_fraction)):
        cfg = config.replace(seed=fold_seed(config.seed, i))
        ckpt = fit(ds.subset(fold.train), ds.subset(fold.validation), cfg)
        test = ds.subset(fold.test)
        rows.append({"fold": i, **task_metrics(ds.task, ckpt.predict(test), test.targets)})
        if verbose:
            verbose(rows[-1])
    return MetricReport(ds.task, rows, config_fingerprint(config, k=k, seed=seed))


@dataclass
class AblationRow:
    channels: tuple[str, ...]
    classification: MetricReport | None
    regression: MetricReport | None

    @property
    def label(self) -> str:
        return ",".join(self.channels)

    def values(self) -> dict:
        out = {}
        for rep, keys in ((self.classification, CLASS_METRICS), (self.regression, REG_METRICS)):
            for key in keys:
                out[key] = None if rep is None else (rep.mean[key], rep.std[key])
        return out

    def to_dict(self) -> dict:
        return {"channels": self.label,
                "classification": None if self.classification is None else self.classification.to_dict(),
                "regression": None if self.regression is None else self.regression.to_dict()}


def ablation_suite(ds: Dataset | None, config: TrainConfig, seed: int = 0, k: int = 5,
                   regression_ds: Dataset | None = None) -> list[AblationRow]:
    """k-fold evaluation of every non-empty subset of interpolation outputs.

    ``ds`` supplies the classification columns and ``regression_ds`` the
    regression columns; either may be omitted. Rows follow the canonical
    table order.
    """
    if ds is None and regression_ds is None:
        raise ValueError("ablation needs at least one dataset")
    if ds is not None and regression_ds is None and ds.task == "regression":
        ds, regression_ds = None, ds
    rows = []
    for sel in TABLE_ORDER:
        cfg = config.replace(channels=list(sel), baseline="none")
        cls_rep = kfold_evaluate(ds, cfg, k, seed) if ds is not None else None
        reg_rep = kfold_evaluate(regression_ds, cfg, k, seed) if regression_ds is not None else None
        rows.append(AblationRow(sel, cls_rep, reg_rep))
    return rows


def format_table(rows: list[AblationRow]) -> str:
    """Fixed-width text rendering of an ablation, stable across runs."""
    cols = CLASS_METRICS + REG_METRICS
    head = f"{'Model':<10}" + "".join(f"{c.upper():>20}" for c in cols)
    lines = [head, "-" * len(head)]
    for row in rows:
        vals = row.values()
        cells = []
        for c in cols:
            v = vals[c]
            cells.append(f"{'-':>20}" if v is None else f"{v[0]:>11.3f} +- {v[1]:5.3f}")
        lines.append(f"{row.label:<10}" + "".join(cells))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# Multi-class labels
# ----------------------------------------------------------------------------

def _binarize(ds: Dataset, cls: int) -> Dataset:
    return ds.with_samples([Sample(s.id, s.channels, float(s.y == cls)) for s in ds.samples])


def fit_one_vs_rest(train: Dataset, val: Dataset, config: TrainConfig) -> list:
    """One binary checkpoint per class, each trained with the logistic head."""
    classes = np.unique(train.targets).astype(int)
    out = []
    for c in classes:
        cfg = config.replace(seed=config.seed + int(c))
        out.append((int(c), fit(_binarize(train, c), _binarize(val, c), cfg)))
    return out


def predict_one_vs_rest(models: list, ds: Dataset) -> np.ndarray:
    """Class whose binary model gives the highest probability."""
    classes = np.array([c for c, _ in models])
    probs = np.stack([ck.predict(ds) for _, ck in models], axis=1)
    return classes[np.argmax(probs, axis=1)]
