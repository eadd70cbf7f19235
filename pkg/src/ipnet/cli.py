"""Command-line entry point: ``ipnet {synth,train,eval,ablate,gradcheck,predict}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .data import DatasetError, load_dataset, save_dataset, train_val_split
from .evaluation import ablation_suite, format_table, kfold_evaluate, score_checkpoint
from .interp import parse_channels
from .synth import SynthConfig, SynthConfigError, synthesize
from .training import TrainConfig, fit, grad_check, gradcheck_instance


class UsageError(Exception):
    pass


def _channels(value: str) -> tuple[str, ...]:
    try:
        return parse_channels(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--task", choices=("classification", "regression"),
                   help="expected task; must match the dataset header")
    p.add_argument("--channels", type=_channels, default=d.channels,
                   help="interpolation outputs fed to the GRU, e.g. si,t,i")
    p.add_argument("--refs", type=int, default=d.refs, help="reference points T")
    p.add_argument("--hidden", type=int, default=d.hidden, help="GRU hidden size H")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch", type=int, default=d.batch_size)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--delta-r", type=float, default=d.delta_R)
    p.add_argument("--delta-i", type=float, default=d.delta_I)
    p.add_argument("--delta-p", type=float, default=d.delta_P)
    p.add_argument("--mask-frac", type=float, default=d.mask_fraction)
    p.add_argument("--patience", type=int, default=d.patience)
    p.add_argument("--val-frac", type=float, default=d.val_fraction)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--kappa", type=float, default=d.kappa)
    p.add_argument("--bins", type=int, default=None, help="baseline bins (default: --refs)")
    p.add_argument("--baseline", choices=("none", "m", "f", "s"), default=d.baseline)


def _train_config(args) -> TrainConfig:
    try:
        return TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                           mask_fraction=args.mask_frac, patience=args.patience, seed=args.seed,
                           delta_I=args.delta_i, delta_P=args.delta_p, delta_R=args.delta_r,
                           val_fraction=args.val_frac, channels=args.channels, refs=args.refs,
                           hidden=args.hidden, kappa=args.kappa, baseline=args.baseline,
                           bins=args.bins)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(path: str, task: str | None = None):
    ds = load_dataset(path)
    if task is not None and ds.task != task:
        raise UsageError(f"--task {task} does not match dataset task {ds.task}")
    return ds


def cmd_synth(args) -> int:
    try:
        config = SynthConfig.from_json(args.config)
    except SynthConfigError as exc:
        raise UsageError(str(exc)) from None
    except TypeError as exc:
        raise UsageError(f"invalid config: {exc}") from None
    save_dataset(synthesize(config, args.seed), args.out)
    return 0


def cmd_train(args) -> int:
    config = _train_config(args)
    ds = _load(args.data, args.task)
    train_idx, val_idx = train_val_split(ds, config.val_fraction, config.seed)
    if len(val_idx) == 0:
        raise UsageError("dataset too small to carve a validation split")
    print("epoch, train_loss, val_loss")

    def report(epoch, train_loss, val_loss):
        print(f"{epoch}, {train_loss:.6f}, {val_loss:.6f}", flush=True)

    ckpt = fit(ds.subset(train_idx), ds.subset(val_idx), config, on_epoch=report)
    ckpt_io.save(ckpt, args.out)
    return 0


def cmd_eval(args) -> int:
    ds = _load(args.data, args.task)
    if args.kfold:
        if args.checkpoint:
            config = ckpt_io.load(args.checkpoint).config
        else:
            config = _train_config(args)
        report = kfold_evaluate(ds, config, args.kfold, args.seed)
    else:
        if not args.checkpoint:
            raise UsageError("eval needs --checkpoint unless --kfold is given")
        ckpt = ckpt_io.load(args.checkpoint)
        try:
            report = score_checkpoint(ckpt, ds)
        except ValueError as exc:
            raise RuntimeError(f"checkpoint/schema mismatch: {exc}") from None
    text = report.to_json()
    if args.metrics:
        Path(args.metrics).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_ablate(args) -> int:
    config = _train_config(args)
    if args.data is None and args.data_reg is None:
        raise UsageError("ablate needs --data and/or --data-reg")
    cls_ds = _load(args.data) if args.data else None
    reg_ds = _load(args.data_reg) if args.data_reg else None
    if cls_ds is not None and reg_ds is not None and cls_ds.task != "classification":
        raise UsageError("--data must be a classification dataset when --data-reg is given")
    rows = ablation_suite(cls_ds, config, args.seed, args.kfold, regression_ds=reg_ds)
    table = format_table(rows)
    sys.stdout.write(table)
    if args.out:
        Path(args.out).write_text(json.dumps([r.to_dict() for r in rows], indent=2) + "\n",
                                  encoding="utf-8")
    if args.table:
        Path(args.table).write_text(table, encoding="utf-8")
    return 0


def cmd_gradcheck(args) -> int:
    model, samples, masks, weights = gradcheck_instance(args.seed, args.task, n_channels=3,
                                                        refs=args.refs, hidden=args.hidden)
    report = grad_check(model, samples, masks, weights, eps=args.eps)
    print(f"eps: {args.eps:g}")
    groups: dict[str, float] = {}
    for name, err in report.items():
        group = name.split(".")[0]
        groups[group] = max(groups.get(group, 0.0), err)
        print(f"{name:<18} max_rel_err {err:.3e}")
    for group, err in groups.items():
        print(f"group {group:<10} max_rel_err {err:.3e}")
    worst = max(report.values())
    ok = worst < args.tol
    print(f"overall max_rel_err {worst:.3e} {'PASS' if ok else 'FAIL'} (tol {args.tol:g})")
    return 0 if ok else 1


def cmd_predict(args) -> int:
    ckpt = ckpt_io.load(args.checkpoint)
    ds = load_dataset(args.data)
    if tuple(ds.channel_names) != tuple(ckpt.channel_names):
        raise RuntimeError("checkpoint/schema mismatch: dataset channels differ")
    preds = ckpt.predict(ds)
    lines = [json.dumps({"id": s.id, "prediction": float(p)}) for s, p in zip(ds.samples, preds)]
    Path(args.out).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True, help="JSON generator config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model with early stopping")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint or run k-fold evaluation")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--metrics", help="output path for the metric report JSON")
    p.add_argument("--kfold", type=int, default=0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="k-fold evaluation of all interpolation-output subsets")
    p.add_argument("--data", help="classification dataset")
    p.add_argument("--data-reg", help="regression dataset")
    p.add_argument("--out", help="JSON output path")
    p.add_argument("--table", help="text table output path")
    p.add_argument("--kfold", type=int, default=5)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="verify analytic gradients by central differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--task", choices=("classification", "regression"), default="classification")
    p.add_argument("--refs", type=int, default=10)
    p.add_argument("--hidden", type=int, default=8)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("predict", help="write per-sample predictions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
    except (DatasetError, ckpt_io.CheckpointError, OSError, RuntimeError, ValueError) as exc:
        print(f"ipnet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
