"""Command-line entry point: ``lstmvad {generate,train,detect,evaluate}``.

Exit codes: 0 success (or no anomaly), 2 anomaly detected, 1 error.
"""
import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import data as data_mod
from . import evaluation as ev
from .baselines import BASELINES
from .config import LAYOUT_CHOICES, ConfigError, load_config
from .detector import Detector, ScoreTrace, detect_step, fit_threshold_regressor
from .evaluation import method_factory
from .model import pretrain_finetune, train
from .synth import generate_benchmark

EXIT_OK, EXIT_ERROR, EXIT_ANOMALY = 0, 1, 2

log = logging.getLogger("lstmvad")


class CliError(Exception):
    pass


def _prepare_out(path, force):
    path = Path(path)
    if path.exists() and any(path.iterdir()) and not force:
        raise CliError(f"output directory {path} is not empty (use --force)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(args):
    return load_config(args.config, args.set or ())


def _load_dataset(path):
    try:
        return data_mod.load_dataset(path)
    except FileNotFoundError as exc:
        raise CliError(f"no dataset at {path}: {exc}") from exc


# -- generate ------------------------------------------------------------------

def cmd_generate(args):
    cfg = _config(args)
    out = _prepare_out(args.out or Path(cfg["output_dir"]) / "dataset", args.force)
    ds = generate_benchmark(cfg.benchmark())
    data_mod.save_dataset(ds, out)
    cfg.save(out / "config.json")
    n_anom = sum(e.is_anomalous for e in ds.executions)
    print(f"wrote {len(ds.executions)} executions ({n_anom} anomalous) to {out}")
    return EXIT_OK


# -- train ---------------------------------------------------------------------

def _check_normal(executions, split):
    bad = [e.id for e in executions if e.is_anomalous]
    if bad:
        raise CliError(f"{split} split contains anomalous executions ({', '.join(bad[:5])}); "
                       "training uses non-anomalous data only")


def cmd_train(args):
    cfg = _config(args)
    ds = _load_dataset(args.dataset)
    for split in ("train", "val"):
        if not ds.splits.get(split):
            raise CliError(f"dataset manifest has no {split!r} split")
    train_ex, val_ex = ds.split("train"), ds.split("val")
    _check_normal(train_ex, "train")
    _check_normal(val_ex, "val")
    out = _prepare_out(args.out or Path(cfg["output_dir"]) / f"train_{args.method}", args.force)

    T = cfg["eval"]["seq_len"]
    features = args.layout == "features4" and data_mod.layout_of(train_ex[0].channels) == "raw17"
    trp, stats = data_mod.preprocess(train_ex, T, features=features)
    vap, _ = data_mod.preprocess(val_ex, T, stats, features=features)
    channels = list(trp[0].channels)
    Xtr, Xva = data_mod.stack(trp), data_mod.stack(vap)
    pct = cfg["detector"]["op_percentile"]

    if args.method == "lstmvae":
        mcfg = cfg.model(Xtr.shape[2])
        if args.pretrain:
            pool = [e for e in _load_dataset(args.pretrain).executions if not e.is_anomalous]
            if not pool:
                raise CliError("pre-training pool holds no non-anomalous executions")
            pre, _ = data_mod.preprocess(pool, T, stats, features=features)
            model, hist = pretrain_finetune(data_mod.stack(pre), Xtr, Xva, mcfg)
            history = [dict(h, phase=p) for p in ("pretrain", "finetune") for h in hist[p]]
        else:
            model, history = train(Xtr, Xva, mcfg,
                                   progress=lambda h: log.info("epoch %(epoch)d val %(val_loss).4f", h))
            history = [dict(h, phase="train") for h in history]
        reg = fit_threshold_regressor(Xva, model, cfg.svr(), cfg["detector"]["svr_noise_std"])
        det = Detector(model, reg, stats, channels, T)
        c_default = float(np.percentile(det.residuals(Xva).max(axis=1), pct))
        path = ckpt.save_detector(out / "model.ckpt", det, {"c_default": c_default})
    else:
        if args.pretrain:
            raise CliError("--pretrain is only supported for the lstmvae method")
        m = method_factory(args.method, Xtr.shape[2], cfg.seed, cfg.method_overrides(args.method))
        m.fit(Xtr, Xva)
        b = m.baseline
        history = [dict(h, phase="train") for h in getattr(b, "history", [])]
        c_default = 0.0 if args.method == "osvm" else float(
            np.percentile(b.score_batch(Xva).max(axis=1), pct))
        path = ckpt.save_baseline(out / "model.ckpt", b, stats, channels, T, {"c_default": c_default})

    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phase", "epoch", "train_loss", "val_loss"])
        for h in history:
            w.writerow([h["phase"], h["epoch"], repr(float(h["train_loss"])), repr(float(h["val_loss"]))])
    cfg.save(out / "config.json")
    print(f"checkpoint {path} sha256={ckpt.file_hash(path)}")
    return EXIT_OK


# -- detect --------------------------------------------------------------------

def _preprocess_for(execution, channels, seq_len, norm):
    det = Detector(None, None, norm, channels, seq_len)
    return det.preprocess(execution)


def cmd_detect(args):
    try:
        loaded = ckpt.load_any(args.checkpoint)
    except (ckpt.CheckpointError, OSError) as exc:
        raise CliError(str(exc)) from exc
    meta_c = ckpt.load_checkpoint(args.checkpoint).meta.get("c_default", 0.0)
    c = meta_c if args.c is None else args.c
    try:
        ex = data_mod.load_execution(args.execution)
    except (data_mod.ParseError, OSError) as exc:
        raise CliError(str(exc)) from exc
    out = sys.stdout
    w = csv.writer(out, lineterminator="\n")

    if isinstance(loaded, Detector):
        x = loaded.preprocess(ex)
        state = loaded.reset()
        w.writerow(ScoreTrace.header(loaded.model.config.latent_dim))
        for row in x.signals:
            _, rec = detect_step(row, loaded, state, c)
            w.writerow(ScoreTrace.row(rec))
            out.flush()
        verdict, first = state.latched, state.first_index
    else:
        x = _preprocess_for(ex, loaded.channels, loaded.seq_len, loaded.norm)
        b = loaded.baseline
        scores = b.score_execution(x)
        w.writerow(["t", "s", "threshold", "decision"])
        first = None
        for j, s in enumerate(scores):
            t = b.step_index(j)
            fired = bool(s > c)
            if fired and first is None:
                first = t
            w.writerow([t, repr(float(s)), repr(float(c)), int(fired)])
            out.flush()
        verdict = first is not None

    msg = f"anomaly detected at step {first}" if verdict else "no anomaly"
    print(f"verdict: {msg} (c={c!r})", file=sys.stderr)
    return EXIT_ANOMALY if verdict else EXIT_OK


# -- evaluate ------------------------------------------------------------------

def cmd_evaluate(args):
    cfg = _config(args)
    methods = args.methods.split(",") if args.methods else list(cfg["methods"])
    for m in methods:
        if m not in ev.METHODS:
            raise CliError(f"unknown method {m!r}; choose from {', '.join(ev.METHODS)}")
    if args.layout == "both":
        layouts = list(LAYOUT_CHOICES)
    elif args.layout:
        layouts = [args.layout]
    else:
        layouts = list(cfg["layouts"])
    ds = _load_dataset(args.dataset) if args.dataset else generate_benchmark(cfg.benchmark())
    out = _prepare_out(args.out or Path(cfg["output_dir"]) / "eval", args.force)
    overrides = {m: cfg.method_overrides(m) for m in methods}
    summary = {}
    for layout in layouts:
        reports = ev.run_folds(ds, methods, cfg.eval(), layout, overrides,
                               progress=lambda msg: log.info(msg))
        for name, rep in sorted(reports.items()):
            rep.config["run"] = cfg.data
            ev.write_report(rep, out / f"report_{name}_{layout}.json")
            ev.write_roc_csv(rep.roc, out / f"roc_{name}_{layout}.csv")
            summary.setdefault(name, {})[layout] = {"pooled_auc": rep.pooled_auc,
                                                    "mean_fold_auc": rep.mean_fold_auc}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    cfg.save(out / "config.json")
    width = max(len(n) for n in summary)
    print(f"{'method':<{width}}  " + "  ".join(f"{lay:>9}" for lay in layouts))
    for name in sorted(summary):
        cells = [f"{summary[name][lay]['pooled_auc']:9.4f}" if lay in summary[name] else " " * 9
                 for lay in layouts]
        print(f"{name:<{width}}  " + "  ".join(cells))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON run configuration (see lstmvad.config)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set model.max_epochs=20 (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="lstmvad", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    _common(p)
    p.add_argument("--out", help="dataset directory (default <output_dir>/dataset)")
    p.add_argument("--force", action="store_true", help="allow a non-empty output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a detector on a dataset's train/val splits")
    _common(p)
    p.add_argument("--dataset", required=True, help="dataset directory with manifest.json")
    p.add_argument("--method", default="lstmvae", choices=["lstmvae"] + sorted(set(BASELINES) - {"random"}))
    p.add_argument("--layout", default="raw17", choices=LAYOUT_CHOICES)
    p.add_argument("--pretrain", help="dataset directory whose non-anomalous executions pre-train the model")
    p.add_argument("--out", help="output directory (default <output_dir>/train_<method>)")
    p.add_argument("--force", action="store_true", help="allow a non-empty output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="stream per-step scores for one execution file")
    p.add_argument("--checkpoint", required=True, help="model.ckpt written by train")
    p.add_argument("--execution", required=True, help="execution CSV file")
    p.add_argument("--c", type=float, default=None,
                   help="sensitivity constant (default: the checkpoint's operating point)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="leave-one-group-out ROC/AUC for several methods")
    _common(p)
    p.add_argument("--dataset", help="dataset directory (default: generate from the config)")
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(ev.METHODS)}")
    p.add_argument("--layout", choices=list(LAYOUT_CHOICES) + ["both"])
    p.add_argument("--out", help="output directory (default <output_dir>/eval)")
    p.add_argument("--force", action="store_true", help="allow a non-empty output directory")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (CliError, ConfigError, data_mod.ParseError, ckpt.CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
