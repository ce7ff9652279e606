"""ROC/AUC over a sensitivity sweep, leave-one-group-out cross-validation and reports.

Rates are execution-level for every method: a sequence is flagged at a
sweep value iff any of its per-step (or per-window) scores exceeds it.
"""
import csv
import hashlib
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data as data_mod
from .baselines import AeConfig, EncDecConfig, OsvmConfig, BASELINES
from .baselines.osvm import OsvmBaseline
from .detector import Detector, fit_threshold_regressor
from .model import LstmVaeConfig, as_batch, train
from .threshold import SvrConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("lstmvae", "encdecad", "ae", "osvm", "random")


class UndefinedRateError(ValueError):
    pass


@dataclass
class RocPoint:
    param: float  # sweep value; None for the appended endpoints
    tpr: float
    fpr: float


@dataclass
class EvalConfig:
    seq_len: int = 140
    val_fraction: float = 0.2
    sweep_points: int = 41
    pad: float = 1.0            # residual units, LSTM-VAE
    baseline_pad: float = 0.05  # fraction of the validation score range
    nu_grid: tuple = (1e-3, 1.0)
    op_percentile: float = 95.0
    seed: int = 0

    def __post_init__(self):
        self.nu_grid = tuple(self.nu_grid)
        if self.sweep_points < 2:
            raise ValueError("sweep_points must be >= 2")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")


# -- ROC primitives ------------------------------------------------------------

def sweep_grid(val_scores, n=41, pad=1.0):
    """n evenly spaced values over [min - pad, max + pad]."""
    v = np.asarray(val_scores, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no validation scores")
    return np.linspace(float(v.min()) - pad, float(v.max()) + pad, n)


def _rates(flags, labels):
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedRateError("need both anomalous and non-anomalous executions")
    flags = np.asarray(flags, dtype=bool)
    return (float(np.sum(flags & labels)) / n_pos, float(np.sum(flags & ~labels)) / n_neg)


def roc_points(flag_matrix, labels, params):
    """flag_matrix (n_sweep, N) -> RocPoints with (0,0) and (1,1) appended."""
    pts = [RocPoint(None, 0.0, 0.0)]
    for p, flags in zip(params, flag_matrix):
        tpr, fpr = _rates(flags, labels)
        pts.append(RocPoint(float(p), tpr, fpr))
    pts.append(RocPoint(None, 1.0, 1.0))
    return pts


def roc_curve(scores, labels, sweep):
    """Threshold sweep: ``scores`` is per-execution (N,) or per-step (N, T)."""
    s = np.asarray(scores, dtype=np.float64)
    peak = s.max(axis=1) if s.ndim == 2 else s
    flags = peak[None, :] > np.asarray(sweep, dtype=np.float64)[:, None]
    return roc_points(flags, labels, sweep)


def auc(points):
    """Trapezoidal area over FPR-sorted points."""
    if len(points) < 2:
        raise ValueError("need at least 2 ROC points")
    xy = sorted((p.fpr, p.tpr) if isinstance(p, RocPoint) else tuple(p) for p in points)
    x = np.array([a for a, _ in xy])
    y = np.array([b for _, b in xy])
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def first_indices(scores, thresholds, offset=0):
    """First step with score > threshold, per (threshold, execution); -1 if none."""
    s = np.asarray(scores)
    thr = np.asarray(thresholds, dtype=np.float64).reshape(-1, 1, 1)
    hit = s[None, :, :] > thr
    first = np.argmax(hit, axis=-1) + offset
    return np.where(hit.any(axis=-1), first, -1)


# -- methods under evaluation --------------------------------------------------

@dataclass
class SweepResult:
    """One method variant on one fold's test group."""
    params: np.ndarray   # (n_sweep,)
    flags: np.ndarray    # (n_sweep, N) bool
    op_first: np.ndarray  # (N,) first flagged step at the operating point, -1 if none


def _threshold_sweep(val_scores, test_scores, pad, cfg, offset):
    grid = sweep_grid(val_scores, cfg.sweep_points, pad)
    flags = test_scores.max(axis=1)[None, :] > grid[:, None]
    c_op = float(np.percentile(val_scores.max(axis=1), cfg.op_percentile))
    op_first = first_indices(test_scores, np.array([c_op]), offset)[0]
    return SweepResult(grid, flags, op_first)


def fingerprint(arrays):
    h = hashlib.sha256()
    for k in sorted(arrays):
        a = np.ascontiguousarray(arrays[k])
        h.update(k.encode())
        h.update(str(a.dtype).encode() + str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


class LstmVaeMethod:
    """LSTM-VAE with both the state-based and the fixed threshold."""

    name = "lstmvae"
    window = 1

    def __init__(self, config, svr_config=None, svr_noise_std=0.0):
        self.config = config
        self.svr_config = svr_config or SvrConfig()
        self.svr_noise_std = svr_noise_std

    def fit(self, train_set, val_set):
        self.model, self.history = train(train_set, val_set, self.config)
        reg = fit_threshold_regressor(val_set, self.model, self.svr_config, self.svr_noise_std)
        self.detector = Detector(self.model, reg)
        s_val, _ = self.detector.score_batch(val_set)
        self.fixed_value = float(np.mean(s_val))
        return self

    def arrays(self):
        out = {f"model.{k}": v for k, v in self.model.params.named().items()}
        out.update({f"regressor.{k}": v for k, v in self.detector.regressor.state().items()})
        return out

    def variants(self, val, test, cfg):
        out = {}
        sv, zv = self.detector.score_batch(val)
        st, zt = self.detector.score_batch(test)
        reg = self.detector.regressor
        pairs = {"lstmvae": (sv - reg.predict(zv), st - reg.predict(zt)),
                 "lstmvae_fixed": (sv - self.fixed_value, st - self.fixed_value)}
        for name, (rv, rt) in pairs.items():
            out[name] = _threshold_sweep(rv, rt, cfg.pad, cfg, 0)
        return out


class BaselineMethod:
    """Adapter from a baselines.Baseline to the harness."""

    def __init__(self, baseline):
        self.baseline = baseline
        self.name = baseline.name
        self.window = baseline.window

    def fit(self, train_set, val_set):
        self.train_set = train_set
        self.baseline.fit(train_set, val_set)
        return self

    def arrays(self):
        return self.baseline.arrays()

    def variants(self, val, test, cfg):
        b = self.baseline
        sv = b.score_batch(val)
        st = b.score_batch(test)
        pad = cfg.baseline_pad * float(sv.max() - sv.min())
        res = _threshold_sweep(sv, st, pad, cfg, b.window - 1)
        if not isinstance(b, OsvmBaseline):
            return {self.name: res}
        # headline knob: refit over a nu grid, flag on the any-window-outside rule
        nus = np.geomspace(cfg.nu_grid[0], cfg.nu_grid[1], cfg.sweep_points)
        flags = np.stack([b.with_nu(self.train_set, nu).score_batch(test).max(axis=1) > 0.0
                          for nu in nus])
        op_first = first_indices(st, np.array([0.0]), b.window - 1)[0]
        return {"osvm": SweepResult(nus, flags, op_first), "osvm_offset": res}


def method_factory(name, input_dim, seed, overrides=None):
    """Build a fresh, unfitted method; ``overrides`` maps config fields to values."""
    o = dict(overrides or {})
    if name == "lstmvae":
        svr = SvrConfig(**o.pop("svr", {}))
        noise = o.pop("svr_noise_std", 0.0)
        return LstmVaeMethod(LstmVaeConfig(input_dim=input_dim, seed=seed, **o), svr, noise)
    if name == "random":
        return BaselineMethod(BASELINES["random"](seed=seed))
    if name == "osvm":
        return BaselineMethod(BASELINES["osvm"](OsvmConfig(**o)))
    if name == "ae":
        return BaselineMethod(BASELINES["ae"](AeConfig(seed=seed, **o)))
    if name == "encdecad":
        return BaselineMethod(BASELINES["encdecad"](EncDecConfig(seed=seed, **o)))
    raise ValueError(f"unknown method {name!r}; choose from {METHODS}")


# -- cross-validation ----------------------------------------------------------

@dataclass
class Fold:
    group: str
    train: list
    val: list
    test: list
    stats: object
    seed: int


def fold_seed(master, k):
    return int(np.random.SeedSequence([int(master), int(k)]).generate_state(1)[0])


def make_folds(dataset, cfg, layout="raw17"):
    """Leave-one-group-out folds with per-fold train/val split and normalisation."""
    groups = dataset.groups
    if len(groups) < 2:
        raise ValueError("need at least 2 groups")
    src_layout = data_mod.layout_of(dataset.executions[0].channels)
    features = layout == "features4" and src_layout == "raw17"
    if layout == "raw17" and src_layout != "raw17":
        raise ValueError("dataset does not carry the 17-channel layout")
    folds = []
    for k, g in enumerate(groups):
        test = [e for e in dataset.executions if e.group == g]
        if not any(e.is_anomalous for e in test) or all(e.is_anomalous for e in test):
            warnings.warn(f"group {g} lacks one of the two classes; fold skipped")
            continue
        pool = [e for e in dataset.executions if e.group != g and not e.is_anomalous]
        seed = fold_seed(cfg.seed, k)
        perm = np.random.default_rng(seed).permutation(len(pool))
        n_val = max(1, int(round(cfg.val_fraction * len(pool))))
        val = [pool[i] for i in sorted(perm[:n_val])]
        tr = [pool[i] for i in sorted(perm[n_val:])]
        trp, stats = data_mod.preprocess(tr, cfg.seq_len, features=features)
        vap, _ = data_mod.preprocess(val, cfg.seq_len, stats, features=features)
        tep, _ = data_mod.preprocess(test, cfg.seq_len, stats, features=features)
        folds.append(Fold(g, trp, vap, tep, stats, seed))
    return folds


@dataclass
class EvalReport:
    method: str
    layout: str
    fold_aucs: dict
    pooled_auc: float
    mean_fold_auc: float
    roc: list
    delay: dict
    folds: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    created: str = ""

    def to_dict(self):
        d = asdict(self)
        d["roc"] = [asdict(p) if isinstance(p, RocPoint) else p for p in self.roc]
        return d

    def content_hash(self):
        d = self.to_dict()
        d.pop("created", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def delay_stats(records):
    """records: list of (kind, onset, first index or -1)."""
    def summary(rows):
        det = [(o, f) for _, o, f in rows if f >= 0]
        d = [f - o for o, f in det]
        return {"n_anomalous": len(rows), "n_detected": len(det),
                "median": float(np.median(d)) if d else None,
                "mean": float(np.mean(d)) if d else None,
                "frac_at_or_after_onset": float(np.mean([x >= 0 for x in d])) if d else None}
    out = summary(records)
    out["by_type"] = {k: summary([r for r in records if r[0] == k])
                      for k in sorted({r[0] for r in records})}
    return out


def build_report(name, layout, fold_results, config=None):
    """fold_results: list of (Fold, SweepResult, fold info dict)."""
    fold_aucs, flags, labels, delays, infos = {}, [], [], [], []
    params = None
    for fold, res, info in fold_results:
        lab = np.array([e.is_anomalous for e in fold.test])
        fold_aucs[fold.group] = auc(roc_points(res.flags, lab, res.params))
        flags.append(res.flags)
        labels.append(lab)
        params = res.params
        for e, f in zip(fold.test, res.op_first):
            if e.is_anomalous:
                delays.append((e.anomaly_type, int(e.onset), int(f)))
        infos.append(info)
    all_flags = np.concatenate(flags, axis=1)
    pts = roc_points(all_flags, np.concatenate(labels), np.arange(len(params), dtype=float))
    # pooled points carry the sweep index: per-fold grids differ
    return EvalReport(
        method=name, layout=layout, fold_aucs=fold_aucs, pooled_auc=auc(pts),
        mean_fold_auc=float(np.mean(list(fold_aucs.values()))), roc=pts,
        delay=delay_stats(delays), folds=infos, config=config or {})


def run_folds(dataset, methods, cfg=None, layout="raw17", overrides=None, progress=None):
    """Train every method once per fold; returns {variant name: EvalReport}."""
    cfg = cfg or EvalConfig()
    overrides = overrides or {}
    folds = make_folds(dataset, cfg, layout)
    if not folds:
        raise ValueError("no usable folds")
    D = folds[0].train[0].D
    collected = {}
    for fold in folds:
        tr, va, te = data_mod.stack(fold.train), data_mod.stack(fold.val), data_mod.stack(fold.test)
        for name in methods:
            t0 = time.perf_counter()
            m = method_factory(name, D, fold.seed, overrides.get(name)).fit(tr, va)
            info = {"group": fold.group, "n_train": len(fold.train), "n_val": len(fold.val),
                    "n_test": len(fold.test), "model_hash": fingerprint(m.arrays())}
            for variant, res in m.variants(va, te, cfg).items():
                collected.setdefault(variant, []).append((fold, res, info))
            if progress:
                progress(f"{layout} fold {fold.group} {name} {time.perf_counter() - t0:.1f}s")
    snapshot = {"eval": asdict(cfg), "overrides": overrides}
    return {v: build_report(v, layout, rows, snapshot) for v, rows in collected.items()}


def cross_validate(dataset, method, config=None, layout="raw17", overrides=None):
    """Leave-one-group-out EvalReport for one method (its headline variant)."""
    return run_folds(dataset, [method], config, layout, overrides)[method]


def threshold_ablation(detector, val, test, labels, cfg=None):
    """State-based vs fixed threshold on one fitted Detector.

    The fixed variant replaces the regressor by the mean validation score.
    Each curve's c grid spans its own validation residuals.
    Returns {"state": [RocPoint], "fixed": [RocPoint]}.
    """
    cfg = cfg or EvalConfig()
    sv, zv = detector.score_batch(as_batch(val))
    st, zt = detector.score_batch(as_batch(test))
    fixed = float(np.mean(sv))
    out = {}
    for name, shift_v, shift_t in (("state", detector.regressor.predict(zv), detector.regressor.predict(zt)),
                                   ("fixed", fixed, fixed)):
        grid = sweep_grid(sv - shift_v, cfg.sweep_points, cfg.pad)
        out[name] = roc_curve(st - shift_t, labels, grid)
    return out


# -- output ----------------------------------------------------------------------

def write_report(report, path):
    d = report.to_dict()
    d["created"] = d["created"] or time.strftime("%Y-%m-%dT%H:%M:%S")
    d["content_hash"] = report.content_hash()
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_roc_csv(points, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "fpr", "tpr"])
        for p in points:
            w.writerow(["" if p.param is None else repr(p.param), repr(p.fpr), repr(p.tpr)])
