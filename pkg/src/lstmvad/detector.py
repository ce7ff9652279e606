"""Reconstruction-likelihood anomaly scores, state-based thresholds, online detection.

Step indices in traces are 0-based rows of the (preprocessed) execution.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .model import LOG_2PI, as_batch, corrupt, gaussian_nll
from .threshold import ConstantRegressor, SvrConfig, SvrRegressor


@dataclass
class DetectorState:
    enc: object = None
    dec: object = None
    t: int = 0
    latched: bool = False
    first_index: int = None


@dataclass
class TraceRecord:
    t: int
    z: np.ndarray
    s: float
    s_hat: float
    threshold: float
    decision: bool


@dataclass
class ScoreTrace:
    records: list = field(default_factory=list)

    def append(self, rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    @property
    def scores(self):
        return np.array([r.s for r in self.records])

    @property
    def expected(self):
        return np.array([r.s_hat for r in self.records])

    @staticmethod
    def header(K):
        return ["t", "s", "s_hat", "threshold", "decision"] + [f"z_{k + 1}" for k in range(K)]

    @staticmethod
    def row(rec):
        return ([rec.t, repr(float(rec.s)), repr(float(rec.s_hat)), repr(float(rec.threshold)),
                 int(rec.decision)] + [repr(float(v)) for v in rec.z])

    def write_csv(self, fh):
        K = len(self.records[0].z) if self.records else 0
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.header(K))
        for rec in self.records:
            w.writerow(self.row(rec))


class Detector:
    """A trained LSTM-VAE, its expected-score regressor and preprocessing."""

    def __init__(self, model, regressor, norm=None, channels=None, seq_len=None):
        self.model = model
        self.regressor = regressor
        self.norm = norm
        self.channels = channels
        self.seq_len = seq_len

    @property
    def input_dim(self):
        return self.model.config.input_dim

    def reset(self):
        enc, dec = self.model.init_state()
        return DetectorState(enc, dec)

    def preprocess(self, execution, resample=True):
        if self.channels is not None and list(execution.channels) != list(self.channels):
            if data_mod.layout_of(self.channels) == "features4" and \
                    data_mod.layout_of(execution.channels) == "raw17":
                execution = data_mod.extract_features(execution)
            else:
                raise ValueError("execution channels do not match the detector's layout")
        if resample and self.seq_len is not None and execution.T != self.seq_len:
            execution = data_mod.resample_execution(execution, self.seq_len)
        if self.norm is not None:
            execution = data_mod.normalize_apply(execution, self.norm)
        return execution

    def score_batch(self, X):
        """Batched scoring: returns (s (N, T), z (N, T, K)) for preprocessed sequences."""
        X = as_batch(X)
        mu_z, _, mu_x, var_x = self.model.reconstruct(X)
        e = X - mu_x
        s = 0.5 * np.sum(np.log(var_x) + e * e / var_x + LOG_2PI, axis=-1)
        return s, mu_z

    def residuals(self, X):
        s, z = self.score_batch(X)
        return s - self.regressor.predict(z)

    def with_regressor(self, regressor):
        return Detector(self.model, regressor, self.norm, self.channels, self.seq_len)

    def fixed(self, value):
        return self.with_regressor(ConstantRegressor(value))


def anomaly_score(x, model, state):
    """Score one preprocessed observation; advances ``state`` in place.

    Returns (s, z, state) with z the posterior mean.
    """
    if state is None or state.enc is None or state.dec is None:
        raise RuntimeError("detector state not initialised; call reset()")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.config.input_dim,):
        raise ValueError(f"expected {model.config.input_dim} channels, got {x.shape}")
    q, state.enc = model.encode_step(x, state.enc)
    r, state.dec = model.decode_step(q.mean, state.dec)
    return gaussian_nll(x, r), q.mean, state


def collect_latent_scores(val_set, model, noise_std=0.0, rng=None):
    """Streamed pass over validation sequences: all (z_t, s_t) pairs, state reset per sequence."""
    X = as_batch(val_set)
    if noise_std > 0:
        rng = rng or np.random.default_rng(0)
        Xin = corrupt(X, noise_std, rng)
    else:
        Xin = X
    mu_z, _, mu_x, var_x = model.reconstruct(Xin)
    e = X - mu_x
    s = 0.5 * np.sum(np.log(var_x) + e * e / var_x + LOG_2PI, axis=-1)
    K = mu_z.shape[-1]
    return mu_z.reshape(-1, K), s.reshape(-1)


def fit_threshold_regressor(val_set, model, svr_config=None, noise_std=0.0):
    """Fit the expected-score regressor on non-anomalous validation sequences."""
    X = as_batch(val_set)
    if X.shape[0] == 0:
        raise ValueError("empty validation set")
    Z, S = collect_latent_scores(X, model, noise_std)
    return SvrRegressor.from_config(svr_config or SvrConfig()).fit(Z, S)


def detect_step(x, detector, state, c):
    """Score x, compare with f_hat(z) + c, latch on first crossing."""
    s, z, state = anomaly_score(x, detector.model, state)
    s_hat = float(detector.regressor.predict(z))
    threshold = s_hat + c
    fired = bool(s > threshold)
    if fired and not state.latched:
        state.latched = True
        state.first_index = state.t
    rec = TraceRecord(state.t, z, s, s_hat, threshold, fired)
    state.t += 1
    return state.latched, rec


def run_detection(execution, detector, c, on_record=None):
    """Online loop over a preprocessed execution (or (T, D) array).

    Returns (verdict, first detection index or None, ScoreTrace).
    """
    X = np.asarray(getattr(execution, "signals", execution), dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty execution")
    state = detector.reset()
    trace = ScoreTrace()
    for x in X:
        _, rec = detect_step(x, detector, state, c)
        trace.append(rec)
        if on_record is not None:
            on_record(rec)
    return state.latched, state.first_index, trace


def first_crossing(residual, c):
    """Index of the first step with residual > c, or None."""
    idx = np.flatnonzero(np.asarray(residual) > c)
    return int(idx[0]) if idx.size else None
