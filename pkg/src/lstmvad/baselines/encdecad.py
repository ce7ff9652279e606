"""LSTM encoder-decoder over 3-step windows with a Gaussian model of reconstruction errors.

The encoder's final (h, c) seeds the decoder, which emits the window in
reverse order and feeds each prediction back as its next input. The
anomaly score is the Mahalanobis distance of |x - x'| under a diagonal
Gaussian fitted on validation windows.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .. import nn
from ..model import as_batch
from .base import Baseline, FitConfig, fit_adam, windows

VAR_FLOOR = 1e-8


@dataclass
class EncDecConfig:
    window: int = 3
    hidden: int = 32
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 30
    patience: int = 4
    seed: int = 0


@dataclass
class ErrorModel:
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.var = np.maximum(np.asarray(self.var, dtype=np.float64), VAR_FLOOR)

    @classmethod
    def fit(cls, errors):
        errors = np.atleast_2d(errors)
        return cls(errors.mean(axis=0), errors.var(axis=0))

    def mahalanobis(self, e):
        d = np.asarray(e) - self.mean
        return np.sum(d * d / self.var, axis=-1)


def _parts(named):
    enc = nn.LstmParams(named["enc.W"], named["enc.U"], named["enc.b"])
    dec = nn.LstmParams(named["dec.W"], named["dec.U"], named["dec.b"])
    out = nn.DenseParams(named["out.W"], named["out.b"])
    return enc, dec, out


def init_params(D, cfg, rng):
    enc = nn.LstmParams.init(D, cfg.hidden, rng)
    dec = nn.LstmParams.init(D, cfg.hidden, rng)
    out = nn.DenseParams.init(cfg.hidden, D, rng)
    named = {}
    for prefix, p in (("enc", enc), ("dec", dec), ("out", out)):
        named.update({f"{prefix}.{k}": v for k, v in p.arrays().items()})
    return named


def forward(named, X):
    """X (B, L, D) -> (reconstruction (B, L, D), cache)."""
    enc, dec, out = _parts(named)
    B, L, D = X.shape
    _, ecache = nn.lstm_forward(X, enc)
    h, c = ecache[3][:, -1], ecache[4][:, -1]
    hs, preds, dcaches = [h], [nn.dense_forward(h, out)], []
    for _ in range(1, L):
        Hs, cache = nn.lstm_forward(preds[-1][:, None, :], dec, h, c)
        h, c = Hs[:, 0], cache[4][:, 0]
        hs.append(h)
        preds.append(nn.dense_forward(h, out))
        dcaches.append(cache)
    recon = np.stack(preds[::-1], axis=1)
    return recon, (ecache, hs, preds, dcaches)


def loss_grad(named, X, need_grad=True):
    """Mean over windows of the summed squared reconstruction error."""
    recon, (ecache, hs, preds, dcaches) = forward(named, X)
    B, L, D = X.shape
    err = recon - X
    loss = float(np.sum(err * err) / B)
    if not need_grad:
        return loss, None
    enc, dec, out = _parts(named)
    dloss = 2.0 * err / B
    g = {k: np.zeros_like(v) for k, v in named.items()}
    dh_carry = np.zeros_like(hs[0])
    dc_carry = np.zeros_like(hs[0])
    dpred_in = np.zeros((B, D))
    for j in range(L - 1, -1, -1):
        dpred = dloss[:, L - 1 - j] + dpred_in
        dh_out, dWo, dbo = nn.dense_backward(hs[j], preds[j], dpred, out)
        g["out.W"] += dWo
        g["out.b"] += dbo
        dh = dh_out + dh_carry
        if j >= 1:
            dX, pg, dh_carry, dc_carry = nn.lstm_backward(dh[:, None, :], dcaches[j - 1], dec, dc_carry)
            g["dec.W"] += pg.W
            g["dec.U"] += pg.U
            g["dec.b"] += pg.b
            dpred_in = dX[:, 0]
        else:
            dHs = np.zeros((B, L, dh.shape[1]))
            dHs[:, -1] = dh
            _, pg, _, _ = nn.lstm_backward(dHs, ecache, enc, dc_carry)
            g["enc.W"] += pg.W
            g["enc.U"] += pg.U
            g["enc.b"] += pg.b
    return loss, g


class EncDecAdBaseline(Baseline):
    name = "encdecad"

    def __init__(self, config=None):
        self.cfg = config or EncDecConfig()
        self.window = self.cfg.window
        self.params = None
        self.error_model = None
        self.history = []

    def _windows(self, X):
        W = windows(as_batch(X), self.window)
        return W.reshape(-1, self.window, as_batch(X).shape[-1])

    def error_vectors(self, Wseq):
        recon, _ = forward(self.params, Wseq)
        return np.abs(Wseq - recon).reshape(Wseq.shape[0], -1)

    def fit(self, train, val):
        c = self.cfg
        Wtr = self._windows(train)
        Wva = self._windows(val)
        rng = np.random.default_rng(c.seed)
        fit_cfg = FitConfig(c.learning_rate, c.batch_size, c.max_epochs, c.patience, seed=c.seed)
        self.params, self.history = fit_adam(init_params(Wtr.shape[-1], c, rng), loss_grad,
                                             Wtr, Wva, fit_cfg, rng)
        self.error_model = ErrorModel.fit(self.error_vectors(Wva))
        return self

    def score_windows(self, W):
        L = self.window
        return self.error_model.mahalanobis(self.error_vectors(W.reshape(W.shape[0], L, -1)))

    def config(self):
        return asdict(self.cfg)

    def arrays(self):
        out = dict(self.params)
        out["error.mean"] = self.error_model.mean
        out["error.var"] = self.error_model.var
        return out

    @classmethod
    def from_state(cls, config, arrays):
        b = cls(EncDecConfig(**config))
        arrays = {k: np.asarray(v) for k, v in arrays.items()}
        b.error_model = ErrorModel(arrays.pop("error.mean"), arrays.pop("error.var"))
        b.params = arrays
        return b
