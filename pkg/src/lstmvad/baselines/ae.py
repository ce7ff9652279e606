"""Feed-forward autoencoder on 3-step sliding windows; score = squared reconstruction error."""
from dataclasses import asdict, dataclass

import numpy as np

from .. import nn
from ..model import as_batch
from .base import Baseline, FitConfig, fit_adam, windows

LAYERS = ("l1", "l2", "l3", "l4")


@dataclass
class AeConfig:
    window: int = 3
    hidden: int = 16
    code: int = 3
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 4
    seed: int = 0


def _layers(named):
    acts = ("tanh", "tanh", "tanh", "identity")
    return [nn.DenseParams(named[f"{n}.W"], named[f"{n}.b"], a) for n, a in zip(LAYERS, acts)]


def init_params(n_in, cfg, rng):
    sizes = (n_in, cfg.hidden, cfg.code, cfg.hidden, n_in)
    out = {}
    for k, name in enumerate(LAYERS):
        p = nn.DenseParams.init(sizes[k], sizes[k + 1], rng)
        out[f"{name}.W"], out[f"{name}.b"] = p.W, p.b
    return out


def forward(named, W):
    acts = [W]
    for p in _layers(named):
        acts.append(nn.dense_forward(acts[-1], p))
    return acts


def loss_grad(named, W, need_grad=True):
    """Mean over windows of the summed squared error."""
    acts = forward(named, W)
    err = acts[-1] - W
    loss = float(np.sum(err * err) / W.shape[0])
    if not need_grad:
        return loss, None
    grads = {}
    g = 2.0 * err / W.shape[0]
    for k in range(len(LAYERS) - 1, -1, -1):
        p = _layers(named)[k]
        g, dW, db = nn.dense_backward(acts[k], acts[k + 1], g, p)
        grads[f"{LAYERS[k]}.W"], grads[f"{LAYERS[k]}.b"] = dW, db
    return loss, grads


def reconstruction_error(named, W):
    err = forward(named, W)[-1] - W
    return np.sum(err * err, axis=-1)


class AutoencoderBaseline(Baseline):
    name = "ae"

    def __init__(self, config=None):
        self.cfg = config or AeConfig()
        self.window = self.cfg.window
        self.params = None
        self.history = []

    def fit(self, train, val):
        c = self.cfg
        Wtr = windows(as_batch(train), c.window)
        Wva = windows(as_batch(val), c.window)
        Wtr = Wtr.reshape(-1, Wtr.shape[-1])
        Wva = Wva.reshape(-1, Wva.shape[-1])
        rng = np.random.default_rng(c.seed)
        fit_cfg = FitConfig(c.learning_rate, c.batch_size, c.max_epochs, c.patience, seed=c.seed)
        self.params, self.history = fit_adam(init_params(Wtr.shape[1], c, rng), loss_grad,
                                             Wtr, Wva, fit_cfg, rng)
        return self

    def score_windows(self, W):
        return reconstruction_error(self.params, W)

    def config(self):
        return asdict(self.cfg)

    def arrays(self):
        return dict(self.params)

    @classmethod
    def from_state(cls, config, arrays):
        b = cls(AeConfig(**config))
        b.params = {k: np.asarray(v) for k, v in arrays.items()}
        return b
