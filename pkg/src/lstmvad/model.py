"""LSTM variational autoencoder with a progress-based prior.

The encoder LSTM reads the (corrupted) observation stream and emits a
diagonal Gaussian posterior over a K-dim latent per step; a sample from it
drives the decoder LSTM, which emits a diagonal Gaussian over the clean
observation. Recurrent state is reset only at the start of a sequence.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import nn

log = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class DiagGaussian:
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.var = np.asarray(self.var, dtype=np.float64)
        if self.mean.shape != self.var.shape:
            raise nn.DimensionError("mean and variance shapes differ")


def _check_var(var):
    if np.any(~(np.asarray(var) > 0)):
        raise ValueError("variance must be strictly positive")


def kl_term(q, prior_mean):
    """KL( N(q.mean, diag q.var) || N(prior_mean, I) )."""
    _check_var(q.var)
    d = np.asarray(prior_mean, dtype=np.float64) - q.mean
    return 0.5 * float(np.sum(q.var) + d @ d - q.mean.size - np.sum(np.log(q.var)))


def gaussian_nll(x, r):
    """Negative log-density of x under N(r.mean, diag r.var)."""
    _check_var(r.var)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != r.mean.shape:
        raise nn.DimensionError("observation and reconstruction shapes differ")
    e = x - r.mean
    return 0.5 * float(np.sum(np.log(r.var)) + np.sum(e * e / r.var) + x.size * LOG_2PI)


def _kl_rows(mu, var, prior):
    return 0.5 * np.sum(var + (prior - mu) ** 2 - 1.0 - np.log(var), axis=-1)


def _nll_rows(x, mu, var):
    return 0.5 * np.sum(np.log(var) + (x - mu) ** 2 / var + LOG_2PI, axis=-1)


@dataclass
class PriorSchedule:
    p1: np.ndarray
    pT: np.ndarray
    T: int

    def __post_init__(self):
        self.p1 = np.atleast_1d(np.asarray(self.p1, dtype=np.float64))
        self.pT = np.atleast_1d(np.asarray(self.pT, dtype=np.float64))
        if self.p1.shape != self.pT.shape:
            raise nn.DimensionError("prior endpoints differ in length")
        if self.T < 1:
            raise ValueError("sequence length must be >= 1")

    def mean(self, t):
        """Prior centre at 1-based step ``t``."""
        if not 1 <= t <= self.T:
            raise IndexError(f"step {t} outside 1..{self.T}")
        if self.T == 1:
            return self.p1.copy()
        return self.p1 + (t - 1) / (self.T - 1) * (self.pT - self.p1)

    def means(self):
        if self.T == 1:
            return self.p1[None, :].copy()
        frac = np.arange(self.T)[:, None] / (self.T - 1)
        return self.p1 + frac * (self.pT - self.p1)


def prior_mean(t, sched):
    return sched.mean(t)


@dataclass
class LstmVaeConfig:
    input_dim: int
    latent_dim: int = 3
    hidden_enc: int = 32
    hidden_dec: int = 32
    noise_std: float = 0.1
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 4
    batch_size: int = 16
    clip_norm: float = 5.0
    min_delta: float = 1e-4
    prior_start: float = 0.0
    prior_end: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.latent_dim < 1:
            raise ValueError("input_dim and latent_dim must be >= 1")
        if min(self.hidden_enc, self.hidden_dec) < self.latent_dim:
            raise ValueError("hidden sizes must be >= latent_dim")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("patience, batch_size and max_epochs must be >= 1")

    def prior(self, T):
        K = self.latent_dim
        return PriorSchedule(np.full(K, float(self.prior_start)),
                             np.full(K, float(self.prior_end)), T)


@dataclass
class ModelParams:
    enc: nn.LstmParams
    enc_mu: nn.DenseParams
    enc_var: nn.DenseParams
    dec: nn.LstmParams
    dec_mu: nn.DenseParams
    dec_var: nn.DenseParams

    PARTS = ("enc", "enc_mu", "enc_var", "dec", "dec_mu", "dec_var")

    @classmethod
    def init(cls, cfg, rng):
        D, K = cfg.input_dim, cfg.latent_dim
        return cls(
            enc=nn.LstmParams.init(D, cfg.hidden_enc, rng),
            enc_mu=nn.DenseParams.init(cfg.hidden_enc, K, rng, "identity"),
            enc_var=nn.DenseParams.init(cfg.hidden_enc, K, rng, "softplus"),
            dec=nn.LstmParams.init(K, cfg.hidden_dec, rng),
            dec_mu=nn.DenseParams.init(cfg.hidden_dec, D, rng, "identity"),
            dec_var=nn.DenseParams.init(cfg.hidden_dec, D, rng, "softplus"),
        )

    def named(self):
        out = {}
        for part in self.PARTS:
            for k, a in getattr(self, part).arrays().items():
                out[f"{part}.{k}"] = a
        return out

    @classmethod
    def from_named(cls, named):
        def lstm(p):
            return nn.LstmParams(named[f"{p}.W"], named[f"{p}.U"], named[f"{p}.b"])

        def dense(p, act):
            return nn.DenseParams(named[f"{p}.W"], named[f"{p}.b"], act)

        return cls(lstm("enc"), dense("enc_mu", "identity"), dense("enc_var", "softplus"),
                   lstm("dec"), dense("dec_mu", "identity"), dense("dec_var", "softplus"))

    def copy(self):
        return self.from_named({k: a.copy() for k, a in self.named().items()})


@dataclass
class LstmState:
    """Recurrent (h, c) for one stream."""
    h: np.ndarray
    c: np.ndarray


def as_batch(seqs):
    if isinstance(seqs, np.ndarray):
        X = seqs
    else:
        arrs = [np.asarray(getattr(s, "signals", s), dtype=np.float64) for s in seqs]
        if not arrs:
            raise ValueError("empty dataset")
        if len({a.shape for a in arrs}) != 1:
            raise ValueError("sequences must share one (T, D) shape; resample first")
        X = np.stack(arrs)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[0] == 0:
        raise ValueError("expected a (N, T, D) batch of sequences")
    return X


class LstmVae:
    def __init__(self, config, params=None):
        self.config = config
        self.params = params if params is not None else ModelParams.init(
            config, np.random.default_rng(config.seed))

    # -- batched forward/backward ---------------------------------------------

    def _forward(self, X_in, eps):
        p = self.params
        He, enc_cache = nn.lstm_forward(X_in, p.enc)
        mu_z = nn.dense_forward(He, p.enc_mu)
        var_z = nn.dense_forward(He, p.enc_var)
        z = mu_z if eps is None else nn.reparameterize(mu_z, var_z, eps)
        Hd, dec_cache = nn.lstm_forward(z, p.dec)
        mu_x = nn.dense_forward(Hd, p.dec_mu)
        var_x = nn.dense_forward(Hd, p.dec_var)
        return dict(He=He, enc_cache=enc_cache, mu_z=mu_z, var_z=var_z, z=z,
                    Hd=Hd, dec_cache=dec_cache, mu_x=mu_x, var_x=var_x)

    def loss_and_grad(self, X, noise=None, eps=None):
        """Batch-mean of the per-sequence summed negative lower bound, and its gradient.

        ``noise`` (B, T, D) corrupts the encoder input only; ``eps`` (B, T, K)
        is the reparameterisation noise (None -> use posterior means).
        """
        X = as_batch(X)
        B, T, _ = X.shape
        X_in = X if noise is None else X + noise
        f = self._forward(X_in, eps)
        prior = self.config.prior(T).means()
        kl = _kl_rows(f["mu_z"], f["var_z"], prior)
        nll = _nll_rows(X, f["mu_x"], f["var_x"])
        loss = float(np.sum(kl + nll)) / B

        p = self.params
        mu_z, var_z, mu_x, var_x = f["mu_z"], f["var_z"], f["mu_x"], f["var_x"]
        e = mu_x - X
        d_mu_x = e / var_x / B
        d_var_x = 0.5 * (1.0 / var_x - e * e / (var_x * var_x)) / B
        dHd_mu, g_dmu_W, g_dmu_b = nn.dense_backward(f["Hd"], mu_x, d_mu_x, p.dec_mu)
        dHd_var, g_dvar_W, g_dvar_b = nn.dense_backward(f["Hd"], var_x, d_var_x, p.dec_var)
        dz, g_dec, _, _ = nn.lstm_backward(dHd_mu + dHd_var, f["dec_cache"], p.dec)

        d_mu_z = (mu_z - prior) / B + dz
        d_var_z = 0.5 * (1.0 - 1.0 / var_z) / B
        if eps is not None:
            d_var_z = d_var_z + dz * eps / (2.0 * np.sqrt(var_z))
        dHe_mu, g_emu_W, g_emu_b = nn.dense_backward(f["He"], mu_z, d_mu_z, p.enc_mu)
        dHe_var, g_evar_W, g_evar_b = nn.dense_backward(f["He"], var_z, d_var_z, p.enc_var)
        _, g_enc, _, _ = nn.lstm_backward(dHe_mu + dHe_var, f["enc_cache"], p.enc)

        grads = {
            "enc.W": g_enc.W, "enc.U": g_enc.U, "enc.b": g_enc.b,
            "enc_mu.W": g_emu_W, "enc_mu.b": g_emu_b,
            "enc_var.W": g_evar_W, "enc_var.b": g_evar_b,
            "dec.W": g_dec.W, "dec.U": g_dec.U, "dec.b": g_dec.b,
            "dec_mu.W": g_dmu_W, "dec_mu.b": g_dmu_b,
            "dec_var.W": g_dvar_W, "dec_var.b": g_dvar_b,
        }
        return loss, grads

    def loss(self, X, noise=None, eps=None):
        X = as_batch(X)
        X_in = X if noise is None else X + noise
        f = self._forward(X_in, eps)
        prior = self.config.prior(X.shape[1]).means()
        kl = _kl_rows(f["mu_z"], f["var_z"], prior)
        nll = _nll_rows(X, f["mu_x"], f["var_x"])
        return float(np.sum(kl + nll)) / X.shape[0]

    def sequence_loss(self, x, rng):
        """Negative denoising lower bound of one sequence, one latent draw per step."""
        X = as_batch(x)
        noise = corrupt(np.zeros_like(X), self.config.noise_std, rng)
        eps = rng.standard_normal(X.shape[:2] + (self.config.latent_dim,))
        return self.loss(X, noise, eps)

    def validation_loss(self, X):
        """Mean per-sequence loss without corruption, z taken at the posterior mean."""
        return self.loss(X)

    def reconstruct(self, X):
        """Deterministic pass: returns (mu_z, var_z, mu_x, var_x), each (B, T, .)."""
        f = self._forward(as_batch(X), None)
        return f["mu_z"], f["var_z"], f["mu_x"], f["var_x"]

    # -- streaming ---------------------------------------------------------------

    def init_state(self):
        c = self.config
        return (LstmState(np.zeros(c.hidden_enc), np.zeros(c.hidden_enc)),
                LstmState(np.zeros(c.hidden_dec), np.zeros(c.hidden_dec)))

    @staticmethod
    def _step(lstm, x, state):
        if state is None:
            raise RuntimeError("recurrent state not initialised; call init_state() first")
        Hs, cache = nn.lstm_forward(x[None, None, :], lstm, state.h[None, :], state.c[None, :])
        return Hs[0], LstmState(Hs[0, 0], cache[4][0, 0])

    def encode_step(self, x, state):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.config.input_dim,):
            raise nn.DimensionError(f"expected {self.config.input_dim} channels, got {x.shape}")
        h, state = self._step(self.params.enc, x, state)
        q = DiagGaussian(nn.dense_forward(h, self.params.enc_mu)[0],
                         nn.dense_forward(h, self.params.enc_var)[0])
        return q, state

    def decode_step(self, z, state):
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.config.latent_dim,):
            raise nn.DimensionError(f"expected latent of size {self.config.latent_dim}")
        h, state = self._step(self.params.dec, z, state)
        r = DiagGaussian(nn.dense_forward(h, self.params.dec_mu)[0],
                         nn.dense_forward(h, self.params.dec_var)[0])
        return r, state


def corrupt(x, noise_std, rng):
    """x + N(0, noise_std^2) elementwise."""
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if noise_std == 0:
        return x.copy()
    return x + noise_std * rng.standard_normal(x.shape)


def early_stop_index(val_losses, patience, min_delta=0.0):
    """Return the 1-based epoch after which training stops, or None if it would continue."""
    best = np.inf
    since = 0
    for epoch, v in enumerate(val_losses, start=1):
        if v < best - min_delta:
            best = v
            since = 0
        else:
            since += 1
            if since >= patience:
                return epoch
    return None


def train(train_set, val_set, config, init_params=None, progress=None):
    """Fit an LstmVae with Adam and patience-based early stopping.

    Returns (model at the best validation epoch, history list of dicts).
    ``init_params`` warm-starts from a previous fit (pre-train, then fine-tune).
    """
    Xtr = as_batch(train_set)
    Xva = as_batch(val_set)
    if Xtr.shape[1:] != Xva.shape[1:]:
        raise ValueError("train and validation sequences differ in shape")
    if Xtr.shape[2] != config.input_dim:
        raise nn.DimensionError(f"data has {Xtr.shape[2]} channels, config expects {config.input_dim}")

    rng = np.random.default_rng(config.seed)
    model = LstmVae(config, init_params.copy() if init_params is not None
                    else ModelParams.init(config, rng))
    params = model.params.named()
    state = nn.AdamState.zeros_like(params, lr=config.learning_rate)
    best_val, best_params, since = np.inf, model.params.copy(), 0
    history = []
    N, T, _ = Xtr.shape
    K = config.latent_dim
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(N)
        total = 0.0
        for start in range(0, N, config.batch_size):
            idx = order[start:start + config.batch_size]
            Xb = Xtr[idx]
            noise = config.noise_std * rng.standard_normal(Xb.shape)
            eps = rng.standard_normal((len(idx), T, K))
            loss, grads = model.loss_and_grad(Xb, noise, eps)
            grads, _ = nn.clip_by_global_norm(grads, config.clip_norm)
            params, state = nn.adam_update(params, grads, state)
            model.params = ModelParams.from_named(params)
            total += loss * len(idx)
        val = model.validation_loss(Xva)
        history.append({"epoch": epoch, "train_loss": total / N, "val_loss": val})
        if progress:
            progress(history[-1])
        log.debug("epoch %d train %.4f val %.4f", epoch, total / N, val)
        if val < best_val - config.min_delta:
            best_val, best_params, since = val, model.params.copy(), 0
        else:
            since += 1
            if since >= config.patience:
                break
    return LstmVae(config, best_params), history


def pretrain_finetune(pretrain_set, train_set, val_set, config):
    """Two-phase fit: pre-train on a pool, then fine-tune on the target data."""
    pre, hist_pre = train(pretrain_set, val_set, config)
    model, hist_ft = train(train_set, val_set, config, init_params=pre.params)
    return model, {"pretrain": hist_pre, "finetune": hist_ft}


def config_dict(config):
    return asdict(config)
