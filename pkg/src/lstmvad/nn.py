"""Dense/recurrent building blocks with hand-derived gradients, plus Adam.

Gate order inside every LSTM weight block is input, forget, candidate, output.
All arrays are float64.
"""
from dataclasses import dataclass

import numpy as np

from . import _backend

GATE_ORDER = ("input", "forget", "candidate", "output")
ACTIVATIONS = ("identity", "tanh", "softplus")


class DimensionError(ValueError):
    pass


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))


def softplus(u):
    """log(1 + e^u) without overflow."""
    return np.logaddexp(0.0, np.asarray(u, dtype=np.float64))


@dataclass
class LstmParams:
    W: np.ndarray  # (4H, I)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        G4, H = self.U.shape
        if G4 != 4 * H or self.W.shape[0] != G4 or self.b.shape != (G4,):
            raise DimensionError(
                f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def hidden_size(self):
        return self.U.shape[1]

    @property
    def input_size(self):
        return self.W.shape[1]

    @classmethod
    def init(cls, input_size, hidden_size, rng):
        lim_w = 1.0 / np.sqrt(input_size)
        lim_u = 1.0 / np.sqrt(hidden_size)
        W = rng.uniform(-lim_w, lim_w, (4 * hidden_size, input_size))
        U = rng.uniform(-lim_u, lim_u, (4 * hidden_size, hidden_size))
        b = np.zeros(4 * hidden_size)
        b[hidden_size:2 * hidden_size] = 1.0  # forget gate
        return cls(W, U, b)

    def arrays(self):
        return {"W": self.W, "U": self.U, "b": self.b}


@dataclass
class DenseParams:
    W: np.ndarray  # (O, I)
    b: np.ndarray  # (O,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DimensionError(f"inconsistent dense shapes W{self.W.shape} b{self.b.shape}")

    @classmethod
    def init(cls, input_size, output_size, rng, activation="identity"):
        lim = 1.0 / np.sqrt(input_size)
        return cls(rng.uniform(-lim, lim, (output_size, input_size)),
                   np.zeros(output_size), activation)

    def arrays(self):
        return {"W": self.W, "b": self.b}


def _activate(pre, activation):
    if activation == "identity":
        return pre
    if activation == "tanh":
        return np.tanh(pre)
    return softplus(pre)


def dense_forward(x, p):
    """activation(W x + b); ``x`` may carry leading batch dimensions."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.W.shape[1]:
        raise DimensionError(f"dense input has {x.shape[-1]} features, expected {p.W.shape[1]}")
    return _activate(x @ p.W.T + p.b, p.activation)


def dense_backward(x, out, grad_out, p):
    """Return (dx, dW, db) given the forward input/output and dL/d(out)."""
    if p.activation == "identity":
        dpre = grad_out
    elif p.activation == "tanh":
        dpre = grad_out * (1.0 - out * out)
    else:
        # softplus'(u) = sigmoid(u) = 1 - exp(-softplus(u))
        dpre = grad_out * -np.expm1(-out)
    flat_x = x.reshape(-1, x.shape[-1])
    flat_d = dpre.reshape(-1, dpre.shape[-1])
    return dpre @ p.W, flat_d.T @ flat_x, flat_d.sum(axis=0)


def lstm_cell_step(x, h_prev, c_prev, p):
    """One LSTM step for a single (unbatched) input vector."""
    x = np.asarray(x, dtype=np.float64)
    H = p.hidden_size
    if x.shape != (p.input_size,) or np.shape(h_prev) != (H,) or np.shape(c_prev) != (H,):
        raise DimensionError("lstm_cell_step shape mismatch")
    hs, cs, _ = _backend.lstm_forward(x[None, None, :], p.W, p.U, p.b,
                                      np.asarray(h_prev)[None, :], np.asarray(c_prev)[None, :])
    return hs[0, 0], cs[0, 0]


def lstm_forward(X, p, h0=None, c0=None):
    """Unroll over X (B, T, I). Returns (Hs, cache)."""
    B = X.shape[0]
    H = p.hidden_size
    if X.shape[-1] != p.input_size:
        raise DimensionError(f"LSTM input has {X.shape[-1]} features, expected {p.input_size}")
    h0 = np.zeros((B, H)) if h0 is None else h0
    c0 = np.zeros((B, H)) if c0 is None else c0
    Hs, Cs, Gs = _backend.lstm_forward(X, p.W, p.U, p.b, h0, c0)
    return Hs, (X, h0, c0, Hs, Cs, Gs)


def lstm_backward(dHs, cache, p, dcT=None):
    """BPTT; returns (dX, LstmParams of grads, dh0, dc0).

    ``dcT`` optionally feeds a gradient into the final cell state.
    """
    X, h0, c0, Hs, Cs, Gs = cache
    dX, dW, dU, db, dh0, dc0 = _backend.lstm_backward(X, p.W, p.U, h0, c0, Hs, Cs, Gs, dHs, dcT)
    return dX, LstmParams(dW, dU, db), dh0, dc0


# -- parameter collections ---------------------------------------------------

def flatten(named):
    """Concatenate a {name: array} mapping into one vector (sorted by name)."""
    return np.concatenate([np.ravel(named[k]) for k in sorted(named)])


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


@dataclass
class AdamState:
    m: dict
    v: dict
    k: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **hyper):
        return cls({n: np.zeros_like(a) for n, a in params.items()},
                   {n: np.zeros_like(a) for n, a in params.items()}, 0, **hyper)


def adam_update(params, grads, state):
    """One bias-corrected Adam step. Pure: returns (new_params, new_state)."""
    if params.keys() != grads.keys():
        raise DimensionError("parameter and gradient names differ")
    k = state.k + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** k
    c2 = 1.0 - b2 ** k
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        new_p[name] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_p, AdamState(new_m, new_v, k, state.lr, b1, b2, state.eps)


# -- sampling -----------------------------------------------------------------

def reparameterize(mu, var, eps):
    return mu + np.sqrt(var) * eps


def sample_diag_gaussian(mu, var, rng):
    """z = mu + sqrt(var) * eps with eps ~ N(0, I)."""
    mu = np.asarray(mu, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(var < 0):
        raise ValueError("variance must be non-negative")
    return reparameterize(mu, var, rng.standard_normal(mu.shape))


def finite_difference_gradient(f, named, step=1e-6):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``named``.

    ``named`` arrays are perturbed in place and restored.
    """
    out = {}
    for name, a in named.items():
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            fp = f()
            flat[i] = old - step
            fm = f()
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * step)
        out[name] = g
    return out
