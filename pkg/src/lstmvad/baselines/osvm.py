"""One-class SVM on sliding windows, solved in the dual by SMO.

Dual (unnormalised): min 0.5 a'Ka  s.t.  0 <= a_i <= 1,  sum a = nu * n.
Decision value f(x) = (sum_i a_i k(x_i, x) - rho) / (nu * n); negative means outside.
"""
from dataclasses import asdict, dataclass

import numpy as np

from ..model import as_batch
from ..threshold import rbf_kernel
from .base import Baseline, subsample, windows

TAU = 1e-12  # curvature floor for degenerate (e.g. duplicated) points


@dataclass
class OsvmConfig:
    nu: float = 0.1
    gamma: float = None  # None -> 1 / (n_features * variance)
    window: int = 3
    max_train: int = 2000
    tol: float = 1e-3
    max_iter: int = 100000


def one_class_smo(K, nu, tol=1e-3, max_iter=100000):
    """Return (alpha scaled to sum to 1, rho scaled likewise, iterations)."""
    n = K.shape[0]
    if not 0.0 < nu <= 1.0:
        raise ValueError("nu must lie in (0, 1]")
    total = min(nu * n, float(n))
    alpha = np.zeros(n)
    full = int(np.floor(total))
    alpha[:full] = 1.0
    if full < n:
        alpha[full] = total - full
    G = K @ alpha
    diag = np.diag(K).copy()
    it = 0
    while it < max_iter:
        up = alpha < 1.0
        low = alpha > 0.0
        if not up.any() or not low.any():
            break
        Gu = np.where(up, G, np.inf)
        i = int(np.argmin(Gu))
        cand = low & (G > G[i])
        gap = np.max(np.where(low, G, -np.inf)) - G[i]
        if gap < tol or not cand.any():
            break
        b = G - G[i]
        a = np.maximum(diag[i] + diag - 2.0 * K[i], TAU)
        j = int(np.argmax(np.where(cand, b * b / a, -np.inf)))
        delta = min(b[j] / a[j], 1.0 - alpha[i], alpha[j])
        alpha[i] += delta
        alpha[j] -= delta
        G += delta * (K[:, i] - K[:, j])
        it += 1
    free = (alpha > 0.0) & (alpha < 1.0)
    if free.any():
        rho = float(np.mean(G[free]))
    else:
        hi = G[alpha >= 1.0].max() if (alpha >= 1.0).any() else -np.inf
        lo = G[alpha <= 0.0].min() if (alpha <= 0.0).any() else np.inf
        rho = float(0.5 * (hi + lo)) if np.isfinite(hi) and np.isfinite(lo) else float(
            hi if np.isfinite(hi) else lo)
    return alpha / total, rho / total, it


class OneClassSvm:
    def __init__(self, nu=0.1, gamma=None, tol=1e-3, max_iter=100000):
        self.nu = nu
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.support_ = None
        self.dual_coef_ = None
        self.rho_ = None
        self.n_iter_ = 0

    def fit(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.gamma is None:
            var = float(X.var())
            self.gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        K = rbf_kernel(X, X, self.gamma)
        alpha, self.rho_, self.n_iter_ = one_class_smo(K, self.nu, self.tol, self.max_iter)
        sv = alpha > 0.0
        self.support_ = X[sv]
        self.dual_coef_ = alpha[sv]
        self.n_train_ = X.shape[0]
        return self

    @property
    def support_fraction(self):
        return self.support_.shape[0] / self.n_train_

    def decision_function(self, X):
        if self.rho_ is None:
            raise RuntimeError("one-class SVM is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], 4096):
            out[s:s + 4096] = rbf_kernel(X[s:s + 4096], self.support_, self.gamma) @ self.dual_coef_
        return out - self.rho_


def osvm_train(windows_, nu, gamma=None):
    return OneClassSvm(nu, gamma).fit(windows_)


def osvm_score(model, window):
    return model.decision_function(window)


class OsvmBaseline(Baseline):
    """Score = negated decision value, so c = 0 is the plain any-window-outside rule."""

    name = "osvm"

    def __init__(self, config=None):
        self.cfg = config or OsvmConfig()
        self.window = self.cfg.window
        self.svm = None

    def _train_windows(self, train):
        W = windows(as_batch(train), self.window)
        return subsample(W.reshape(-1, W.shape[-1]), self.cfg.max_train)

    def fit(self, train, val=None):
        c = self.cfg
        self.svm = OneClassSvm(c.nu, c.gamma, c.tol, c.max_iter).fit(self._train_windows(train))
        return self

    def with_nu(self, train, nu):
        """Refit at another nu; the knob behind a nu sweep."""
        cfg = OsvmConfig(**{**asdict(self.cfg), "nu": nu})
        return OsvmBaseline(cfg).fit(train)

    def score_windows(self, W):
        return -self.svm.decision_function(W)

    def config(self):
        return asdict(self.cfg)

    def arrays(self):
        s = self.svm
        return {"support": s.support_, "dual_coef": s.dual_coef_, "rho": np.array(s.rho_),
                "gamma": np.array(s.gamma), "n_train": np.array(s.n_train_)}

    @classmethod
    def from_state(cls, config, arrays):
        b = cls(OsvmConfig(**config))
        s = OneClassSvm(b.cfg.nu, float(arrays["gamma"]), b.cfg.tol, b.cfg.max_iter)
        s.support_ = np.asarray(arrays["support"])
        s.dual_coef_ = np.asarray(arrays["dual_coef"])
        s.rho_ = float(arrays["rho"])
        s.n_train_ = int(arrays["n_train"])
        b.svm = s
        return b
