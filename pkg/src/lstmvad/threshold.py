"""Expected-score regressors mapping a latent state z to a typical anomaly score."""
import logging
from dataclasses import dataclass

import numpy as np

from . import _backend

log = logging.getLogger(__name__)


def rbf_kernel(A, B, gamma):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


@dataclass
class SvrConfig:
    C: float = 1.0
    epsilon: float = 0.1
    gamma: float = None  # None -> 1 / latent dim
    tol: float = 1e-3
    max_iter: int = 1_000_000
    max_points: int = 3000


class SvrRegressor:
    """Epsilon-SVR with an RBF kernel.

    The dual is solved by SMO with an explicit bias. Targets are standardised
    before fitting, so ``C`` and ``epsilon`` are in units of the target's
    standard deviation and the fit is equivariant to affine rescaling of S.

        f(z) = sum_i alpha_i * exp(-gamma * |z - z_i|^2) + b
    """

    kind = "svr"

    def __init__(self, gamma=None, C=1.0, epsilon=0.1, tol=1e-3, max_iter=1_000_000, max_points=3000):
        self.gamma = gamma
        self.C = C
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter
        self.max_points = max_points
        self.support_ = None
        self.dual_coef_ = None
        self.intercept_ = None
        self.n_iter_ = 0

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.gamma, cfg.C, cfg.epsilon, cfg.tol, cfg.max_iter, cfg.max_points)

    @classmethod
    def from_support(cls, support, dual_coef, intercept, gamma):
        reg = cls(gamma=gamma)
        reg.support_ = np.atleast_2d(np.asarray(support, dtype=np.float64))
        reg.dual_coef_ = np.asarray(dual_coef, dtype=np.float64)
        reg.intercept_ = float(intercept)
        return reg

    def fit(self, Z, S):
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        S = np.asarray(S, dtype=np.float64).ravel()
        if Z.shape[0] == 0 or Z.shape[0] != S.shape[0]:
            raise ValueError("need matching, non-empty Z and S")
        if Z.shape[0] > self.max_points:
            keep = np.linspace(0, Z.shape[0] - 1, self.max_points).round().astype(int)
            Z, S = Z[keep], S[keep]
        if self.gamma is None:
            self.gamma = 1.0 / Z.shape[1]
        offset = float(np.mean(S))
        scale = float(np.std(S)) or 1.0
        K = rbf_kernel(Z, Z, self.gamma)
        beta, rho, self.n_iter_ = _backend.svr_smo(K, (S - offset) / scale, self.C, self.epsilon,
                                                   self.tol, self.max_iter)
        if self.n_iter_ >= self.max_iter:
            log.warning("SVR solver stopped at max_iter=%d before reaching tol", self.max_iter)
        nz = beta != 0.0
        self.support_ = Z[nz]
        self.dual_coef_ = scale * beta[nz]
        self.intercept_ = offset - scale * rho
        return self

    def predict(self, Z):
        if self.intercept_ is None:
            raise RuntimeError("regressor is not fitted")
        Z = np.asarray(Z, dtype=np.float64)
        flat = Z.reshape(-1, Z.shape[-1]) if Z.ndim > 1 else Z[None, :]
        if self.support_.shape[0] == 0:
            out = np.full(flat.shape[0], self.intercept_)
        else:
            out = rbf_kernel(flat, self.support_, self.gamma) @ self.dual_coef_ + self.intercept_
        return out.reshape(Z.shape[:-1]) if Z.ndim > 1 else float(out[0])

    def state(self):
        return {"support": self.support_, "dual_coef": self.dual_coef_,
                "intercept": np.array(self.intercept_), "gamma": np.array(self.gamma)}


class ConstantRegressor:
    """Fixed-threshold stand-in: the same expected score everywhere."""

    kind = "constant"

    def __init__(self, value=None):
        self.value = value

    def fit(self, Z, S):
        self.value = float(np.mean(S))
        return self

    def predict(self, Z):
        if self.value is None:
            raise RuntimeError("regressor is not fitted")
        Z = np.asarray(Z)
        if Z.ndim <= 1:
            return float(self.value)
        return np.full(Z.shape[:-1], float(self.value))

    def state(self):
        return {"value": np.array(self.value)}


def expected_score(reg, z):
    return reg.predict(z)


def regressor_from_state(kind, state):
    if kind == "constant":
        return ConstantRegressor(float(state["value"]))
    if kind == "svr":
        return SvrRegressor.from_support(state["support"], state["dual_coef"],
                                         float(state["intercept"]), float(state["gamma"]))
    raise ValueError(f"unknown regressor kind {kind!r}")
