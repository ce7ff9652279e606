"""Shared detector interface and sliding-window helpers for the baselines."""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import nn
from ..model import as_batch


@dataclass
class WindowedSample:
    vector: np.ndarray  # (L * D,), time-major
    execution_id: str
    end_index: int


def windows(X, L):
    """Sliding windows of length L, one step apart.

    (T, D) -> (T - L + 1, L * D); (N, T, D) -> (N, T - L + 1, L * D).
    Rows are time-major, so the first D entries are the oldest observation.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim not in (2, 3):
        raise ValueError("expected (T, D) or (N, T, D)")
    if L < 1 or X.shape[-2] < L:
        raise ValueError(f"sequence of length {X.shape[-2]} is shorter than window {L}")
    W = sliding_window_view(X, L, axis=-2)  # (..., T-L+1, D, L)
    W = np.swapaxes(W, -1, -2)
    return np.ascontiguousarray(W.reshape(*W.shape[:-2], L * X.shape[-1]))


def window_samples(execution, L):
    W = windows(execution.signals, L)
    return [WindowedSample(w, execution.id, j + L - 1) for j, w in enumerate(W)]


class Baseline:
    """fit(train, val) on non-anomalous sequences, then per-window scores.

    A sequence is flagged at sensitivity ``c`` iff any score exceeds ``c``;
    score ``j`` belongs to step ``j + window - 1``.
    """

    name = "baseline"
    window = 1

    def fit(self, train, val):
        raise NotImplementedError

    def score_windows(self, W):
        raise NotImplementedError

    def score_batch(self, X):
        X = as_batch(X)
        W = windows(X, self.window)
        N, n, F = W.shape
        return self.score_windows(W.reshape(N * n, F)).reshape(N, n)

    def score_execution(self, execution):
        X = np.asarray(getattr(execution, "signals", execution), dtype=np.float64)
        return self.score_batch(X[None])[0]

    def step_index(self, j):
        return j + self.window - 1

    def verdict(self, execution, c):
        """(flagged, first flagged step or None)."""
        s = self.score_execution(execution)
        hit = np.flatnonzero(s > c)
        return (True, self.step_index(int(hit[0]))) if hit.size else (False, None)


@dataclass
class FitConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 30
    patience: int = 4
    min_delta: float = 1e-6
    clip_norm: float = 5.0
    seed: int = 0


def fit_adam(params, loss_grad, Xtr, Xva, cfg, rng):
    """Minibatch Adam with patience-based early stopping on validation loss.

    ``loss_grad(params, X, need_grad)`` returns (loss, grads or None).
    Returns (best params, history).
    """
    state = nn.AdamState.zeros_like(params, lr=cfg.learning_rate)
    best_val, best, since = np.inf, {k: v.copy() for k, v in params.items()}, 0
    history = []
    n = Xtr.shape[0]
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_grad(params, Xtr[idx], True)
            grads, _ = nn.clip_by_global_norm(grads, cfg.clip_norm)
            params, state = nn.adam_update(params, grads, state)
            total += loss * len(idx)
        val, _ = loss_grad(params, Xva, False)
        history.append({"epoch": epoch, "train_loss": total / n, "val_loss": float(val)})
        if val < best_val - cfg.min_delta:
            best_val, best, since = val, {k: v.copy() for k, v in params.items()}, 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    return best, history


def subsample(A, max_rows):
    """Evenly spaced rows, at most ``max_rows``."""
    if max_rows is None or A.shape[0] <= max_rows:
        return A
    keep = np.linspace(0, A.shape[0] - 1, max_rows).round().astype(int)
    return A[keep]
