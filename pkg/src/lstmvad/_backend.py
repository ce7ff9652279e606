"""Pick the compiled kernels when available, else the numpy twin.

Set ``LSTMVAD_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("LSTMVAD_PURE_PYTHON"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py

BACKEND = "cython" if kernels is not _kernels_py else "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def lstm_forward(X, W, U, b, h0, c0, impl=None):
    """Unroll over X (B, T, I); returns (Hs, Cs, Gs)."""
    k = impl or kernels
    XW = _c(X) @ _c(W).T + b
    return k.lstm_forward(_c(XW), _c(U), _c(h0), _c(c0))


def lstm_backward(X, W, U, h0, c0, Hs, Cs, Gs, dHs, dcT=None, impl=None):
    """Returns (dX, dW, dU, db, dh0, dc0); ``dcT`` is the gradient at the last cell state."""
    k = impl or kernels
    dcT = np.zeros_like(_c(c0)) if dcT is None else _c(dcT)
    dpre, dh0, dc0 = k.lstm_backward(_c(U), _c(c0), _c(Cs), _c(Gs), _c(dHs), dcT)
    B, T, G4 = dpre.shape
    X = _c(X)
    hprev = np.concatenate([_c(h0)[:, None, :], Hs[:, :-1]], axis=1)
    flat = dpre.reshape(-1, G4)
    dW = flat.T @ X.reshape(B * T, -1)
    dU = flat.T @ hprev.reshape(B * T, -1)
    db = flat.sum(axis=0)
    dX = dpre @ W
    return dX, dW, dU, db, dh0, dc0


def svr_smo(K, y, C, epsilon, tol=1e-3, max_iter=1_000_000, impl=None):
    """Solve the epsilon-SVR dual; returns (dual coefficients, rho, iterations)."""
    k = impl or kernels
    coef, rho, it = k.svr_smo(_c(K), _c(y), float(C), float(epsilon), float(tol), int(max_iter))
    return np.asarray(coef), float(rho), int(it)
