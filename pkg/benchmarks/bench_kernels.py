"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
import argparse
import json
import sys
import timeit

import numpy as np

from lstmvad import _backend, _kernels_py
from lstmvad.model import LstmVae, LstmVaeConfig
from lstmvad.threshold import rbf_kernel

try:
    from lstmvad import _kernels as _compiled
except ImportError:
    _compiled = None


def cases(rng):
    B, T, D, H = 16, 140, 17, 32
    X = rng.uniform(size=(B, T, D))
    W, U = 0.1 * rng.normal(size=(4 * H, D)), 0.1 * rng.normal(size=(4 * H, H))
    b, h0, c0 = np.zeros(4 * H), np.zeros((B, H)), np.zeros((B, H))
    Hs, Cs, Gs = _backend.lstm_forward(X, W, U, b, h0, c0, impl=_kernels_py)
    dH = rng.normal(size=Hs.shape)
    Z = rng.normal(size=(1000, 3))
    K = rbf_kernel(Z, Z, 1 / 3)
    y = np.sin(Z).sum(axis=1)
    y = (y - y.mean()) / y.std()
    cfg = LstmVaeConfig(input_dim=D, seed=0)
    m = LstmVae(cfg)
    noise = 0.1 * rng.normal(size=X.shape)
    eps = rng.normal(size=(B, T, cfg.latent_dim))

    def batch_step(impl):
        prev = _backend.kernels
        _backend.kernels = impl
        try:
            m.loss_and_grad(X, noise, eps)
        finally:
            _backend.kernels = prev

    return {
        f"lstm_forward B={B} T={T} H={H}": lambda k: _backend.lstm_forward(X, W, U, b, h0, c0, impl=k),
        f"lstm_backward B={B} T={T} H={H}": lambda k: _backend.lstm_backward(X, W, U, h0, c0, Hs, Cs, Gs, dH, impl=k),
        "svr_smo n=1000": lambda k: _backend.svr_smo(K, y, 1.0, 0.1, impl=k),
        f"model loss+grad B={B} T={T} D={D}": batch_step,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the numpy fallback is available", file=sys.stderr)
    impls = {"python": _kernels_py, **({"cython": _compiled} if _compiled else {})}
    results = []
    print(f"{'case':<36} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, fn in cases(np.random.default_rng(0)).items():
        row = {"case": name}
        for label, impl in impls.items():
            fn(impl)  # warm-up
            row[label] = 1e3 * min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
        cy = row.get("cython")
        speed = row["python"] / cy if cy else float("nan")
        print(f"{name:<36} {row['python']:>10.2f} {cy if cy else float('nan'):>10.2f} {speed:>7.1f}x")
        results.append(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
