"""RANDOM: a data-independent coin whose bias is the sensitivity knob."""
import zlib

import numpy as np

from .base import Baseline


def random_detector(execution, rng, weight):
    """Flag with probability ``weight``."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    return bool(rng.random() < weight)


class RandomBaseline(Baseline):
    """Each sequence gets one uniform draw u; flagged at c iff u > c, i.e. weight = 1 - c.

    The draw is seeded from the sequence bytes so scores do not depend on
    evaluation order.
    """

    name = "random"
    window = 1

    def __init__(self, seed=0):
        self.seed = seed

    def fit(self, train, val):
        return self

    def _draw(self, X):
        key = zlib.crc32(np.ascontiguousarray(X, dtype=np.float64).tobytes())
        return np.random.default_rng([self.seed, key]).random()

    def score_batch(self, X):
        X = np.asarray([getattr(x, "signals", x) for x in X] if isinstance(X, list) else X)
        if X.ndim == 2:
            X = X[None]
        return np.stack([np.full(x.shape[0], self._draw(x)) for x in X])

    def config(self):
        return {"seed": self.seed}

    def arrays(self):
        return {}

    @classmethod
    def from_state(cls, config, arrays):
        return cls(**config)
