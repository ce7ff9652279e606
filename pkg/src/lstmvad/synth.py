"""Synthetic multimodal feeding-like benchmark with injected anomalies.

Each execution is an approach -> contact -> retreat motion sampled at 20 Hz:
spoon position follows min-jerk segments towards the (group-specific) mouth
position, force rises during contact with contact-dependent noise, joint
torques are a fixed linear map of spoon position and force, and sound energy
is a low non-negative floor with short benign bursts.

Anomalous executions get one of six signal-level families injected at a
random onset; see ``ANOMALY_TYPES``.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .data import (ANOMALOUS, CHANNELS_17, Dataset, Execution,
                   extract_features)

ANOMALY_TYPES = (
    "force_bump",   # collision: sustained additive force with torque coupling
    "drift",        # aggressive eating: mouth drifts towards the utensil
    "audio_burst",  # environmental/user noise
    "dropout",      # face occlusion: mouth tracker drops to zero
    "deviation",    # utensil miss: lateral spoon offset, contact force lost
    "freeze",       # system freeze: kinematics and force hold their onset values
)

_SOUND, _FORCE, _TORQUE, _SPOON, _MOUTH = (slice(0, 1), slice(1, 4), slice(4, 11),
                                           slice(11, 14), slice(14, 17))


@dataclass
class BenchmarkConfig:
    n_groups: int = 8
    executions_per_group: int = 40
    anomaly_fraction: float = 0.45
    duration_s: tuple = (6.0, 8.0)
    rate_hz: float = 20.0
    layout: str = "raw17"
    anomaly_types: tuple = ANOMALY_TYPES
    magnitude: float = 1.0
    bump_std_factor: float = 5.0
    onset_range: tuple = (0.15, 0.85)
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.duration_s = tuple(self.duration_s)
        self.anomaly_types = tuple(self.anomaly_types)
        self.onset_range = tuple(self.onset_range)
        if self.n_groups < 2:
            raise ValueError("need at least 2 groups for leave-one-group-out")
        if self.executions_per_group < 1:
            raise ValueError("executions_per_group must be >= 1")
        if not 0.0 < self.anomaly_fraction < 1.0:
            raise ValueError("anomaly_fraction must lie in (0, 1)")
        if self.layout not in ("raw17", "features4"):
            raise ValueError(f"unknown layout {self.layout!r}")
        unknown = set(self.anomaly_types) - set(ANOMALY_TYPES)
        if unknown or not self.anomaly_types:
            raise ValueError(f"unknown anomaly types {sorted(unknown)}")
        lo, hi = self.duration_s
        if not 0 < lo <= hi or self.rate_hz <= 0:
            raise ValueError("invalid duration or rate")
        if self.magnitude <= 0:
            raise ValueError("magnitude must be positive")

    @property
    def n_executions(self):
        return self.n_groups * self.executions_per_group

    @property
    def n_anomalous(self):
        return int(round(self.anomaly_fraction * self.n_executions))


def _min_jerk(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return tau ** 3 * (10 - 15 * tau + 6 * tau * tau)


@dataclass
class _Mechanics:
    jac: np.ndarray    # (7, 3) torque per unit force
    grav: np.ndarray   # (7, 3) torque per unit spoon displacement
    bias: np.ndarray   # (7,)


@dataclass
class _Group:
    name: str
    mouth: np.ndarray
    force_gain: float
    sound_floor: float
    contact_at: float


def _mechanics(rng):
    return _Mechanics(rng.normal(0, 0.5, (7, 3)), rng.normal(0, 1.0, (7, 3)),
                      rng.normal(0, 0.2, 7))


def _group(rng, idx):
    return _Group(
        name=f"g{idx:02d}",
        mouth=np.array([0.55, 0.0, 1.05]) + rng.normal(0, 0.01, 3),
        force_gain=rng.uniform(0.85, 1.15),
        sound_floor=rng.uniform(0.03, 0.05),
        contact_at=0.45 + rng.normal(0, 0.015),
    )


_SPOON_HOME = np.array([0.30, -0.25, 0.80])
_CONTACT_DIR = np.array([0.8, 0.1, -0.6]) / np.linalg.norm([0.8, 0.1, -0.6])


def _clean_execution(rng, mech, grp, cfg):
    """Return (signals (n, 17), phase dict)."""
    n = int(round(rng.uniform(*cfg.duration_s) * cfg.rate_hz))
    u = np.linspace(0.0, 1.0, n)
    uc = grp.contact_at + rng.normal(0, 0.02)
    ue = uc + 0.2 + rng.normal(0, 0.015)

    mouth = (grp.mouth + rng.normal(0, 0.003, 3)
             + 0.002 * np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * u[:, None] + rng.uniform(0, 6.3, 3)))
    start = _SPOON_HOME + rng.normal(0, 0.008, 3)
    end = _SPOON_HOME + rng.normal(0, 0.008, 3)
    target = mouth[int(uc * (n - 1))] + np.array([-0.02, 0.0, 0.0])
    ta = (u / uc)[:, None]
    tr = ((u - ue) / (1.0 - ue))[:, None]
    spoon = start + _min_jerk(ta) * (target - start) + _min_jerk(tr) * (end - target)
    lift = 0.05 * (np.sin(np.pi * np.clip(ta, 0, 1)) + np.sin(np.pi * np.clip(tr, 0, 1)))
    spoon[:, 2:3] += lift

    bump = np.where((u >= uc) & (u <= ue), 0.5 * (1 - np.cos(2 * np.pi * (u - uc) / (ue - uc))), 0.0)
    amp = grp.force_gain * (1.0 + 0.12 * rng.normal())
    force = amp * bump[:, None] * _CONTACT_DIR
    force += rng.normal(0, 1, (n, 3)) * (0.015 + 0.08 * bump[:, None])

    torque = ((spoon - _SPOON_HOME) @ mech.grav.T + force @ mech.jac.T + mech.bias
              + rng.normal(0, 0.01, (n, 7)))

    sound = grp.sound_floor + np.abs(rng.normal(0, 0.004, n))
    t = u * (n - 1) / cfg.rate_hz
    for _ in range(rng.poisson(1.5)):
        centre = rng.uniform(uc, min(1.0, ue + 0.1)) * (n - 1) / cfg.rate_hz
        sound += rng.uniform(0.04, 0.12) * np.exp(-0.5 * ((t - centre) / 0.12) ** 2)

    spoon += rng.normal(0, 0.0015, spoon.shape)
    mouth = mouth + rng.normal(0, 0.003, mouth.shape)
    X = np.column_stack([sound, force, torque, spoon, mouth])
    return X, {"contact": (uc, ue), "amp": amp}


def _ramp(n, onset, width):
    k = np.arange(n) - onset
    return np.clip(k / max(width, 1), 0.0, 1.0) * (k >= 0)


def inject(X, kind, onset, rng, mech, cfg, phases):
    """Return a copy of clean signals X with anomaly ``kind`` starting at ``onset``."""
    X = X.copy()
    n = X.shape[0]
    rate = cfg.rate_hz
    mag = cfg.magnitude
    if kind == "force_bump":
        axis = rng.integers(3)
        ch = 1 + axis
        std = max(float(np.std(X[:, ch])), 0.02)
        delta = cfg.bump_std_factor * mag * std * _ramp(n, onset, int(0.25 * rate))
        X[:, ch] += delta
        X[:, _TORQUE] += np.outer(delta, mech.jac[:, axis])
    elif kind == "drift":
        env = _ramp(n, onset, int(1.5 * rate))
        shift = mag * np.array([-0.03, 0.0, 0.012])
        X[:, _MOUTH] += env[:, None] * shift
        extra = 0.4 * mag * env[:, None] * _CONTACT_DIR
        X[:, _FORCE] += extra
        X[:, _TORQUE] += extra @ mech.jac.T
    elif kind == "audio_burst":
        dur = int(rng.uniform(0.5, 1.5) * rate)
        k = np.arange(n) - onset
        env = np.where((k >= 0) & (k < dur), np.sqrt(np.maximum(np.sin(np.pi * np.clip(k, 0, dur) / dur), 0.0)), 0.0)
        X[:, 0] += 0.3 * mag * env * rng.uniform(0.8, 1.2)
    elif kind == "dropout":
        dur = int(rng.uniform(0.5, 2.0) * rate)
        X[onset:onset + dur, _MOUTH] = 0.0
    elif kind == "deviation":
        env = _ramp(n, onset, int(0.5 * rate))
        X[:, 12] += mag * 0.04 * env
        X[:, 13] += mag * 0.015 * env
        uc, ue = phases["contact"]
        u = np.linspace(0.0, 1.0, n)
        lost = (u >= uc) & (u <= ue) & (np.arange(n) >= onset)
        contact = np.zeros((n, 3))
        bump = 0.5 * (1 - np.cos(2 * np.pi * (u - uc) / (ue - uc)))
        contact[lost] = phases["amp"] * bump[lost, None] * _CONTACT_DIR
        X[:, _FORCE] -= contact
        X[:, _TORQUE] -= contact @ mech.jac.T
    elif kind == "freeze":
        held = slice(1, 14)
        hold = X[onset, held].copy()
        tail = n - onset
        noise = np.concatenate([rng.normal(0, 0.015, (tail, 3)), rng.normal(0, 0.01, (tail, 7)),
                                rng.normal(0, 0.0015, (tail, 3))], axis=1)
        X[onset:, held] = hold + noise
    else:
        raise ValueError(f"unknown anomaly type {kind!r}")
    return X


def generate_benchmark(cfg=None):
    """Build a deterministic Dataset from ``cfg`` (default BenchmarkConfig())."""
    cfg = cfg or BenchmarkConfig()
    rng = np.random.default_rng(cfg.seed)
    mech = _mechanics(rng)
    groups = [_group(rng, g) for g in range(cfg.n_groups)]

    # spread the exact anomalous count as evenly as possible over groups
    per = cfg.executions_per_group
    counts = [len(c) for c in np.array_split(np.arange(cfg.n_anomalous), cfg.n_groups)]
    counts = [min(c, per - 1) for c in counts]
    n_anom = sum(counts)
    kinds = [cfg.anomaly_types[i % len(cfg.anomaly_types)] for i in range(n_anom)]
    kinds = list(rng.permutation(kinds))

    executions = []
    k = 0
    for grp, n_a in zip(groups, counts):
        flags = np.zeros(per, dtype=bool)
        flags[rng.choice(per, n_a, replace=False)] = True
        for j in range(per):
            X, phases = _clean_execution(rng, mech, grp, cfg)
            ex_id = f"{grp.name}_e{j:03d}"
            if flags[j]:
                kind = str(kinds[k])
                k += 1
                n = X.shape[0]
                lo, hi = cfg.onset_range
                onset = int(rng.integers(int(lo * n), int(hi * n)))
                X = inject(X, kind, onset, rng, mech, cfg, phases)
                ex = Execution(ex_id, grp.name, CHANNELS_17, X, cfg.rate_hz,
                               ANOMALOUS, kind, onset)
            else:
                ex = Execution(ex_id, grp.name, CHANNELS_17, X, cfg.rate_hz)
            if cfg.layout == "features4":
                ex = extract_features(ex)
            executions.append(ex)

    splits = default_splits(executions, cfg.val_fraction, cfg.seed)
    info = {"generator": "lstmvad.synth", "config": asdict(cfg)}
    return Dataset(executions, splits, info)


def default_splits(executions, val_fraction=0.2, seed=0):
    """Hold out the last group as test; split other groups' normal executions train/val."""
    groups = sorted({e.group for e in executions})
    test_group = groups[-1]
    pool = [e.id for e in executions if e.group != test_group and not e.is_anomalous]
    rng = np.random.default_rng(seed + 7919)
    pool = [pool[i] for i in rng.permutation(len(pool))]
    n_val = max(1, int(round(val_fraction * len(pool))))
    return {
        "train": sorted(pool[n_val:]),
        "val": sorted(pool[:n_val]),
        "test": [e.id for e in executions if e.group == test_group],
    }
