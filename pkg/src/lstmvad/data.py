"""Executions, their CSV format, and preprocessing (resampling, [0, 1] scaling, features)."""
import csv
import io
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

NON_ANOMALOUS = "non_anomalous"
ANOMALOUS = "anomalous"

CHANNELS_17 = (
    ["sound_energy"]
    + [f"force_{a}" for a in "xyz"]
    + [f"torque_{i}" for i in range(1, 8)]
    + [f"spoon_{a}" for a in "xyz"]
    + [f"mouth_{a}" for a in "xyz"]
)
CHANNELS_4 = ["sound_energy", "torque_1", "accumulated_force", "spoon_mouth_distance"]
LAYOUTS = {"raw17": CHANNELS_17, "features4": CHANNELS_4}

_FORCE = slice(1, 4)
_TORQUE1 = 4
_SPOON = slice(11, 14)
_MOUTH = slice(14, 17)


class ParseError(ValueError):
    def __init__(self, msg, path=None, line=None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.line = line


def layout_of(channels):
    for name, chans in LAYOUTS.items():
        if list(channels) == chans:
            return name
    return None


@dataclass
class Execution:
    id: str
    group: str
    channels: list
    signals: np.ndarray  # (T, D)
    rate_hz: float = 20.0
    label: str = NON_ANOMALOUS
    anomaly_type: str = None
    onset: int = None

    def __post_init__(self):
        self.signals = np.asarray(self.signals, dtype=np.float64)
        self.channels = list(self.channels)
        if self.signals.ndim != 2 or self.signals.shape[1] != len(self.channels):
            raise ValueError(f"execution {self.id}: signal matrix {self.signals.shape} "
                             f"does not match {len(self.channels)} channels")
        if not np.all(np.isfinite(self.signals)):
            raise ValueError(f"execution {self.id}: non-finite values")
        if self.label not in (NON_ANOMALOUS, ANOMALOUS):
            raise ValueError(f"execution {self.id}: unknown label {self.label!r}")
        if (self.onset is not None) != self.is_anomalous:
            raise ValueError(f"execution {self.id}: onset must be given iff anomalous")

    @property
    def is_anomalous(self):
        return self.label == ANOMALOUS

    @property
    def T(self):
        return self.signals.shape[0]

    @property
    def D(self):
        return self.signals.shape[1]

    def with_signals(self, signals, channels=None, onset=None, rate_hz=None):
        return replace(self, signals=signals,
                       channels=self.channels if channels is None else channels,
                       onset=self.onset if onset is None else onset,
                       rate_hz=self.rate_hz if rate_hz is None else rate_hz)


# -- file format --------------------------------------------------------------

def _meta_line(ex):
    return (f"# meta: id={ex.id}, group={ex.group}, label={ex.label}, "
            f"type={ex.anomaly_type or '-'}, onset={'-' if ex.onset is None else ex.onset}, "
            f"rate_hz={ex.rate_hz!r}")


def dumps_execution(ex):
    buf = io.StringIO()
    buf.write(_meta_line(ex) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ex.channels)
    for row in ex.signals:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def save_execution(ex, path):
    Path(path).write_text(dumps_execution(ex), encoding="utf-8")


def _parse_meta(line, path):
    prefix = "# meta:"
    if not line.startswith(prefix):
        raise ParseError("first line must start with '# meta:'", path, 1)
    meta = {}
    for item in line[len(prefix):].split(","):
        if "=" not in item:
            raise ParseError(f"malformed meta field {item.strip()!r}", path, 1)
        k, v = item.split("=", 1)
        meta[k.strip()] = v.strip()
    missing = {"id", "group", "label", "type", "onset", "rate_hz"} - meta.keys()
    if missing:
        raise ParseError(f"meta missing {sorted(missing)}", path, 1)
    return meta


def loads_execution(text, path=None, layout=None):
    lines = text.splitlines()
    if len(lines) < 3:
        raise ParseError("need meta line, header and at least one row", path, len(lines) or 1)
    meta = _parse_meta(lines[0], path)
    channels = next(csv.reader([lines[1]]))
    known = layout_of(channels)
    if layout is not None and known != layout:
        raise ParseError(f"header does not match layout {layout!r}", path, 2)
    if known is None and layout is None:
        raise ParseError(f"unknown channel layout with {len(channels)} columns", path, 2)
    rows = []
    for lineno, row in enumerate(csv.reader(lines[2:]), start=3):
        if not row:
            continue
        if len(row) != len(channels):
            raise ParseError(f"expected {len(channels)} values, got {len(row)}", path, lineno)
        try:
            rows.append([float(v) for v in row])
        except ValueError as e:
            raise ParseError(str(e), path, lineno) from None
    try:
        onset = None if meta["onset"] == "-" else int(meta["onset"])
        return Execution(
            id=meta["id"], group=meta["group"], channels=channels, signals=np.array(rows),
            rate_hz=float(meta["rate_hz"]), label=meta["label"],
            anomaly_type=None if meta["type"] == "-" else meta["type"], onset=onset)
    except ValueError as e:
        raise ParseError(str(e), path, 1) from None


def load_execution(path, layout=None):
    return loads_execution(Path(path).read_text(encoding="utf-8"), path=str(path), layout=layout)


# -- datasets ------------------------------------------------------------------

@dataclass
class Dataset:
    executions: list
    splits: dict = field(default_factory=dict)  # split name -> list of ids
    info: dict = field(default_factory=dict)

    def by_id(self):
        return {e.id: e for e in self.executions}

    def split(self, name):
        idx = self.by_id()
        return [idx[i] for i in self.splits[name]]

    @property
    def groups(self):
        return sorted({e.group for e in self.executions})


MANIFEST = "manifest.json"


def save_dataset(ds, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for ex in ds.executions:
        name = f"{ex.id}.csv"
        save_execution(ex, directory / name)
        files.append({"id": ex.id, "file": name, "group": ex.group, "label": ex.label})
    manifest = {"schema_version": 1, "executions": files, "splits": ds.splits, "info": ds.info}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(directory):
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    exs = [load_execution(directory / item["file"]) for item in manifest["executions"]]
    return Dataset(exs, manifest.get("splits", {}), manifest.get("info", {}))


# -- preprocessing ---------------------------------------------------------------

def resample(signals, T):
    """Linear interpolation of every channel onto T evenly spaced points."""
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim == 1:
        signals = signals[:, None]
    n = signals.shape[0]
    if n < 2:
        raise ValueError("need at least 2 source samples to resample")
    if T < 2:
        raise ValueError("target length must be >= 2")
    if n == T:
        return signals.copy()
    src = np.arange(n, dtype=np.float64)
    dst = np.linspace(0.0, n - 1.0, T)
    return np.stack([np.interp(dst, src, signals[:, d]) for d in range(signals.shape[1])], axis=1)


def resample_execution(ex, T):
    onset = None
    if ex.onset is not None:
        pos = ex.onset * (T - 1) / (ex.T - 1)
        onset = min(T - 1, int(np.ceil(pos - 1e-9)))
    rate = ex.rate_hz * (T - 1) / (ex.T - 1)
    return ex.with_signals(resample(ex.signals, T), onset=onset, rate_hz=rate)


@dataclass
class NormStats:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float64)
        self.max = np.asarray(self.max, dtype=np.float64)
        if np.any(self.max < self.min):
            raise ValueError("max < min")

    def apply(self, signals):
        span = self.max - self.min
        safe = np.where(span > 0, span, 1.0)
        out = (np.asarray(signals, dtype=np.float64) - self.min) / safe
        return np.where(span > 0, out, 0.0)


def normalize_fit(executions):
    data = np.concatenate([getattr(e, "signals", e) for e in executions], axis=0)
    return NormStats(data.min(axis=0), data.max(axis=0))


def normalize_apply(ex, stats):
    """Scale with training statistics; values outside [0, 1] are kept."""
    if isinstance(ex, Execution):
        return ex.with_signals(stats.apply(ex.signals))
    return stats.apply(ex)


def extract_features(ex):
    """17-channel execution -> [sound, torque_1, accumulated force, spoon-mouth distance]."""
    if layout_of(ex.channels) != "raw17":
        raise ValueError("feature extraction needs the 17-channel layout")
    X = ex.signals
    dt = 1.0 / ex.rate_hz
    acc = np.cumsum(np.linalg.norm(X[:, _FORCE], axis=1)) * dt
    dist = np.linalg.norm(X[:, _SPOON] - X[:, _MOUTH], axis=1)
    feats = np.column_stack([X[:, 0], X[:, _TORQUE1], acc, dist])
    return ex.with_signals(feats, channels=list(CHANNELS_4))


def preprocess(executions, T, stats=None, features=False):
    """Optional feature extraction, resampling to T, then scaling.

    Returns (processed executions, NormStats); stats are fitted on the input
    when not given.
    """
    exs = [extract_features(e) if features else e for e in executions]
    exs = [resample_execution(e, T) for e in exs]
    if stats is None:
        stats = normalize_fit(exs)
    return [normalize_apply(e, stats) for e in exs], stats


def stack(executions):
    return np.stack([e.signals for e in executions])


def dataset_hash(directory):
    """SHA-256 over every file in a dataset directory (sorted by name)."""
    import hashlib

    h = hashlib.sha256()
    for name in sorted(os.listdir(directory)):
        h.update(name.encode())
        h.update(Path(directory, name).read_bytes())
    return h.hexdigest()
