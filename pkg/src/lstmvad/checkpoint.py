"""Versioned, byte-deterministic checkpoint container.

A checkpoint is a zip archive (numpy ``.npz`` layout) holding ``meta.json``
plus one ``.npy`` member per array. Member order, timestamps and
permissions are fixed, so identical content gives identical bytes.
"""
import hashlib
import io
import json
import zipfile
from dataclasses import asdict, dataclass

import numpy as np

from .baselines import BASELINES
from .data import NormStats
from .detector import Detector
from .model import LstmVae, LstmVaeConfig, ModelParams
from .threshold import regressor_from_state

FORMAT_VERSION = 1
_DATE = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    method: str
    meta: dict
    arrays: dict


def _member(name):
    info = zipfile.ZipInfo(name, date_time=_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(path, method, meta, arrays):
    body = {"format_version": FORMAT_VERSION, "method": method, **meta}
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_member("meta.json"), json.dumps(body, sort_keys=True, indent=1))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name], order="C"), allow_pickle=False)
            zf.writestr(_member(name + ".npy"), buf.getvalue())
    return path


def load_checkpoint(path):
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            arrays = {}
            for name in zf.namelist():
                if name.endswith(".npy"):
                    arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)),
                                                                 allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, OSError) as exc:
        raise CheckpointError(f"{path}: not a checkpoint ({exc})") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')}")
    return Checkpoint(meta.pop("method"), meta, arrays)


def file_hash(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _norm_arrays(norm):
    return {} if norm is None else {"norm.min": norm.min, "norm.max": norm.max}


def _norm_from(arrays):
    if "norm.min" not in arrays:
        return None
    return NormStats(arrays["norm.min"], arrays["norm.max"])


def save_detector(path, detector, extra=None):
    """LSTM-VAE weights, prior schedule, regressor and preprocessing."""
    cfg = detector.model.config
    T = detector.seq_len
    prior = cfg.prior(T) if T else None
    arrays = {f"model.{k}": v for k, v in detector.model.params.named().items()}
    arrays.update({f"regressor.{k}": v for k, v in detector.regressor.state().items()})
    arrays.update(_norm_arrays(detector.norm))
    meta = {
        "config": asdict(cfg),
        "regressor": detector.regressor.kind,
        "prior": None if prior is None else {"p1": prior.p1.tolist(), "pT": prior.pT.tolist(), "T": T},
        "channels": list(detector.channels) if detector.channels else None,
        "seq_len": T,
        **(extra or {}),
    }
    return save_checkpoint(path, "lstmvae", meta, arrays)


def _detector_from(ck):
    a = ck.arrays
    cfg = LstmVaeConfig(**ck.meta["config"])
    params = ModelParams.from_named({k[6:]: v for k, v in a.items() if k.startswith("model.")})
    reg = regressor_from_state(ck.meta["regressor"],
                               {k[10:]: v for k, v in a.items() if k.startswith("regressor.")})
    return Detector(LstmVae(cfg, params), reg, _norm_from(a), ck.meta.get("channels"),
                    ck.meta.get("seq_len"))


def save_baseline(path, baseline, norm=None, channels=None, seq_len=None, extra=None):
    arrays = {f"model.{k}": v for k, v in baseline.arrays().items()}
    arrays.update(_norm_arrays(norm))
    meta = {"config": baseline.config(), "channels": list(channels) if channels else None,
            "seq_len": seq_len, **(extra or {})}
    return save_checkpoint(path, baseline.name, meta, arrays)


@dataclass
class LoadedBaseline:
    baseline: object
    norm: object
    channels: list
    seq_len: int


def load_any(path):
    """Return a Detector (LSTM-VAE) or a LoadedBaseline, by the checkpoint's method tag."""
    ck = load_checkpoint(path)
    if ck.method == "lstmvae":
        return _detector_from(ck)
    if ck.method not in BASELINES:
        raise CheckpointError(f"{path}: unknown method {ck.method!r}")
    arrays = {k[6:]: v for k, v in ck.arrays.items() if k.startswith("model.")}
    b = BASELINES[ck.method].from_state(ck.meta["config"], arrays)
    return LoadedBaseline(b, _norm_from(ck.arrays), ck.meta.get("channels"), ck.meta.get("seq_len"))


def load_detector(path):
    ck = load_checkpoint(path)
    if ck.method != "lstmvae":
        raise CheckpointError(f"{path}: holds a {ck.method!r} model, not an LSTM-VAE")
    return _detector_from(ck)
