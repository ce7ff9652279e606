"""Comparison detectors sharing one fit / score interface."""
from .ae import AeConfig, AutoencoderBaseline
from .base import Baseline, WindowedSample, window_samples, windows
from .encdecad import EncDecAdBaseline, EncDecConfig, ErrorModel
from .osvm import OneClassSvm, OsvmBaseline, OsvmConfig, osvm_score, osvm_train
from .rand import RandomBaseline, random_detector

BASELINES = {
    "random": RandomBaseline,
    "osvm": OsvmBaseline,
    "ae": AutoencoderBaseline,
    "encdecad": EncDecAdBaseline,
}

__all__ = [
    "AeConfig", "AutoencoderBaseline", "BASELINES", "Baseline", "EncDecAdBaseline",
    "EncDecConfig", "ErrorModel", "OneClassSvm", "OsvmBaseline", "OsvmConfig",
    "RandomBaseline", "WindowedSample", "osvm_score", "osvm_train", "random_detector",
    "window_samples", "windows",
]
