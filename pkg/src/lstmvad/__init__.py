"""LSTM-VAE multimodal anomaly detection with baselines and an ROC harness."""
from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
