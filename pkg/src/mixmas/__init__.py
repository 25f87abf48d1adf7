"""Sampling-based mixer architecture search for multimodal classification."""

__version__ = "0.1.0"

from .errors import MixmasError  # noqa: F401
