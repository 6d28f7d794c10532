"""Evaluation toolkit for video retrieval, activity detection and captioning benchmarks."""

__version__ = "0.1.0"

from ._core import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
