"""Synthetic review-hijacking datasets, twin-encoder pair classifiers, and catalog scoring."""

__version__ = "0.1.0"
