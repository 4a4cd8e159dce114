"""SMIRI anytime search with baseline searchers and a benchmark harness."""

__version__ = "0.1.0"
