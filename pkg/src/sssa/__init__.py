"""SSSA: joint matrix completion and subspace clustering."""

__version__ = "0.1.0"
