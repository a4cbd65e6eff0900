"""Fairness-aware kit allocation for two-person human-agent teams."""

__version__ = "0.1.0"
