"""Deterministic multi-robot grid exploration: simulator, macro-action
recurrent Q-learning with centralized training, classical baselines, and a
reproducible evaluation harness."""

__version__ = "0.1.0"
