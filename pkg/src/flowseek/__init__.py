"""Reward-proportional trajectory sampling on discrete reasoning environments."""

__version__ = "0.1.0"
