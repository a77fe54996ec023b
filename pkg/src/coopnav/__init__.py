"""Cooperative human-robot navigation: simulator, perception models, planner."""

__version__ = "0.1.0"
