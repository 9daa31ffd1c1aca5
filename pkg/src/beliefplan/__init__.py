"""Closed-loop planning agent that pairs a language model with a classical
planner in a partially observable household simulator."""

__version__ = "0.1.0"
