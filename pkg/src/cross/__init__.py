"""Scenario-adaptive mixture-of-experts RL for traffic signal control."""

__version__ = "0.1.0"
