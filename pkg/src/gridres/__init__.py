"""Outage forecasting and decision-focused resilience planning toolkit."""

__version__ = "0.1.0"
