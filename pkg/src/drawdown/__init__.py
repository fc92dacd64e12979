"""Consumption-investment optimizer with a drawdown constraint on consumption."""

__version__ = "0.1.0"
