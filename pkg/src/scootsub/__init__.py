"""E-scooter demand forecasting and mode-substitution modeling."""

__version__ = "0.1.0"
