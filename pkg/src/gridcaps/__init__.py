"""Power-grid load-altering-attack simulation and capsule-net localization."""

__version__ = "0.1.0"
