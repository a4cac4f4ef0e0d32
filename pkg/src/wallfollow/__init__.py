"""From-scratch classifier benchmark on the wall-following robot sensor data."""

__version__ = "0.1.0"
