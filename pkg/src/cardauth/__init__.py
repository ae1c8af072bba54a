"""cardauth - timestamp-based smart-card password authentication and forgery harness."""

__version__ = "0.1.0"
