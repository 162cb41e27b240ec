"""Short-horizon gaze forecasting with event-conditioned tail-error evaluation."""

__version__ = "0.1.0"
