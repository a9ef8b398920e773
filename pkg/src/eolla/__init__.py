"""XR downlink simulator with CBG-based HARQ and enhanced outer-loop link adaptation."""

__version__ = "0.1.0"
