"""Two-timescale design toolkit for RIS-aided massive MIMO uplinks."""

__version__ = "0.1.0"
