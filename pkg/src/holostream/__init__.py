"""Real-time inline holographic microscopy reconstruction with live zoom."""

__version__ = "0.1.0"
