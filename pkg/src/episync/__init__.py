"""Multi-view video synchronization from epipolar residuals of dynamic tracklets."""

__version__ = "0.1.0"
