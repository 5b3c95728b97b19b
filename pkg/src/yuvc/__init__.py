"""Learned variable-rate video codec for raw YUV 4:2:0 content."""

__version__ = "0.1.0"
