"""Triangulation-guided grouping of feature matches for deformable object detection."""

__version__ = "0.1.0"
