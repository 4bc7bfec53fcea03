"""Numerics for unified detection and tracking: attention, grounding losses,
set matching, track lifecycle and MOT metrics, plus a synthetic harness."""

__version__ = "0.1.0"
