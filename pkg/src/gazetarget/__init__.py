"""Gaze-target estimation for videoconference galleries."""

__version__ = "0.1.0"
