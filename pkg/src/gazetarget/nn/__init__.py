"""Numeric core and the gaze regressor."""
