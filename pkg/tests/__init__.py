"""Test package for zoomground."""
