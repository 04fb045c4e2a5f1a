"""Preference-aware assistive policy learning on a planar two-agent task."""

__version__ = "0.1.0"
