"""Pilot-wave relaxation with particle back-reaction."""
__version__ = "0.1.0"
