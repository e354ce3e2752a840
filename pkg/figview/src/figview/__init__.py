"""Post-hoc figure generation for qfilt scaling tables."""

__version__ = "0.1.0"
