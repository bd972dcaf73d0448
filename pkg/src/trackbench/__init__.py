"""Performance evaluation toolkit for single-target visual trackers."""

__version__ = "0.1.0"
