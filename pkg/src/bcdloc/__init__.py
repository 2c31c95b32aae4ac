"""Distributed multi-robot relative localization by block coordinate descent."""

__version__ = "0.1.0"
