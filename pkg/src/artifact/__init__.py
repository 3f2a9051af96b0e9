"""Artifact detection and repair toolkit for virtual try-on and pose transfer."""

__version__ = "0.1.0"
