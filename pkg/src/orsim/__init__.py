"""Operating-room risk simulation coupled with case-based reasoning."""

__version__ = "0.1.0"
