"""gevkit: evaluation toolkit for generated interior imagery."""

__version__ = "0.1.0"
