"""Learned device placement for dataflow graphs."""

__version__ = "0.1.0"
