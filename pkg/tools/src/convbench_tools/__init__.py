"""Companion tooling for convbench: operation-set extraction and chart rendering."""

__version__ = "0.1.0"
