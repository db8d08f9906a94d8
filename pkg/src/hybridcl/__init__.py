"""Hybrid contrastive learning with a multi-granularity DBSCAN cluster ensemble."""

__version__ = "0.1.0"
