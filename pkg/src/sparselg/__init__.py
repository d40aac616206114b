"""Soft-body simulation with a sparse-inverse local-global integrator and
non-smooth frictional contact."""

__version__ = "0.1.0"
