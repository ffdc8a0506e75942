"""Simulation toolkit for fiber-coupled type-II down-conversion sources and
dispersive-fiber joint-spectrum measurements."""

__version__ = "0.1.0"
