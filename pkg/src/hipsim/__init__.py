"""Simulation and reconstruction toolkit for Poisson hyperplane processes."""

__version__ = "0.1.0"
