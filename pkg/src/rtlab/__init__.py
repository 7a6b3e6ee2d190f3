"""Simulation and convergence certification for run-and-tumble kinetics."""
__version__ = "0.1.0"
