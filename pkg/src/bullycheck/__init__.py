"""Simulation and verification of a periodic, jittered bully-style leader election."""

__version__ = "0.1.0"
