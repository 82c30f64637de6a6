"""Coupled Stokes-Darcy flow solved through an interface flux formulation."""

__version__ = "0.1.0"
