"""Numerics for parabolic Morrey norms, Riesz potentials, divergence-form energy estimates and SDE flows."""

__version__ = "0.1.0"

from .grid import ExponentialWeight, GridField, ParabolicCylinder, SpaceTimeGrid, cylinder_mean
from .riesz import KernelSpec

__all__ = ["__version__", "ExponentialWeight", "GridField", "ParabolicCylinder", "SpaceTimeGrid",
           "cylinder_mean", "KernelSpec"]
