"""Morse and Maslov index computations for colliding homothetic n-body orbits."""

from .central_config import CentralConfiguration, SpiralClass, SpiralTag, classify, find_cc, synthetic_cc
from .mcgehee import HomotheticOrbit, reduced_flow
from .nbody_core import MassSystem
from .symplectic import LagrangianFrame, SymplecticPath, integrate_linear, maslov_index

__all__ = [
    "CentralConfiguration",
    "HomotheticOrbit",
    "LagrangianFrame",
    "MassSystem",
    "SpiralClass",
    "SpiralTag",
    "SymplecticPath",
    "classify",
    "find_cc",
    "integrate_linear",
    "maslov_index",
    "reduced_flow",
    "synthetic_cc",
]

__version__ = "0.1.0"
