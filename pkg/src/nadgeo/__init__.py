"""Adapted-frame differential geometry on Lie d-algebroids: metric and
symplectic connections, curvature flows, and exact soliton generation."""

__version__ = "0.1.0"

from . import algebroid, connection, expr, flow, geometry, mechanics, soliton
from .algebroid import Coordinates, LieAlgebroid, NConnection, adapted_frames
from .geometry import DMetric, Lagrangian

__all__ = [
    "Coordinates",
    "DMetric",
    "Lagrangian",
    "LieAlgebroid",
    "NConnection",
    "adapted_frames",
    "algebroid",
    "connection",
    "expr",
    "flow",
    "geometry",
    "mechanics",
    "soliton",
]
