"""Concurrent-binary-tree memory pool and adaptive bisection triangulation."""

from .cbt import Cbt
from .halfedge import HalfedgeMesh, load_obj, validate
from .pipeline import ParallelEngine, UpdateStats
from .sequential import decimate, initialize, refine
from .state import TriangulationState

__version__ = "0.1.0"

__all__ = [
    "Cbt",
    "HalfedgeMesh",
    "load_obj",
    "validate",
    "ParallelEngine",
    "UpdateStats",
    "TriangulationState",
    "initialize",
    "refine",
    "decimate",
    "__version__",
]
