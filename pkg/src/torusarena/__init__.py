"""torusarena: deterministic two-team block-assembly simulation on a torus grid.

The package bundles a seeded synchronous world simulator, the full strategy
stack of one team (identification, map building and merging, cartography,
cached optimal local planning, task-assembly roles and bullies), an
explicit-state checker for the map-merge protocol, and a CLI harness for
running, replaying and verifying matches.
"""

from .torus import Dims, diamond_cells, delta, torus_distance, wrap

__version__ = "0.1.0"

__all__ = [
    "Dims",
    "diamond_cells",
    "delta",
    "torus_distance",
    "wrap",
    "__version__",
]
