"""Bootstrap percolation on rhombus tilings: generation, dynamics, geometry checks and Monte Carlo."""

__version__ = "0.1.0"

from .dynamics import F3, TWO_NEIGHBOUR, Configuration, RuleSpec, fixpoint, step
from .graph import AdjacencyGraph, build_adjacency
from .multigrid import build_basis, build_graph, generate_patch, penrose_basis

__all__ = [
    "AdjacencyGraph",
    "Configuration",
    "F3",
    "RuleSpec",
    "TWO_NEIGHBOUR",
    "build_adjacency",
    "build_basis",
    "build_graph",
    "fixpoint",
    "generate_patch",
    "penrose_basis",
    "step",
]
