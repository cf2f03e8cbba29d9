"""Graph alignment benchmark toolkit."""

from galign.graph import Graph, Permutation, compose, inverse, overlap, permute

__version__ = "0.1.0"

__all__ = ["Graph", "Permutation", "compose", "inverse", "overlap", "permute"]
