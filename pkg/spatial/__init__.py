"""Spatial indexing: octree queries and neighbour tables."""
