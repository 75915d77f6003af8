"""Local differential geometry of point clouds."""
